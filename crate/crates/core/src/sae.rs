//! Autoencoder training with latent matching losses.
//!
//! One round encodes a minibatch `z̃ = Q(x)`, decodes `x̃ = G(z̃)`, and takes an
//! optimizer step on `D + β·S` where `D = (1/M) Σ ‖x_i − x̃_i‖_p^p` and `S`
//! depends on the variant:
//!
//! - `sae`: debiased sharp Sinkhorn divergence between `z̃` and fresh prior
//!   samples, differentiated through the unrolled solver;
//! - `hae`: average cost of the exact Hungarian matching (the matching is held
//!   fixed in the backward pass);
//! - `w2gae`: closed-form `W₂²` between the batch moments of `z̃` and `N(0, I)`;
//! - `encoder_only`: no decoder term, only the cross transport cost
//!   `(1/M)⟨R*, C̃⟩`.
//!
//! `β` plays the role of `γ^p` when the `p`-th roots of the objective are dropped.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diff::ops::{cost_matrix_var, moments_var, transport_term_var, w2_gaussian_squared_var};
use crate::diff::{Tape, Var};
use crate::error::{OtError, Result};
use crate::exact::{hungarian, permutation_cost};
use crate::gaussian::GaussianParams;
use crate::measures::{cost_matrix, format_f64, CostMatrix, CostSpec, PointCloud};
use crate::nets::{Activation, Head, Mlp, OptimizerKind, OptimizerState};
use crate::priors::{sample_with, seeded_rng, PriorSpec};
use crate::sinkhorn::{sharp_cost, sinkhorn_log, SinkhornParams, DEFAULT_TOL};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sae,
    Hae,
    W2gae,
    EncoderOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_p() -> f64 {
    2.0
}

fn default_activation() -> Activation {
    Activation::Relu
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeConfig {
    pub variant: Variant,
    /// Sinkhorn regularizer.
    pub epsilon: f64,
    /// Sinkhorn iteration cap `L`.
    pub iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub beta: f64,
    /// Exponent of both the reconstruction and the latent cost.
    #[serde(default = "default_p")]
    pub p: f64,
    pub batch_size: usize,
    pub prior: PriorSpec,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub seed: u64,
    /// Record elapsed seconds per round. Off by default so logs are reproducible bit for bit.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl SaeConfig {
    /// Every problem with the configuration, one message per offending field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let needs_sinkhorn = matches!(self.variant, Variant::Sae | Variant::EncoderOnly);
        if needs_sinkhorn && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            out.push(format!("epsilon: must be > 0, got {}", self.epsilon));
        }
        if needs_sinkhorn && self.iters == 0 {
            out.push("iters: must be >= 1".to_string());
        }
        if !(self.tol >= 0.0) {
            out.push(format!("tol: must be >= 0, got {}", self.tol));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            out.push(format!("beta: must be >= 0, got {}", self.beta));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            out.push(format!("p: must be >= 1, got {}", self.p));
        }
        if self.batch_size < 2 {
            out.push(format!("batch_size: must be >= 2, got {}", self.batch_size));
        }
        if let Err(e) = self.prior.validate() {
            out.push(format!("prior: {e}"));
        }
        if self.variant == Variant::W2gae
            && !matches!(self.prior, PriorSpec::GaussianStandard { .. })
        {
            out.push("prior: w2gae requires a gaussian_standard prior".to_string());
        }
        if self.encoder_hidden.contains(&0) {
            out.push("encoder_hidden: layer widths must be positive".to_string());
        }
        if self.decoder_hidden.contains(&0) {
            out.push("decoder_hidden: layer widths must be positive".to_string());
        }
        if !(self.optimizer.lr >= 0.0 && self.optimizer.lr.is_finite()) {
            out.push(format!(
                "optimizer.lr: must be >= 0, got {}",
                self.optimizer.lr
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(OtError::invalid(problems.join("; ")))
        }
    }

    pub fn sinkhorn_params(&self) -> SinkhornParams {
        SinkhornParams {
            epsilon: self.epsilon,
            max_iters: self.iters,
            tol: self.tol,
        }
    }

    pub fn cost_spec(&self) -> Result<CostSpec> {
        CostSpec::new(self.p)
    }

    pub fn latent_head(&self) -> Head {
        match self.prior {
            PriorSpec::SphereUniform { .. } => Head::L2Normalize,
            PriorSpec::Dirichlet { .. } => Head::Softmax,
            PriorSpec::GaussianStandard { .. } | PriorSpec::SquareUniform => Head::Linear,
        }
    }
}

/// A complete training run: the dataset to generate and the trainer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub dataset: crate::datasets::DatasetSpec,
    pub sae: SaeConfig,
}

impl TrainSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| OtError::invalid(format!("config: {e}")))?;
        spec.sae.validate()?;
        Ok(spec)
    }

    pub fn run(&self) -> Result<TrainOutcome> {
        train(&self.sae, &self.dataset.generate()?)
    }
}

/// Encoder `Q` and decoder `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Autoencoder {
    pub fn init<R: rand::Rng + ?Sized>(
        cfg: &SaeConfig,
        input_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let latent = cfg.prior.dim();
        let enc_sizes: Vec<usize> = std::iter::once(input_dim)
            .chain(cfg.encoder_hidden.iter().copied())
            .chain([latent])
            .collect();
        let dec_sizes: Vec<usize> = std::iter::once(latent)
            .chain(cfg.decoder_hidden.iter().copied())
            .chain([input_dim])
            .collect();
        let encoder = Mlp::new(&enc_sizes, cfg.activation, cfg.latent_head(), rng)?;
        let decoder = Mlp::new(&dec_sizes, cfg.activation, Head::Linear, rng)?;
        Ok(Self { encoder, decoder })
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params(&self) -> Vec<Matrix> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn set_params(&mut self, params: &[Matrix]) -> Result<()> {
        let k = self.encoder.param_count();
        if params.len() != k + self.decoder.param_count() {
            return Err(OtError::invalid(
                "parameter count does not match the autoencoder",
            ));
        }
        self.encoder.set_params(&params[..k])?;
        self.decoder.set_params(&params[k..])
    }
}

/// Recorded loss terms of one round.
pub struct LossTerms<'t> {
    pub reconstruction: Var<'t>,
    pub latent: Var<'t>,
    pub total: Var<'t>,
}

/// Sharp cross-term of the entropic plan between two fixed clouds.
fn plain_transport_term(
    a: &PointCloud,
    b: &PointCloud,
    spec: CostSpec,
    params: SinkhornParams,
) -> Result<f64> {
    let c: CostMatrix = cost_matrix(a, b, spec)?;
    let rep = sinkhorn_log(&c, params)?;
    sharp_cost(&rep.coupling, &c)
}

/// Records `D`, `S` and `D + β·S` for one minibatch. `params` are laid out
/// as [`Autoencoder::params`].
pub fn round_loss<'t>(
    cfg: &SaeConfig,
    ae: &Autoencoder,
    tape: &'t Tape,
    params: &[Var<'t>],
    x: &PointCloud,
    z: &PointCloud,
) -> Result<LossTerms<'t>> {
    if x.len() != z.len() {
        return Err(OtError::invalid(format!(
            "data batch has {} rows but prior batch has {}",
            x.len(),
            z.len()
        )));
    }
    let m = x.len() as f64;
    let spec = cfg.cost_spec()?;
    let k = ae.encoder.param_count();
    let xv = tape.leaf(x.matrix().clone());
    let zv = tape.leaf(z.matrix().clone());
    let z_tilde = ae.encoder.forward_var(&params[..k], xv)?;

    let reconstruction = if cfg.variant == Variant::EncoderOnly {
        tape.scalar(0.0)
    } else {
        let x_tilde = ae.decoder.forward_var(&params[k..], z_tilde)?;
        (xv - x_tilde).pow_abs(spec.p()).sum().scale(1.0 / m)
    };

    let latent = match cfg.variant {
        Variant::Sae => {
            let sp = cfg.sinkhorn_params();
            let cross = transport_term_var(z_tilde, zv, spec, sp)?;
            let self_q = transport_term_var(z_tilde, z_tilde, spec, sp)?;
            // the prior batch is constant, so its self-term is solved off-tape
            let self_p = plain_transport_term(z, z, spec, sp)?;
            cross - self_q.offset(self_p).scale(0.5)
        }
        Variant::EncoderOnly => transport_term_var(z_tilde, zv, spec, cfg.sinkhorn_params())?,
        Variant::Hae => {
            let c = cost_matrix_var(z_tilde, zv, spec);
            let cm = CostMatrix::from_matrix(c.value(), spec)?;
            let assignment = hungarian(&cm)?;
            let select = tape.leaf(assignment.permutation_matrix());
            (c * select).sum().scale(1.0 / m)
        }
        Variant::W2gae => {
            let (mean, cov) = moments_var(z_tilde)?;
            w2_gaussian_squared_var(mean, cov, &GaussianParams::standard(cfg.prior.dim()))?
        }
    };
    let total = reconstruction + latent.scale(cfg.beta);
    Ok(LossTerms {
        reconstruction,
        latent,
        total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// `D`
    pub reconstruction: f64,
    /// `S`
    pub latent: f64,
    pub total: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<RoundRecord>,
}

impl TrainLog {
    pub const HEADER: [&'static str; 5] = ["round", "D", "S", "total", "seconds"];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(Self::HEADER)?;
        for r in &self.records {
            wtr.write_record([
                r.round.to_string(),
                format_f64(r.reconstruction),
                format_f64(r.latent),
                format_f64(r.total),
                format_f64(r.seconds),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }
}

/// One optimizer step on `D + β·S` for the given data and prior batches.
pub fn training_round(
    cfg: &SaeConfig,
    ae: &mut Autoencoder,
    opt: &mut OptimizerState,
    x: &PointCloud,
    z: &PointCloud,
    round: usize,
) -> Result<RoundRecord> {
    let start = cfg.record_wall_time.then(Instant::now);
    let params = ae.params();
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let terms = round_loss(cfg, ae, &tape, &vars, x, z)?;
    let (d, s, total) = (
        terms.reconstruction.item(),
        terms.latent.item(),
        terms.total.item(),
    );
    for (name, v) in [
        ("reconstruction term D", d),
        ("latent term S", s),
        ("total loss", total),
    ] {
        if !v.is_finite() {
            return Err(OtError::NumericInstability(format!(
                "{name} is not finite at round {round}"
            )));
        }
    }
    tape.check_finite()?;
    let grads = tape.backward(terms.total);
    let grads: Vec<Matrix> = vars.iter().map(|v| grads.wrt(*v)).collect();
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(OtError::NumericInstability(format!(
            "gradient is not finite at round {round}"
        )));
    }
    drop(vars);
    let mut params = params;
    opt.step(&mut params, &grads)?;
    ae.set_params(&params)?;
    let seconds = start.map_or(0.0, |s| s.elapsed().as_secs_f64());
    Ok(RoundRecord {
        round,
        reconstruction: d,
        latent: s,
        total,
        seconds,
    })
}

pub struct TrainOutcome {
    pub model: Autoencoder,
    pub initial: Autoencoder,
    pub log: TrainLog,
}

/// Full run: per-epoch shuffles and fresh prior batches, all drawn from the
/// stream seeded by `cfg.seed`. Trailing rows that do not fill a batch are skipped.
pub fn train(cfg: &SaeConfig, dataset: &PointCloud) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.len() < cfg.batch_size {
        return Err(OtError::invalid(format!(
            "dataset has {} rows, fewer than batch_size {}",
            dataset.len(),
            cfg.batch_size
        )));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut ae = Autoencoder::init(cfg, dataset.dim(), &mut rng)?;
    let initial = ae.clone();
    let mut opt = OptimizerState::new(cfg.optimizer.kind, cfg.optimizer.lr, &ae.params());
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let data = dataset.matrix();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks_exact(cfg.batch_size) {
            let x = PointCloud::new(Matrix::from_fn(chunk.len(), data.ncols(), |i, j| {
                data[(chunk[i], j)]
            }))?;
            let z = sample_with(&cfg.prior, cfg.batch_size, &mut rng)?;
            let round = log.records.len();
            log.records
                .push(training_round(cfg, &mut ae, &mut opt, &x, &z, round)?);
        }
    }
    Ok(TrainOutcome {
        model: ae,
        initial,
        log,
    })
}

/// Checks that, over all permutations, maximizing `Tr(R Z Fᵀ)` and
/// minimizing the squared Euclidean matching cost select the same set,
/// for unit-norm rows of `Z` and `F`.
pub fn nat_equivalence_check(z: &PointCloud, f: &PointCloud) -> Result<bool> {
    if z.len() != f.len() || z.dim() != f.dim() {
        return Err(OtError::invalid("Z and F must have the same shape"));
    }
    let m = z.len();
    if m > 7 {
        return Err(OtError::invalid(format!(
            "brute force limited to M <= 7, got {m}"
        )));
    }
    for (name, c) in [("Z", z), ("F", f)] {
        for i in 0..m {
            let n = c.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(OtError::invalid(format!(
                    "row {i} of {name} is not unit norm"
                )));
            }
        }
    }
    let zf = z.matrix() * f.matrix().transpose();
    let cost = cost_matrix(f, z, CostSpec::squared_euclidean())?;
    let mut perm: Vec<usize> = (0..m).collect();
    let mut traces = Vec::new();
    let mut costs = Vec::new();
    let mut perms = Vec::new();
    loop {
        // R[i, π(i)] = 1, so Tr(R Z Fᵀ) = Σ_i (Z Fᵀ)[π(i), i]
        traces.push(
            perm.iter()
                .enumerate()
                .map(|(i, &j)| zf[(j, i)])
                .sum::<f64>(),
        );
        costs.push(permutation_cost(cost.values(), &perm));
        perms.push(perm.clone());
        if !crate::exact::next_permutation(&mut perm) {
            break;
        }
    }
    let best_trace = traces.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (m as f64).max(1.0);
    let argmax: Vec<usize> = (0..perms.len())
        .filter(|&k| traces[k] >= best_trace - tol)
        .collect();
    let argmin: Vec<usize> = (0..perms.len())
        .filter(|&k| costs[k] <= best_cost + tol)
        .collect();
    Ok(argmax == argmin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::finite_difference_check;
    use crate::priors::sample;
    use rand::Rng;

    fn toy_cfg(variant: Variant) -> SaeConfig {
        SaeConfig {
            variant,
            epsilon: 0.5,
            iters: 100,
            tol: 1e-9,
            beta: 1.0,
            p: 2.0,
            batch_size: 8,
            prior: PriorSpec::GaussianStandard { dim: 2 },
            encoder_hidden: vec![6],
            decoder_hidden: vec![6],
            activation: Activation::Tanh,
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Adam,
                lr: 1e-3,
            },
            epochs: 2,
            seed: 0,
            record_wall_time: false,
        }
    }

    fn data(n: usize, d: usize, seed: u64) -> PointCloud {
        let mut rng = seeded_rng(seed);
        PointCloud::new(Matrix::from_fn(n, d, |_, _| {
            rng.random::<f64>() * 2.0 - 1.0
        }))
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut cfg = toy_cfg(Variant::Sae);
        cfg.optimizer.lr = 0.0;
        let out = train(&cfg, &data(24, 3, 1)).unwrap();
        assert_eq!(out.model, out.initial);
        assert_eq!(out.log.records.len(), 6);
    }

    #[test]
    fn zero_epochs_gives_empty_log() {
        let mut cfg = toy_cfg(Variant::Sae);
        cfg.epochs = 0;
        let out = train(&cfg, &data(24, 3, 1)).unwrap();
        assert!(out.log.records.is_empty());
        assert_eq!(out.model, out.initial);
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        for v in [
            Variant::Sae,
            Variant::Hae,
            Variant::W2gae,
            Variant::EncoderOnly,
        ] {
            let cfg = toy_cfg(v);
            let a = train(&cfg, &data(32, 3, 2)).unwrap();
            let b = train(&cfg, &data(32, 3, 2)).unwrap();
            assert_eq!(a.log, b.log);
            assert_eq!(a.model, b.model);
        }
    }

    #[test]
    fn recorded_total_is_decomposed() {
        for v in [
            Variant::Sae,
            Variant::Hae,
            Variant::W2gae,
            Variant::EncoderOnly,
        ] {
            let mut cfg = toy_cfg(v);
            cfg.beta = 3.7;
            let out = train(&cfg, &data(32, 3, 3)).unwrap();
            for r in &out.log.records {
                assert!((r.total - (r.reconstruction + cfg.beta * r.latent)).abs() <= 1e-12);
                if v == Variant::EncoderOnly {
                    assert_eq!(r.reconstruction, 0.0);
                }
            }
        }
    }

    #[test]
    fn latent_term_vanishes_on_permuted_prior() {
        let cfg = SaeConfig {
            tol: 1e-13,
            iters: 2000,
            ..toy_cfg(Variant::Sae)
        };
        let ae = Autoencoder::init(&cfg, 3, &mut seeded_rng(4)).unwrap();
        let x = data(8, 3, 5);
        let z_tilde = ae.encoder.forward(&x).unwrap();
        let rows = z_tilde.rows();
        let perm = [3, 0, 7, 1, 6, 2, 5, 4];
        let z = PointCloud::from_rows(&perm.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>())
            .unwrap();
        let tape = Tape::new();
        let vars: Vec<_> = ae.params().into_iter().map(|p| tape.leaf(p)).collect();
        let terms = round_loss(&cfg, &ae, &tape, &vars, &x, &z).unwrap();
        assert!(terms.latent.item().abs() <= 1e-9, "{}", terms.latent.item());
    }

    #[test]
    fn beta_zero_reduces_to_reconstruction_gradient() {
        let cfg = SaeConfig {
            beta: 0.0,
            ..toy_cfg(Variant::Sae)
        };
        let ae = Autoencoder::init(&cfg, 3, &mut seeded_rng(6)).unwrap();
        let x = data(8, 3, 7);
        let z = sample(&cfg.prior, 8, 8).unwrap();
        let (_, full) = crate::diff::grad(&ae.params(), |t, p| {
            Ok(round_loss(&cfg, &ae, t, p, &x, &z)?.total)
        })
        .unwrap();
        let (_, rec) = crate::diff::grad(&ae.params(), |t, p| {
            Ok(round_loss(&cfg, &ae, t, p, &x, &z)?.reconstruction)
        })
        .unwrap();
        for (a, b) in full.iter().zip(&rec) {
            assert!((a - b).amax() <= 1e-10);
        }
    }

    #[test]
    fn hae_gradient_with_frozen_matching() {
        let cfg = toy_cfg(Variant::Hae);
        let ae = Autoencoder::init(&cfg, 3, &mut seeded_rng(9)).unwrap();
        let x = data(8, 3, 10);
        let z = sample(&cfg.prior, 8, 11).unwrap();
        let rep = finite_difference_check(
            &ae.params(),
            |t, p| Ok(round_loss(&cfg, &ae, t, p, &x, &z)?.total),
            1e-6,
        )
        .unwrap();
        assert!(rep.max_rel_error <= 1e-4, "{}", rep.max_rel_error);
    }

    #[test]
    fn w2gae_and_encoder_only_gradients() {
        for v in [Variant::W2gae, Variant::EncoderOnly] {
            let cfg = SaeConfig {
                tol: 0.0,
                ..toy_cfg(v)
            };
            let ae = Autoencoder::init(&cfg, 3, &mut seeded_rng(12)).unwrap();
            let x = data(8, 3, 13);
            let z = sample(&cfg.prior, 8, 14).unwrap();
            let rep = finite_difference_check(
                &ae.params(),
                |t, p| Ok(round_loss(&cfg, &ae, t, p, &x, &z)?.total),
                1e-5,
            )
            .unwrap();
            assert!(rep.max_rel_error <= 1e-3, "{v:?}: {}", rep.max_rel_error);
        }
    }

    #[test]
    fn config_problems_list_every_field() {
        let mut cfg = toy_cfg(Variant::W2gae);
        cfg.epsilon = -1.0;
        cfg.beta = -2.0;
        cfg.batch_size = 1;
        cfg.prior = PriorSpec::SphereUniform { dim: 3 };
        let problems = cfg.problems();
        assert!(problems.iter().any(|p| p.starts_with("beta")));
        assert!(problems.iter().any(|p| p.starts_with("batch_size")));
        assert!(problems.iter().any(|p| p.starts_with("prior")));
        // epsilon is irrelevant for w2gae
        assert!(!problems.iter().any(|p| p.starts_with("epsilon")));
        cfg.variant = Variant::Sae;
        assert!(cfg.problems().iter().any(|p| p.starts_with("epsilon")));
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let json = serde_json::to_string(&toy_cfg(Variant::Sae)).unwrap();
        let back: SaeConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, toy_cfg(Variant::Sae));
        let bad = json.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<SaeConfig>(&bad).is_err());
    }

    #[test]
    fn train_log_csv_schema() {
        let log = TrainLog {
            records: vec![RoundRecord {
                round: 0,
                reconstruction: 1.0,
                latent: 0.5,
                total: 1.5,
                seconds: 0.0,
            }],
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("round,D,S,total,seconds"));
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.0, 1.0, 0.5, 1.5, 0.0]);
    }

    fn unit_rows(rng: &mut crate::priors::Rng64, m: usize, d: usize) -> PointCloud {
        sample_with(&PriorSpec::SphereUniform { dim: d }, m, rng).unwrap()
    }

    #[test]
    fn nat_examples() {
        let e = PointCloud::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(nat_equivalence_check(&e, &e).unwrap());

        // orthonormal rows permuted
        let z = PointCloud::new(Matrix::identity(4, 4)).unwrap();
        let perm = [2, 0, 3, 1];
        let f = PointCloud::new(Matrix::from_fn(4, 4, |i, j| z.matrix()[(perm[i], j)])).unwrap();
        assert!(nat_equivalence_check(&z, &f).unwrap());

        let mut rng = seeded_rng(15);
        for _ in 0..50 {
            let z = unit_rows(&mut rng, 5, 3);
            let f = unit_rows(&mut rng, 5, 3);
            assert!(nat_equivalence_check(&z, &f).unwrap());
        }
    }

    #[test]
    fn nat_rejects_non_unit_rows() {
        let z = PointCloud::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let f = PointCloud::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(nat_equivalence_check(&z, &f).is_err());
    }
}
