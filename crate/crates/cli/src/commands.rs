use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use otx_core::checks::{self, Suite};
use otx_core::datasets::swiss_roll;
use otx_core::exact::{hungarian, median_bandwidth, mmd_biased, sliced_wasserstein};
use otx_core::gaussian::{estimate_moments, w2_gaussian};
use otx_core::measures::{cost_matrix, format_f64, CostSpec, PointCloud};
use otx_core::sae::TrainSpec;
use otx_core::sinkhorn::{sinkhorn_divergence, SinkhornParams};
use otx_core::sweep::{self, SweepConfig};

use crate::{CheckArgs, CliError, DivergenceArgs, Method, SweepArgs, SwissRollArgs, TrainArgs};

type CliResult<T> = std::result::Result<T, CliError>;

/// Worker count from `OTX_THREADS` (default 1).
fn threads() -> CliResult<usize> {
    match std::env::var("OTX_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "OTX_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn create_in(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn read_cloud(path: &Path) -> CliResult<PointCloud> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    PointCloud::read_csv(file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &PathBuf) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn divergence(a: &DivergenceArgs) -> CliResult<()> {
    let x = read_cloud(&a.x)?;
    let y = read_cloud(&a.y)?;
    let start = Instant::now();
    let (name, params, value) = match a.method {
        Method::Sinkhorn => {
            let spec = CostSpec::new(a.p)?;
            let sp = SinkhornParams::new(a.epsilon, a.iters);
            let v = sinkhorn_divergence(&x, &y, spec, sp)?;
            (
                "sinkhorn",
                format!("epsilon={};iters={};p={}", a.epsilon, a.iters, a.p),
                v,
            )
        }
        Method::Hungarian => {
            let v = hungarian(&cost_matrix(&x, &y, CostSpec::new(a.p)?)?)?.avg_cost;
            ("hungarian", format!("p={}", a.p), v)
        }
        Method::Sliced => {
            let v = sliced_wasserstein(&x, &y, a.p, a.projections, a.seed)?;
            (
                "sliced",
                format!("p={};projections={};seed={}", a.p, a.projections, a.seed),
                v,
            )
        }
        Method::Mmd => {
            let bw = match a.bandwidth {
                Some(b) => b,
                None => median_bandwidth(&x, &y)?,
            };
            (
                "mmd",
                format!("bandwidth={}", format_f64(bw)),
                mmd_biased(&x, &y, bw)?,
            )
        }
        Method::W2gauss => (
            "w2gauss",
            String::new(),
            w2_gaussian(&estimate_moments(&x)?, &estimate_moments(&y)?)?,
        ),
    };
    let seconds = start.elapsed().as_secs_f64();
    let write = |w: &mut dyn Write| -> CliResult<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["method", "M", "d", "params", "value", "seconds"])
            .map_err(csv_err)?;
        wtr.write_record([
            name.to_string(),
            x.len().to_string(),
            x.dim().to_string(),
            params.clone(),
            format_f64(value),
            format_f64(seconds),
        ])
        .map_err(csv_err)?;
        wtr.flush()?;
        Ok(())
    };
    write(&mut io::stdout().lock())?;
    if let Some(dir) = &a.out {
        write(&mut create_in(dir, "divergence.csv")?)?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Usage(format!("csv: {e}"))
}

pub fn gauss_highdim(a: &SweepArgs) -> CliResult<()> {
    let mut cfg: SweepConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => SweepConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads()?)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let cells = cfg.cells();
    let chunks = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, t)| sweep::run_cell(&cfg, d, t))
            .collect::<Vec<_>>()
    });
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    sweep::sort_rows(&mut rows);
    match &a.out {
        Some(dir) => {
            sweep::write_rows(&rows, create_in(dir, "gauss_highdim.csv")?)?;
            write_json(dir, &cfg)?;
        }
        None => sweep::write_rows(&rows, io::stdout().lock())?,
    }
    for s in sweep::summarize(&rows) {
        eprintln!(
            "d = {}: matching argmin < 1 in {:.0}% of trials; mean-cost argmin sigma = {}; moment-W2 argmin sigma = {}",
            s.d,
            100.0 * s.frac_trials_argmin_below_one,
            s.argmin_mean_hungarian,
            s.argmin_mean_w2
        );
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(dir: &Path, value: &T) -> CliResult<()> {
    let mut w = create_in(dir, "config.json")?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Usage(format!("config.json: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn swissroll_gen(a: &SwissRollArgs) -> CliResult<()> {
    let x = swiss_roll(a.n, a.noise, a.seed)?;
    match &a.out {
        Some(dir) => x.write_csv(create_in(dir, "swiss_roll.csv")?)?,
        None => x.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let text = read_text(&a.config)?;
    let mut spec = TrainSpec::from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    if let Some(s) = a.seed {
        spec.sae.seed = s;
    }
    let outcome = spec.run()?;
    write_json(&a.out, &spec)?;
    outcome
        .model
        .encoder
        .write_checkpoint(create_in(&a.out, "encoder.bin")?)?;
    outcome
        .model
        .decoder
        .write_checkpoint(create_in(&a.out, "decoder.bin")?)?;
    outcome.log.write_csv(create_in(&a.out, "train_log.csv")?)?;
    let totals = outcome.log.totals();
    match (totals.first(), totals.last()) {
        (Some(first), Some(last)) => {
            println!(
                "rounds {} initial loss {} final loss {}",
                totals.len(),
                format_f64(*first),
                format_f64(*last)
            )
        }
        _ => println!("rounds 0"),
    }
    println!("artifacts in {}", a.out.display());
    Ok(())
}

pub fn check(a: &CheckArgs) -> CliResult<()> {
    let suite: Suite = a.suite.parse()?;
    let outcomes = checks::run(suite, a.seed);
    for o in &outcomes {
        println!("{o}");
    }
    if let Some(dir) = &a.out {
        let mut wtr = csv::Writer::from_writer(create_in(dir, "check_report.csv")?);
        wtr.write_record(["property", "passed", "detail", "instance"])
            .map_err(csv_err)?;
        for o in &outcomes {
            let inst = o
                .instance
                .as_ref()
                .map(|v| v.to_string())
                .unwrap_or_default();
            wtr.write_record([
                o.name,
                if o.passed { "true" } else { "false" },
                &o.detail,
                &inst,
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::Property(format!(
            "{failed} of {} properties failed",
            outcomes.len()
        )));
    }
    println!("{} properties passed", outcomes.len());
    Ok(())
}
