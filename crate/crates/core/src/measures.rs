//! Point clouds, `L_p` ground costs and dense cost matrices.
//!
//! Every measure is a uniform empirical measure `(1/M) Σ δ_{x_m}`; weights are
//! implicit and never stored.

use std::io::{Read, Write};

use crate::error::{OtError, Result};
use crate::Matrix;

/// A batch of `M` points in `d` dimensions, one point per row.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    data: Matrix,
}

impl PointCloud {
    /// Wraps an `M × d` matrix, rejecting empty shapes and non-finite entries.
    pub fn new(data: Matrix) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(OtError::invalid(format!(
                "point cloud must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % data.nrows(), pos / data.nrows());
            return Err(OtError::invalid(format!(
                "non-finite coordinate at row {r}, column {c}"
            )));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(OtError::invalid("point cloud needs at least one row"));
        }
        let d = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(OtError::invalid(format!(
                "ragged rows: row 0 has {d} coordinates, row {i} has {}",
                rows[i].len()
            )));
        }
        Self::new(Matrix::from_fn(m, d, |i, j| rows[i][j]))
    }

    /// Number of points `M`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }

    /// Applies `x ↦ A x` to every point; `A` is `d_out × d`.
    pub fn map_linear(&self, a: &Matrix) -> Result<PointCloud> {
        if a.ncols() != self.dim() {
            return Err(OtError::invalid(format!(
                "linear map expects dimension {}, cloud has {}",
                a.ncols(),
                self.dim()
            )));
        }
        PointCloud::new(&self.data * a.transpose())
    }

    /// Reads CSV, one point per row. A leading header row (any non-numeric
    /// first field) is skipped. Ragged rows are rejected.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if line == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                continue;
            }
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        OtError::invalid(format!(
                            "line {}: cannot parse {f:?} as a number",
                            line + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// Writes CSV with an `x0,x1,…` header and 17 significant digits, which
    /// round-trips `f64` exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        wtr.write_record((0..self.dim()).map(|j| format!("x{j}")))?;
        for i in 0..self.len() {
            wtr.write_record(self.data.row(i).iter().map(|v| format_f64(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Formats a double with 17 significant digits. Plain decimal notation is
/// used for magnitudes in `[1e-7, 1e17)` (and zero); scientific outside.
pub fn format_f64(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return format!("{v:.16}");
    }
    let sci = format!("{v:.16e}");
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    if (-7..17).contains(&exp) {
        let prec = (16 - exp) as usize;
        format!("{v:.prec$}")
    } else {
        sci
    }
}

/// Ground cost `c(x, y) = ‖x − y‖_p^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSpec {
    p: f64,
}

impl CostSpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(OtError::invalid(format!(
                "cost exponent must be a finite p >= 1, got {p}"
            )));
        }
        Ok(Self { p })
    }

    /// The squared Euclidean cost used by default.
    pub fn squared_euclidean() -> Self {
        Self { p: 2.0 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `|t|^p` with exact arithmetic for the common exponents.
    #[inline]
    pub fn pow_abs(&self, t: f64) -> f64 {
        pow_abs(t, self.p)
    }
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::squared_euclidean()
    }
}

#[inline]
pub(crate) fn pow_abs(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else if p == 1.0 {
        t.abs()
    } else {
        t.abs().powf(p)
    }
}

/// Evaluates `‖x − y‖_p^p`.
pub fn lp_cost(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(OtError::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let spec = CostSpec::new(p)?;
    Ok(x.iter().zip(y).map(|(a, b)| spec.pow_abs(a - b)).sum())
}

/// Dense `M × N` matrix of pairwise costs between two clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    values: Matrix,
    spec: CostSpec,
}

impl CostMatrix {
    /// Wraps precomputed costs; entries must be finite and nonnegative.
    pub fn from_matrix(values: Matrix, spec: CostSpec) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(OtError::invalid("cost matrix must be nonempty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(OtError::invalid(
                "cost entries must be finite and nonnegative",
            ));
        }
        Ok(Self { values, spec })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn spec(&self) -> CostSpec {
        self.spec
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }
}

/// Builds `C_ij = ‖X_i − Y_j‖_p^p`.
pub fn cost_matrix(x: &PointCloud, y: &PointCloud, spec: CostSpec) -> Result<CostMatrix> {
    if x.dim() != y.dim() {
        return Err(OtError::invalid(format!(
            "dimension mismatch: X has d={}, Y has d={}",
            x.dim(),
            y.dim()
        )));
    }
    let (xm, ym) = (x.matrix(), y.matrix());
    let d = x.dim();
    let values = Matrix::from_fn(x.len(), y.len(), |i, j| {
        (0..d).map(|k| spec.pow_abs(xm[(i, k)] - ym[(j, k)])).sum()
    });
    Ok(CostMatrix { values, spec })
}
