//! Model class, dataset container, and validation.
//!
//! A model is the DLM quadruple `{F_t, G_t, W_t, gamma_t}` plus the priors
//! `(M_0, C_0, Xi_0, nu_0)`. System matrices may be a single constant
//! (broadcast over time) or a full per-timepoint sequence. A dataset is a
//! `D x T` count matrix with an observed/missing mask and a contiguous
//! partition of `1..T` into series.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// A quantity that is either constant over time or given per timepoint.
#[derive(Debug, Clone, PartialEq)]
pub enum PerTime<T> {
    Constant(T),
    Sequence(Vec<T>),
}

impl<T> PerTime<T> {
    /// Value at timepoint `t` (0-based).
    pub fn at(&self, t: usize) -> &T {
        match self {
            PerTime::Constant(x) => x,
            PerTime::Sequence(xs) => &xs[t],
        }
    }

    /// Length of the underlying sequence, if any.
    pub fn sequence_len(&self) -> Option<usize> {
        match self {
            PerTime::Constant(_) => None,
            PerTime::Sequence(xs) => Some(xs.len()),
        }
    }
}

/// An MLN-DLM specification.
///
/// Dimensions: `Q` state dimensions per log-ratio coordinate and
/// `p = D - 1` log-ratio coordinates, so `M_0` is `Q x p`, `C_0` and the
/// system matrices are `Q x Q`, and `Xi_0` is `p x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Observation loading `F_t` (length Q).
    pub f: PerTime<DVector<f64>>,
    /// State evolution `G_t` (Q x Q).
    pub g: PerTime<DMatrix<f64>>,
    /// State innovation covariance `W_t` (Q x Q, symmetric PSD).
    pub w: PerTime<DMatrix<f64>>,
    /// Observation scale `gamma_t > 0`.
    pub gamma: PerTime<f64>,
    /// Prior state mean (Q x p).
    pub m0: DMatrix<f64>,
    /// Prior state covariance (Q x Q, symmetric PD).
    pub c0: DMatrix<f64>,
    /// Inverse-Wishart scale (p x p, symmetric PD).
    pub xi0: DMatrix<f64>,
    /// Inverse-Wishart degrees of freedom, `nu_0 > D - 2`.
    pub nu0: f64,
}

impl ModelSpec {
    /// State dimension Q.
    pub fn q(&self) -> usize {
        self.m0.nrows()
    }

    /// Log-ratio dimension `p = D - 1`.
    pub fn p(&self) -> usize {
        self.m0.ncols()
    }

    /// Multinomial dimension D.
    pub fn d(&self) -> usize {
        self.p() + 1
    }
}

/// Random-walk model: `Q = 1`, `F_t = 1`, `G_t = 1`, `W_t = w`,
/// `gamma_t = 1`, with defaults `M_0 = 0`, `C_0 = 1`, `Xi_0 = I`,
/// `nu_0 = D + 3`.
pub fn builtin_random_walk(d: usize, t: usize, w: f64) -> Result<ModelSpec> {
    if d < 2 {
        return Err(Error::invalid("random walk model needs D >= 2"));
    }
    if t < 1 {
        return Err(Error::invalid("random walk model needs T >= 1"));
    }
    if !(w > 0.0) {
        return Err(Error::invalid("state variance w must be positive"));
    }
    let p = d - 1;
    Ok(ModelSpec {
        f: PerTime::Constant(DVector::from_element(1, 1.0)),
        g: PerTime::Constant(DMatrix::from_element(1, 1, 1.0)),
        w: PerTime::Constant(DMatrix::from_element(1, 1, w)),
        gamma: PerTime::Constant(1.0),
        m0: DMatrix::zeros(1, p),
        c0: DMatrix::from_element(1, 1, 1.0),
        xi0: DMatrix::identity(p, p),
        nu0: d as f64 + 3.0,
    })
}

/// Local-trend (velocity) model: `Q = 2`, `F_t = (1, 0)`,
/// `G_t = [[1, 1], [0, damping]]`, `W_t = diag(w_theta, w_alpha)`. Same
/// prior defaults as [`builtin_random_walk`] with `C_0 = I`.
pub fn builtin_local_trend(
    d: usize,
    t: usize,
    w_theta: f64,
    w_alpha: f64,
    damping: f64,
) -> Result<ModelSpec> {
    if d < 2 {
        return Err(Error::invalid("local trend model needs D >= 2"));
    }
    if t < 1 {
        return Err(Error::invalid("local trend model needs T >= 1"));
    }
    if !(w_theta > 0.0) || !(w_alpha > 0.0) {
        return Err(Error::invalid("state variances must be positive"));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::invalid("damping must lie in (0, 1]"));
    }
    let p = d - 1;
    Ok(ModelSpec {
        f: PerTime::Constant(DVector::from_column_slice(&[1.0, 0.0])),
        g: PerTime::Constant(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, damping])),
        w: PerTime::Constant(DMatrix::from_partial_diagonal(
            2,
            2,
            &[w_theta, w_alpha],
        )),
        gamma: PerTime::Constant(1.0),
        m0: DMatrix::zeros(2, p),
        c0: DMatrix::identity(2, 2),
        xi0: DMatrix::identity(p, p),
        nu0: d as f64 + 3.0,
    })
}

/// Count data: `D x T` counts, a per-timepoint observed mask, and the
/// contiguous series partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    /// Counts, categories in rows, timepoints in columns.
    pub y: DMatrix<u64>,
    /// `observed[t] == false` marks a missing-at-random timepoint.
    pub observed: Vec<bool>,
    /// Lengths `T_k` of the K series; must sum to T.
    pub series_lengths: Vec<usize>,
}

impl CountDataset {
    /// Single fully observed series.
    pub fn single_series(y: DMatrix<u64>) -> Self {
        let t = y.ncols();
        CountDataset {
            y,
            observed: vec![true; t],
            series_lengths: vec![t],
        }
    }

    pub fn d(&self) -> usize {
        self.y.nrows()
    }

    pub fn t_total(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_series(&self) -> usize {
        self.series_lengths.len()
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Total count `n_t` in column `t`.
    pub fn column_total(&self, t: usize) -> u64 {
        self.y.column(t).iter().sum()
    }

    /// Half-open global index ranges of the series, in order.
    pub fn series_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.series_lengths.len());
        let mut start = 0;
        for &len in &self.series_lengths {
            out.push(start..start + len);
            start += len;
        }
        out
    }

    /// Returns a copy with the series (and their columns) reordered.
    pub fn permute_series(&self, order: &[usize]) -> Result<CountDataset> {
        if order.len() != self.n_series() {
            return Err(Error::invalid("permutation length != number of series"));
        }
        let ranges = self.series_ranges();
        let mut cols: Vec<usize> = Vec::with_capacity(self.t_total());
        let mut lengths = Vec::with_capacity(order.len());
        for &k in order {
            let r = ranges
                .get(k)
                .ok_or_else(|| Error::invalid("permutation index out of range"))?;
            cols.extend(r.clone());
            lengths.push(r.len());
        }
        if cols.len() != self.t_total() {
            return Err(Error::invalid("permutation is not a bijection"));
        }
        let y = self.y.select_columns(cols.iter());
        let observed = cols.iter().map(|&c| self.observed[c]).collect();
        Ok(CountDataset {
            y,
            observed,
            series_lengths: lengths,
        })
    }
}

/// Latent ALR coordinates: a finite `(D-1) x T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEta {
    matrix: DMatrix<f64>,
}

impl LatentEta {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("eta must be finite"));
        }
        Ok(LatentEta { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn t_total(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Per-diagonal inverse-gamma prior for learnable state variances
/// `w_q ~ InvGamma(a_q, b_q)` (shape/rate convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl HyperPrior {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::invalid("hyperprior a and b must have equal length >= 1"));
        }
        if a.iter().chain(b.iter()).any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("hyperprior parameters must be positive"));
        }
        Ok(HyperPrior { a, b })
    }
}

/// Outcome of [`validate`]: an empty issue list means the pair is usable.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(self.issues))
        }
    }
}

const SYM_TOL: f64 = 1e-10;

pub(crate) fn symmetry_gap(m: &DMatrix<f64>) -> f64 {
    let mut gap = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            gap = gap.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    gap
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    nalgebra::Cholesky::new(m.clone()).is_some()
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.amax().max(1.0);
    nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .all(|&l| l >= -1e-9 * scale)
}

/// Checks every structural invariant of a model/data pair and reports all
/// violations instead of stopping at the first.
pub fn validate(spec: &ModelSpec, data: &CountDataset) -> ValidationReport {
    let mut issues = Vec::new();
    let q = spec.q();
    let p = spec.p();
    let t = data.t_total();

    if q == 0 || p == 0 {
        issues.push("M0 must be a nonempty Q x (D-1) matrix".to_string());
        return ValidationReport { issues };
    }

    if data.d() != spec.d() {
        issues.push(format!(
            "count matrix has {} categories but model implies D = {}",
            data.d(),
            spec.d()
        ));
    }
    if data.observed.len() != t {
        issues.push(format!(
            "observed mask has length {} but Y has {} columns",
            data.observed.len(),
            t
        ));
    }
    let series_sum: usize = data.series_lengths.iter().sum();
    if data.series_lengths.iter().any(|&l| l == 0) {
        issues.push("series lengths must be positive".to_string());
    }
    if series_sum != t {
        issues.push(format!(
            "series lengths sum to {series_sum} but Y has {t} columns; series must partition 1..T"
        ));
    }

    // Per-timepoint system quantities. Sequences must cover T exactly;
    // constants are checked once.
    for (name, len) in [
        ("F", spec.f.sequence_len()),
        ("G", spec.g.sequence_len()),
        ("W", spec.w.sequence_len()),
        ("gamma", spec.gamma.sequence_len()),
    ] {
        if let Some(l) = len {
            if l != t {
                issues.push(format!("{name} sequence has length {l}, expected T = {t}"));
            }
        }
    }
    let entries = |seq_len: Option<usize>| -> usize { seq_len.map_or(1, |l| l.min(t)) };
    for ti in 0..entries(spec.f.sequence_len()) {
        if spec.f.at(ti).len() != q {
            issues.push(format!(
                "F_{} has length {}, expected Q = {q}",
                ti + 1,
                spec.f.at(ti).len()
            ));
        }
    }
    for ti in 0..entries(spec.g.sequence_len()) {
        let g = spec.g.at(ti);
        if g.shape() != (q, q) {
            issues.push(format!("G_{} has shape {:?}, expected ({q}, {q})", ti + 1, g.shape()));
        }
    }
    for ti in 0..entries(spec.w.sequence_len()) {
        let w = spec.w.at(ti);
        if w.shape() != (q, q) {
            issues.push(format!("W_{} has shape {:?}, expected ({q}, {q})", ti + 1, w.shape()));
        } else if symmetry_gap(w) > SYM_TOL {
            issues.push(format!(
                "W_{} is asymmetric (max gap {:.3e})",
                ti + 1,
                symmetry_gap(w)
            ));
        } else if !is_psd(w) {
            issues.push(format!("W_{} is not positive semidefinite", ti + 1));
        }
    }
    for ti in 0..entries(spec.gamma.sequence_len()) {
        if !(*spec.gamma.at(ti) > 0.0) {
            issues.push(format!("gamma_{} must be positive", ti + 1));
        }
    }

    // Priors.
    if spec.c0.shape() != (q, q) {
        issues.push(format!("C0 has shape {:?}, expected ({q}, {q})", spec.c0.shape()));
    } else if symmetry_gap(&spec.c0) > SYM_TOL {
        issues.push("C0 is asymmetric".to_string());
    } else if !is_pd(&spec.c0) {
        issues.push("C0 is not positive definite".to_string());
    }
    if spec.xi0.shape() != (p, p) {
        issues.push(format!("Xi0 has shape {:?}, expected ({p}, {p})", spec.xi0.shape()));
    } else if symmetry_gap(&spec.xi0) > SYM_TOL {
        issues.push("Xi0 is asymmetric".to_string());
    } else if !is_pd(&spec.xi0) {
        issues.push("Xi0 is not positive definite".to_string());
    }
    if !(spec.nu0 > spec.d() as f64 - 2.0) {
        issues.push(format!(
            "nu0 = {} must exceed D - 2 = {}",
            spec.nu0,
            spec.d() as f64 - 2.0
        ));
    }

    ValidationReport { issues }
}

// ---------------------------------------------------------------------------
// Config-file representation
// ---------------------------------------------------------------------------

/// Either a single value or a per-timepoint list, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerTimeRaw<T> {
    Constant(T),
    Sequence(Vec<T>),
}

/// Serializable form of [`ModelSpec`]: matrices as nested row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub f: PerTimeRaw<Vec<f64>>,
    pub g: PerTimeRaw<Vec<Vec<f64>>>,
    pub w: PerTimeRaw<Vec<Vec<f64>>>,
    #[serde(default = "default_gamma")]
    pub gamma: PerTimeRaw<f64>,
    pub m0: Vec<Vec<f64>>,
    pub c0: Vec<Vec<f64>>,
    pub xi0: Vec<Vec<f64>>,
    pub nu0: f64,
}

fn default_gamma() -> PerTimeRaw<f64> {
    PerTimeRaw::Constant(1.0)
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::invalid(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let f = match &self.f {
            PerTimeRaw::Constant(v) => PerTime::Constant(DVector::from_column_slice(v)),
            PerTimeRaw::Sequence(vs) => PerTime::Sequence(
                vs.iter().map(|v| DVector::from_column_slice(v)).collect(),
            ),
        };
        let g = match &self.g {
            PerTimeRaw::Constant(m) => PerTime::Constant(rows_to_matrix(m, "G")?),
            PerTimeRaw::Sequence(ms) => PerTime::Sequence(
                ms.iter()
                    .map(|m| rows_to_matrix(m, "G"))
                    .collect::<Result<_>>()?,
            ),
        };
        let w = match &self.w {
            PerTimeRaw::Constant(m) => PerTime::Constant(rows_to_matrix(m, "W")?),
            PerTimeRaw::Sequence(ms) => PerTime::Sequence(
                ms.iter()
                    .map(|m| rows_to_matrix(m, "W"))
                    .collect::<Result<_>>()?,
            ),
        };
        let gamma = match &self.gamma {
            PerTimeRaw::Constant(x) => PerTime::Constant(*x),
            PerTimeRaw::Sequence(xs) => PerTime::Sequence(xs.clone()),
        };
        Ok(ModelSpec {
            f,
            g,
            w,
            gamma,
            m0: rows_to_matrix(&self.m0, "M0")?,
            c0: rows_to_matrix(&self.c0, "C0")?,
            xi0: rows_to_matrix(&self.xi0, "Xi0")?,
            nu0: self.nu0,
        })
    }

    pub fn from_spec(spec: &ModelSpec) -> ModelConfig {
        let f = match &spec.f {
            PerTime::Constant(v) => PerTimeRaw::Constant(v.iter().copied().collect()),
            PerTime::Sequence(vs) => {
                PerTimeRaw::Sequence(vs.iter().map(|v| v.iter().copied().collect()).collect())
            }
        };
        let g = match &spec.g {
            PerTime::Constant(m) => PerTimeRaw::Constant(matrix_to_rows(m)),
            PerTime::Sequence(ms) => PerTimeRaw::Sequence(ms.iter().map(matrix_to_rows).collect()),
        };
        let w = match &spec.w {
            PerTime::Constant(m) => PerTimeRaw::Constant(matrix_to_rows(m)),
            PerTime::Sequence(ms) => PerTimeRaw::Sequence(ms.iter().map(matrix_to_rows).collect()),
        };
        let gamma = match &spec.gamma {
            PerTime::Constant(x) => PerTimeRaw::Constant(*x),
            PerTime::Sequence(xs) => PerTimeRaw::Sequence(xs.clone()),
        };
        ModelConfig {
            f,
            g,
            w,
            gamma,
            m0: matrix_to_rows(&spec.m0),
            c0: matrix_to_rows(&spec.c0),
            xi0: matrix_to_rows(&spec.xi0),
            nu0: spec.nu0,
        }
    }
}
