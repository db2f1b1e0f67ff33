//! Log-ratio transforms between the probability simplex and real space.
//!
//! The additive log-ratio (ALR) transform maps a point of the D-simplex to
//! `D-1` real coordinates using the last category as reference:
//! `alr(x) = (log x_1/x_D, ..., log x_{D-1}/x_D)`. Its inverse is a
//! softmax closure with an implicit unit entry for the reference. The
//! centered log-ratio (CLR) maps are used for reporting only.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// A point strictly inside the D-simplex: positive entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    values: Vec<f64>,
}

impl Composition {
    /// Builds a composition from positive weights, normalizing them to sum
    /// to one. Rejects nonpositive or non-finite entries and dimensions < 2.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("composition needs at least 2 parts"));
        }
        if values.iter().any(|&x| !x.is_finite() || x <= 0.0) {
            return Err(Error::invalid(
                "composition entries must be finite and strictly positive",
            ));
        }
        let total: f64 = values.iter().sum();
        let values = values.into_iter().map(|x| x / total).collect();
        Ok(Composition { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of parts D.
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// ALR coordinates of a composition: a finite vector of length `D - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioVector {
    values: DVector<f64>,
}

impl LogRatioVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("log-ratio vector must be non-empty"));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("log-ratio vector entries must be finite"));
        }
        Ok(LogRatioVector { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// The simplex dimension D this vector corresponds to.
    pub fn dimension_d(&self) -> usize {
        self.values.len() + 1
    }
}

/// Additive log-ratio transform with the last part as reference.
pub fn alr(c: &Composition) -> LogRatioVector {
    let x = c.values();
    let d = c.dim();
    let log_ref = x[d - 1].ln();
    let values = DVector::from_iterator(d - 1, x[..d - 1].iter().map(|&xi| xi.ln() - log_ref));
    LogRatioVector { values }
}

/// Inverse ALR: softmax closure `(e^{v_1}, ..., e^{v_{D-1}}, 1) / Z`.
///
/// Exponentiation is max-shifted so arbitrarily large coordinates cannot
/// overflow; entries that underflow are clamped to the smallest positive
/// double so the result stays strictly inside the simplex.
pub fn alr_inverse(v: &LogRatioVector) -> Composition {
    let values = alr_inverse_raw(v.values.as_slice());
    Composition { values }
}

pub(crate) fn alr_inverse_raw(v: &[f64]) -> Vec<f64> {
    // Reference coordinate is an implicit 0.
    let max = v.iter().fold(0.0_f64, |m, &x| m.max(x));
    let mut out: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    out.push((-max).exp());
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x = (*x / total).max(f64::MIN_POSITIVE);
    }
    out
}

/// CLR coordinates of the composition `alr_inverse(v)`: append the implicit
/// zero reference coordinate and center. Output has length D and sums to 0.
pub fn alr_to_clr(v: &LogRatioVector) -> Vec<f64> {
    clr_from_alr_coords(v.values.as_slice())
}

/// Same linear ALR -> CLR map applied to a raw coordinate vector. Used for
/// state matrices, which live in ALR coordinates but are not compositions.
pub fn clr_from_alr_coords(v: &[f64]) -> Vec<f64> {
    let d = v.len() + 1;
    let mean = v.iter().sum::<f64>() / d as f64;
    let mut out: Vec<f64> = v.iter().map(|&x| x - mean).collect();
    out.push(-mean);
    out
}
