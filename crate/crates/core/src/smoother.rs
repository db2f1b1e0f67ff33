//! Backward sampling of `(Theta, Sigma)` given `eta` (the uncollapse step).
//!
//! One joint draw proceeds as `Sigma ~ IW(Xi_T, nu_T)` followed, per series
//! independently, by the backward recursion
//!
//! ```text
//! Theta_last ~ N(M_last, C_last, Sigma)
//! Z_t  = C_t G_{t+1}' R_{t+1}^{-1}
//! M_t* = M_t + Z_t (Theta_{t+1} - A_{t+1})
//! C_t* = C_t - Z_t R_{t+1} Z_t'
//! Theta_t ~ N(M_t*, C_t*, Sigma)
//! ```
//!
//! including one extra step below each series' first timepoint to draw the
//! series' `Theta_0` from the prior `(M_0, C_0)`. Covariances are
//! re-symmetrized before sampling, and near-semidefinite ones fall back to
//! an eigenvalue-clipped square root.

use crate::error::{Error, Result};
use crate::filter::FilterTrace;
use crate::model::{symmetry_gap, ModelSpec};
use crate::rng::stream_rng;
use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// One joint draw from `p(Theta, Sigma | eta)`.
#[derive(Debug, Clone)]
pub struct StateDraw {
    /// `Theta_t` for every global timepoint (missing ones included).
    pub theta: Vec<DMatrix<f64>>,
    /// The extra pre-sample `Theta_0(k)` drawn per series.
    pub theta0: Vec<DMatrix<f64>>,
    /// Shared column covariance draw.
    pub sigma: DMatrix<f64>,
}

/// A square root `L` with `L L' = m`, via Cholesky when possible and an
/// eigenvalue-clipped symmetric factor otherwise.
fn psd_sqrt(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if symmetry_gap(m) > 1e-8 * m.amax().max(1.0) {
        return Err(Error::invalid(format!("{context}: matrix is not symmetric")));
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol.unpack());
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

/// Draws `M + L_U Z L_V'` with `Z` iid standard normal; `U` and `V` are
/// the row and column covariances (symmetric PSD).
pub fn sample_matrix_normal<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let lu = psd_sqrt(u, "matrix normal row covariance")?;
    let lv = psd_sqrt(v, "matrix normal column covariance")?;
    Ok(sample_mn_prefactored(mean, &lu, &lv, rng))
}

fn sample_mn_prefactored<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    lu: &DMatrix<f64>,
    lv: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let z = DMatrix::from_fn(mean.nrows(), mean.ncols(), |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    mean + lu * z * lv.transpose()
}

/// Draws `Sigma ~ IW(Xi, nu)` (mean `Xi / (nu - p - 1)`) by a Bartlett
/// factor of the Wishart on `Xi^{-1}` followed by triangular inversion.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    xi: &DMatrix<f64>,
    nu: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = xi.nrows();
    if xi.ncols() != p {
        return Err(Error::invalid("inverse-Wishart scale must be square"));
    }
    if symmetry_gap(xi) > 1e-8 * xi.amax().max(1.0) {
        return Err(Error::invalid("inverse-Wishart scale must be symmetric"));
    }
    if !(nu > p as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "inverse-Wishart dof {nu} must exceed dim - 1 = {}",
            p - 1
        )));
    }
    let xi_chol =
        Cholesky::new(xi.clone()).ok_or_else(|| Error::not_pd("inverse-Wishart scale"))?;
    let xi_inv = xi_chol.inverse();
    let lv = Cholesky::new(xi_inv)
        .ok_or_else(|| Error::not_pd("inverse of inverse-Wishart scale"))?
        .unpack();

    // Bartlett: A lower-triangular, A_ii^2 ~ chi^2(nu - i), A_ij ~ N(0,1).
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(nu - i as f64).map_err(|e| Error::invalid(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    // X = (L A)(L A)' ~ Wishart(Xi^{-1}, nu); Sigma = X^{-1} = B^{-T} B^{-1}.
    let b = lv * a;
    let b_inv = b
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::not_pd("Bartlett factor"))?;
    let mut sigma = b_inv.transpose() * b_inv;
    let sym = (&sigma + sigma.transpose()) * 0.5;
    sigma = sym;
    Ok(sigma)
}

/// One joint backward-sampling draw, deterministic in `seed`.
pub fn smooth_draw(spec: &ModelSpec, trace: &FilterTrace, seed: u64) -> Result<StateDraw> {
    let mut rng = stream_rng(seed, 0);
    smooth_draw_with(spec, trace, &mut rng)
}

/// As [`smooth_draw`] but drawing from a caller-managed RNG stream.
pub fn smooth_draw_with<R: Rng + ?Sized>(
    spec: &ModelSpec,
    trace: &FilterTrace,
    rng: &mut R,
) -> Result<StateDraw> {
    let t_total = trace.t_total();
    let p = spec.p();

    let mut xi_t = trace.xi_final().clone();
    let sym = (&xi_t + xi_t.transpose()) * 0.5;
    xi_t = sym;
    let sigma = sample_inverse_wishart(&xi_t, trace.nu_final(), rng)?;
    let l_sigma = psd_sqrt(&sigma, "Sigma draw")?;

    let mut theta: Vec<DMatrix<f64>> = vec![DMatrix::zeros(spec.q(), p); t_total];
    let mut theta0: Vec<DMatrix<f64>> = Vec::with_capacity(trace.series_starts.len());

    for (series_idx, &start) in trace.series_starts.iter().enumerate() {
        let len = trace.series_lengths[series_idx];
        let last = start + len - 1;

        let mut c_last = trace.c[last].clone();
        symmetrize_in_place(&mut c_last);
        let l_c = psd_sqrt(&c_last, "C at series end")?;
        theta[last] = sample_mn_prefactored(&trace.m[last], &l_c, &l_sigma, rng);

        for t in (start..last).rev() {
            let (m_star, c_star) = backward_moments(
                &trace.m[t],
                &trace.c[t],
                spec.g.at(t + 1),
                &trace.a[t + 1],
                &trace.r[t + 1],
                &theta[t + 1],
                t,
            )?;
            let l_c = psd_sqrt(&c_star, "smoothed state covariance")?;
            theta[t] = sample_mn_prefactored(&m_star, &l_c, &l_sigma, rng);
        }

        // Extra step below the series start: Theta_0(k) from (M_0, C_0).
        let (m_star, c_star) = backward_moments(
            &spec.m0,
            &spec.c0,
            spec.g.at(start),
            &trace.a[start],
            &trace.r[start],
            &theta[start],
            start,
        )?;
        let l_c = psd_sqrt(&c_star, "smoothed prior covariance")?;
        theta0.push(sample_mn_prefactored(&m_star, &l_c, &l_sigma, rng));
    }

    Ok(StateDraw {
        theta,
        theta0,
        sigma,
    })
}

fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let sym = (&*m + m.transpose()) * 0.5;
    *m = sym;
}

/// Conditional moments of `Theta_t` given `Theta_{t+1}`.
fn backward_moments(
    m_t: &DMatrix<f64>,
    c_t: &DMatrix<f64>,
    g_next: &DMatrix<f64>,
    a_next: &DMatrix<f64>,
    r_next: &DMatrix<f64>,
    theta_next: &DMatrix<f64>,
    t: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let chol_r = Cholesky::new(r_next.clone()).ok_or_else(|| {
        let eig = nalgebra::SymmetricEigen::new(r_next.clone()).eigenvalues;
        let max = eig.iter().fold(f64::MIN, |a, &b| a.max(b));
        let min = eig.iter().fold(f64::MAX, |a, &b| a.min(b));
        Error::SingularInnovation {
            t: t + 1,
            rcond: min / max,
        }
    })?;
    // Z = C G' R^{-1}, computed as (R^{-1} G C)'.
    let z = chol_r.solve(&(g_next * c_t)).transpose();
    let m_star = m_t + &z * (theta_next - a_next);
    let mut c_star = c_t - &z * r_next * z.transpose();
    symmetrize_in_place(&mut c_star);
    Ok((m_star, c_star))
}
