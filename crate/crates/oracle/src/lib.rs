//! Brute-force reference implementations used only by test suites.
//!
//! Everything here trades stability and speed for directness: the joint
//! prior over `eta` is materialised as an explicit `T x T` covariance
//! matrix and evaluated as one matrix-T density, smoother moments come
//! from dense Gaussian conditioning, and gradients from central finite
//! differences. These constructions are exactly the ones the filtering
//! recursion exists to avoid (the explicit covariance accumulates state
//! variance and degrades as `T` grows), which is why they are correct
//! cross-checks at small `T` and nothing more. Not part of any shipping
//! interface.

use mlndlm::{CountDataset, Error, LatentEta, ModelSpec, PerTime, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

/// Explicit joint prior of the projected states: `A` is the `T x T`
/// row covariance of `eta'` (time direction), `B` the `T x (D-1)` prior
/// mean.
#[derive(Debug, Clone)]
pub struct ExplicitPrior {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Builds `A` and `B` for a fully observed single series of length `t_len`
/// by materialising every state cross-covariance:
///
/// ```text
/// Cov(eta_t, eta_s) = F_t' [G_t..G_{s+1}] V_s F_s + gamma_t 1{t=s}
/// V_t = G_t V_{t-1} G_t' + W_t,  V_0 = C_0
/// ```
pub fn explicit_prior_matrix(spec: &ModelSpec, t_len: usize) -> Result<ExplicitPrior> {
    if t_len == 0 {
        return Err(Error::invalid("explicit prior needs T >= 1"));
    }
    let p = spec.p();

    // Marginal state covariances V_t (unit column covariance).
    let mut v = Vec::with_capacity(t_len + 1);
    v.push(spec.c0.clone());
    for t in 0..t_len {
        let g = spec.g.at(t);
        v.push(g * v.last().unwrap() * g.transpose() + spec.w.at(t));
    }

    let mut a = DMatrix::zeros(t_len, t_len);
    for s in 0..t_len {
        // chain_v = (G_t ... G_{s+1}) V_{s+1}, built incrementally in t.
        let mut chain_v = v[s + 1].clone();
        let f_s = spec.f.at(s);
        for t in s..t_len {
            if t > s {
                chain_v = spec.g.at(t) * chain_v;
            }
            let f_t = spec.f.at(t);
            let mut cov = (f_t.transpose() * &chain_v * f_s)[(0, 0)];
            if t == s {
                cov += spec.gamma.at(t);
            }
            a[(t, s)] = cov;
            a[(s, t)] = cov;
        }
    }

    // Prior means: row t of B is F_t' (G_t ... G_1 M_0).
    let mut b = DMatrix::zeros(t_len, p);
    let mut m = spec.m0.clone();
    for t in 0..t_len {
        m = spec.g.at(t) * m;
        let row = m.transpose() * spec.f.at(t);
        b.set_row(t, &row.transpose());
    }
    Ok(ExplicitPrior { a, b })
}

/// Log of the multivariate gamma function `Gamma_p(a)`.
pub fn ln_multivariate_gamma(p: usize, a: f64) -> f64 {
    let mut out = 0.25 * (p * (p - 1)) as f64 * std::f64::consts::PI.ln();
    for j in 1..=p {
        out += ln_gamma(a + 0.5 * (1.0 - j as f64));
    }
    out
}

/// Joint matrix-T log density of `eta` (a `(D-1) x T` matrix) under the
/// explicit prior: the result of integrating the matrix normal
/// `eta' ~ N(B, A, Sigma)` against `Sigma ~ IW(Xi_0, nu_0)`:
///
/// ```text
/// log p = -(Tp/2) ln pi - (p/2) ln|A| + ln G_p((nu0+T)/2) - ln G_p(nu0/2)
///         + (nu0/2) ln|Xi0| - ((nu0+T)/2) ln|Xi0 + (X-B)' A^{-1} (X-B)|
/// ```
///
/// Fails when `A` is no longer numerically positive definite, which is the
/// expected behaviour of the explicit construction at larger `T`.
pub fn joint_matrix_t_logdensity(
    prior: &ExplicitPrior,
    xi0: &DMatrix<f64>,
    nu0: f64,
    eta: &DMatrix<f64>,
) -> Result<f64> {
    let t_len = prior.a.nrows();
    let p = eta.nrows();
    if eta.ncols() != t_len || prior.b.ncols() != p {
        return Err(Error::invalid("eta shape does not match the explicit prior"));
    }
    let chol_a = Cholesky::new(prior.a.clone())
        .ok_or_else(|| Error::not_pd("explicit prior matrix A"))?;
    let logdet_a: f64 = 2.0 * chol_a.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();

    let x = eta.transpose() - &prior.b;
    let a_inv_x = chol_a.solve(&x);
    let scatter = x.transpose() * a_inv_x;

    let chol_xi = Cholesky::new(xi0.clone()).ok_or_else(|| Error::not_pd("Xi0"))?;
    let logdet_xi: f64 = 2.0 * chol_xi.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let updated = xi0 + scatter;
    let chol_u = Cholesky::new(updated).ok_or_else(|| Error::not_pd("Xi0 + scatter"))?;
    let logdet_u: f64 = 2.0 * chol_u.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();

    let tp = t_len as f64;
    let pf = p as f64;
    Ok(
        -0.5 * tp * pf * std::f64::consts::PI.ln() - 0.5 * pf * logdet_a
            + ln_multivariate_gamma(p, 0.5 * (nu0 + tp))
            - ln_multivariate_gamma(p, 0.5 * nu0)
            + 0.5 * nu0 * logdet_xi
            - 0.5 * (nu0 + tp) * logdet_u,
    )
}

/// Central finite differences with per-component relative step
/// `h * max(1, |x_i|)`.
pub fn finite_difference_gradient<F>(f: &mut F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: FnMut(&DMatrix<f64>) -> f64,
{
    let mut grad = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let step = h * x[(i, j)].abs().max(1.0);
            let mut plus = x.clone();
            plus[(i, j)] += step;
            let mut minus = x.clone();
            minus[(i, j)] -= step;
            grad[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
    }
    grad
}

/// Posterior moments of the scalar-state chain `(Theta_0..Theta_T)` given a
/// fully observed `eta` row, computed by dense Gaussian conditioning on the
/// explicit joint covariance (unit noise scale) and the conjugate
/// inverse-gamma posterior for the scale. Only the `Q = 1, D = 2` case is
/// supported; that is all the micro-instance checks need.
#[derive(Debug, Clone)]
pub struct ScalarSmootherOracle {
    /// `E[Theta_t | eta]` for `t = 0..=T`.
    pub mean: Vec<f64>,
    /// `Var[Theta_t | eta]` for `t = 0..=T` (scale posterior folded in).
    pub variance: Vec<f64>,
    /// `E[sigma^2 | eta]`.
    pub sigma2_mean: f64,
}

pub fn scalar_smoother_oracle(
    spec: &ModelSpec,
    eta: &DMatrix<f64>,
) -> Result<ScalarSmootherOracle> {
    if spec.q() != 1 || spec.p() != 1 {
        return Err(Error::invalid("scalar oracle needs Q = 1, D = 2"));
    }
    let t_len = eta.ncols();

    // Scalar system coefficients.
    let g: Vec<f64> = (0..t_len).map(|t| spec.g.at(t)[(0, 0)]).collect();
    let w: Vec<f64> = (0..t_len).map(|t| spec.w.at(t)[(0, 0)]).collect();
    let f: Vec<f64> = (0..t_len).map(|t| spec.f.at(t)[0]).collect();
    let gam: Vec<f64> = (0..t_len).map(|t| *spec.gamma.at(t)).collect();
    let m0 = spec.m0[(0, 0)];
    let c0 = spec.c0[(0, 0)];

    // State means and covariances under unit sigma^2.
    let mut mu = vec![m0; t_len + 1];
    for t in 1..=t_len {
        mu[t] = g[t - 1] * mu[t - 1];
    }
    let mut cov_states = DMatrix::zeros(t_len + 1, t_len + 1);
    cov_states[(0, 0)] = c0;
    for t in 1..=t_len {
        for s in 0..t {
            cov_states[(t, s)] = g[t - 1] * cov_states[(t - 1, s)];
            cov_states[(s, t)] = cov_states[(t, s)];
        }
        cov_states[(t, t)] = g[t - 1] * g[t - 1] * cov_states[(t - 1, t - 1)] + w[t - 1];
    }

    // Cross-covariances with the etas and the eta marginal.
    let mut sigma_xy = DMatrix::zeros(t_len + 1, t_len);
    let mut sigma_yy = DMatrix::zeros(t_len, t_len);
    let mut mean_y = DVector::zeros(t_len);
    for t in 0..t_len {
        mean_y[t] = f[t] * mu[t + 1];
        for s in 0..=t_len {
            sigma_xy[(s, t)] = f[t] * cov_states[(s, t + 1)];
        }
        for s in 0..t_len {
            let mut c = f[t] * f[s] * cov_states[(t + 1, s + 1)];
            if t == s {
                c += gam[t];
            }
            sigma_yy[(t, s)] = c;
        }
    }

    // Condition states on etas.
    let chol_yy =
        Cholesky::new(sigma_yy).ok_or_else(|| Error::not_pd("eta marginal covariance"))?;
    let y = DVector::from_fn(t_len, |t, _| eta[(0, t)]);
    let resid = &y - mean_y;
    let alpha = chol_yy.solve(&resid);
    let cond_mean = DVector::from_fn(t_len + 1, |t, _| mu[t]) + &sigma_xy * alpha;
    let gain = chol_yy.solve(&sigma_xy.transpose());
    let cond_cov = cov_states - &sigma_xy * gain;

    // Conjugate posterior of the scale: InvGamma((nu0+T)/2,
    // (xi0 + r' A^{-1} r)/2), so the mean is the ratio below.
    let prior = explicit_prior_matrix(spec, t_len)?;
    let chol_a = Cholesky::new(prior.a.clone())
        .ok_or_else(|| Error::not_pd("explicit prior matrix A"))?;
    let r = &y - DVector::from_fn(t_len, |t, _| prior.b[(t, 0)]);
    let quad = r.dot(&chol_a.solve(&r));
    let xi0 = spec.xi0[(0, 0)];
    let sigma2_mean = (xi0 + quad) / (spec.nu0 + t_len as f64 - 2.0);

    Ok(ScalarSmootherOracle {
        mean: cond_mean.iter().copied().collect(),
        variance: (0..=t_len)
            .map(|t| cond_cov[(t, t)] * sigma2_mean)
            .collect(),
        sigma2_mean,
    })
}

/// Condition-number estimate of the explicit prior matrix, used to report
/// how the materialised construction degrades with series length.
pub fn explicit_prior_condition(spec: &ModelSpec, t_len: usize) -> Result<f64> {
    let prior = explicit_prior_matrix(spec, t_len)?;
    let eigs = nalgebra::SymmetricEigen::new(prior.a).eigenvalues;
    let max = eigs.iter().fold(f64::MIN, |a, &b| a.max(b));
    let min = eigs.iter().fold(f64::MAX, |a, &b| a.min(b));
    Ok(max / min.max(f64::MIN_POSITIVE))
}

// ---------------------------------------------------------------------------
// Randomized test instances
// ---------------------------------------------------------------------------

/// Deterministic pseudo-random model specification for cross-checks: dense
/// well-conditioned covariances, contractive-ish dynamics.
pub fn random_spec(q: usize, d: usize, seed: u64) -> ModelSpec {
    let p = d - 1;
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next = move || {
        // splitmix64
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut uni = move |lo: f64, hi: f64| lo + (hi - lo) * next();

    let f = DVector::from_fn(q, |_, _| uni(0.3, 1.2));
    let g = DMatrix::from_fn(q, q, |i, j| {
        if i == j {
            uni(0.5, 0.95)
        } else {
            uni(-0.2, 0.2)
        }
    });
    let half_w = DMatrix::from_fn(q, q, |_, _| uni(-0.4, 0.4));
    let w = &half_w * half_w.transpose() + DMatrix::identity(q, q) * uni(0.1, 0.4);
    let half_c = DMatrix::from_fn(q, q, |_, _| uni(-0.5, 0.5));
    let c0 = &half_c * half_c.transpose() + DMatrix::identity(q, q) * uni(0.3, 0.8);
    let half_xi = DMatrix::from_fn(p, p, |_, _| uni(-0.4, 0.4));
    let xi0 = &half_xi * half_xi.transpose() + DMatrix::identity(p, p) * uni(0.5, 1.0);
    let m0 = DMatrix::from_fn(q, p, |_, _| uni(-0.6, 0.6));

    ModelSpec {
        f: PerTime::Constant(f),
        g: PerTime::Constant(g),
        w: PerTime::Constant(w),
        gamma: PerTime::Constant(uni(0.6, 1.4)),
        m0,
        c0,
        xi0,
        nu0: p as f64 + uni(1.5, 4.0),
    }
}

/// Deterministic pseudo-random counts (zeros included).
pub fn random_dataset(d: usize, t_len: usize, seed: u64) -> CountDataset {
    let mut state = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(7);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let y = DMatrix::from_fn(d, t_len, |_, _| (next() % 37) as u64);
    CountDataset::single_series(y)
}

/// Deterministic pseudo-random latent coordinates.
pub fn random_eta(p: usize, t_len: usize, seed: u64) -> LatentEta {
    let mut state = seed.wrapping_mul(0xda942042e4dd58b5).wrapping_add(3);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    LatentEta::new(DMatrix::from_fn(p, t_len, |_, _| 2.4 * next() - 1.2)).unwrap()
}
