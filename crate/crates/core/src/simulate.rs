//! Synthetic dataset generation for tests, calibration studies, and
//! benchmark sweeps.
//!
//! The default configuration draws from the random-walk model used
//! throughout: `Sigma ~ IW(I, D+3)`, per-series `Theta_0 ~ N(M_0, C_0,
//! Sigma)` with `M_0 ~ Uniform(0.1, 1)` elementwise and `C_0 ~ Uniform(1,
//! 1.5)`, state noise variance `w = 0.45`, series of 100 timepoints, and
//! 5% of timepoints missing at random. The ground truth is returned next
//! to the counts so estimates can be scored.

use crate::error::{Error, Result};
use crate::model::{builtin_random_walk, CountDataset, ModelSpec};
use crate::rng::phase_rng;
use crate::smoother::{sample_inverse_wishart, sample_matrix_normal};
use crate::compositional::alr_inverse_raw;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub d: usize,
    pub t_total: usize,
    /// Length of each series; the last one may be shorter.
    pub series_length: usize,
    pub missing_fraction: f64,
    /// Random-walk state variance.
    pub w: f64,
    /// Autoregressive coefficient of the state walk; 1 is the plain random
    /// walk, values below 1 mean-revert.
    pub reversion: f64,
    /// Multinomial total per observed column.
    pub counts_per_timepoint: u64,
    /// Inverse-Wishart scale; identity when absent.
    pub xi0: Option<DMatrix<f64>>,
    /// Inverse-Wishart dof; `D + 3` when absent.
    pub nu0: Option<f64>,
    pub m0_range: (f64, f64),
    pub c0_range: (f64, f64),
    pub seed: u64,
}

impl SimConfig {
    pub fn new(d: usize, t_total: usize, seed: u64) -> Self {
        SimConfig {
            d,
            t_total,
            series_length: 100,
            missing_fraction: 0.05,
            w: 0.45,
            reversion: 1.0,
            counts_per_timepoint: 500,
            xi0: None,
            nu0: None,
            m0_range: (0.1, 1.0),
            c0_range: (1.0, 1.5),
            seed,
        }
    }

    fn series_lengths(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut left = self.t_total;
        while left > 0 {
            let len = left.min(self.series_length);
            out.push(len);
            left -= len;
        }
        out
    }
}

/// The latent quantities behind a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub theta: Vec<DMatrix<f64>>,
    pub theta0: Vec<DMatrix<f64>>,
    pub eta: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

/// Draws a dataset from the default random-walk model, returning the data,
/// the exact model specification it was drawn from (usable as the fitting
/// prior), and the latent truth.
pub fn simulate(config: &SimConfig) -> Result<(CountDataset, ModelSpec, SimTruth)> {
    if config.d < 2 || config.t_total == 0 {
        return Err(Error::invalid("simulation needs D >= 2 and T >= 1"));
    }
    if !(0.0..1.0).contains(&config.missing_fraction) {
        return Err(Error::invalid("missing fraction must lie in [0, 1)"));
    }
    let p = config.d - 1;

    let mut prior_rng = phase_rng(config.seed, 0);
    let (m_lo, m_hi) = config.m0_range;
    let (c_lo, c_hi) = config.c0_range;
    let m0 = DMatrix::from_fn(1, p, |_, _| m_lo + (m_hi - m_lo) * prior_rng.random::<f64>());
    let c0 = c_lo + (c_hi - c_lo) * prior_rng.random::<f64>();

    if !(config.reversion > 0.0 && config.reversion <= 1.0) {
        return Err(Error::invalid("reversion must lie in (0, 1]"));
    }
    let mut spec = builtin_random_walk(config.d, config.t_total, config.w)?;
    spec.m0 = m0;
    spec.c0 = DMatrix::from_element(1, 1, c0);
    if config.reversion != 1.0 {
        spec.g = crate::model::PerTime::Constant(DMatrix::from_element(1, 1, config.reversion));
    }
    if let Some(xi0) = &config.xi0 {
        spec.xi0 = xi0.clone();
    }
    if let Some(nu0) = config.nu0 {
        spec.nu0 = nu0;
    }

    let (data, truth) = simulate_from_spec(
        &spec,
        &config.series_lengths(),
        config.counts_per_timepoint,
        config.missing_fraction,
        config.seed,
    )?;
    Ok((data, spec, truth))
}

/// Simulates counts from an arbitrary model specification over the given
/// series layout. Works for any `(F, G, W)`, so non-random-walk dynamics
/// (e.g. local trend) can be exercised too.
pub fn simulate_from_spec(
    spec: &ModelSpec,
    series_lengths: &[usize],
    counts_per_timepoint: u64,
    missing_fraction: f64,
    seed: u64,
) -> Result<(CountDataset, SimTruth)> {
    let p = spec.p();
    let d = spec.d();
    let t_total: usize = series_lengths.iter().sum();
    let mut rng = phase_rng(seed, 1);

    let sigma = sample_inverse_wishart(&spec.xi0, spec.nu0, &mut rng)?;
    let sigma_chol = nalgebra::Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::not_pd("simulated Sigma"))?;
    let l_sigma = sigma_chol.unpack();

    let mut theta: Vec<DMatrix<f64>> = Vec::with_capacity(t_total);
    let mut theta0: Vec<DMatrix<f64>> = Vec::new();
    let mut eta = DMatrix::zeros(p, t_total);
    let mut pi = DMatrix::zeros(d, t_total);

    let mut t = 0;
    for &len in series_lengths {
        let th0 = sample_matrix_normal(&spec.m0, &spec.c0, &sigma, &mut rng)?;
        theta0.push(th0.clone());
        let mut prev = th0;
        for _ in 0..len {
            let omega = sample_matrix_normal(
                &DMatrix::zeros(spec.q(), p),
                spec.w.at(t),
                &sigma,
                &mut rng,
            )?;
            let th = spec.g.at(t) * &prev + omega;
            let noise = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let eta_t =
                th.transpose() * spec.f.at(t) + &l_sigma * noise * spec.gamma.at(t).sqrt();
            eta.set_column(t, &eta_t);
            let probs = alr_inverse_raw(eta_t.as_slice());
            for (row, &pr) in probs.iter().enumerate() {
                pi[(row, t)] = pr;
            }
            theta.push(th.clone());
            prev = th;
            t += 1;
        }
    }

    // Counts and missingness on separate streams from the state draws.
    let mut count_rng = phase_rng(seed, 2);
    let mut y = DMatrix::zeros(d, t_total);
    for t in 0..t_total {
        let column: Vec<f64> = (0..d).map(|row| pi[(row, t)]).collect();
        let draw = sample_multinomial(counts_per_timepoint, &column, &mut count_rng);
        for (row, &c) in draw.iter().enumerate() {
            y[(row, t)] = c;
        }
    }
    let mut mask_rng = phase_rng(seed, 3);
    let observed: Vec<bool> = (0..t_total)
        .map(|_| mask_rng.random::<f64>() >= missing_fraction)
        .collect();
    for t in 0..t_total {
        if !observed[t] {
            for row in 0..d {
                y[(row, t)] = 0;
            }
        }
    }

    let data = CountDataset {
        y,
        observed,
        series_lengths: series_lengths.to_vec(),
    };
    Ok((
        data,
        SimTruth {
            theta,
            theta0,
            eta,
            pi,
            sigma,
        },
    ))
}

/// Multinomial draw via sequential conditional binomials.
pub(crate) fn sample_multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p = 1.0;
    for (i, &p) in probs.iter().enumerate().take(probs.len() - 1) {
        if remaining_n == 0 {
            break;
        }
        let cond = (p / remaining_p).clamp(0.0, 1.0);
        let draw = if cond >= 1.0 {
            remaining_n
        } else {
            Binomial::new(remaining_n, cond).map(|b| b.sample(rng)).unwrap_or(0)
        };
        out[i] = draw;
        remaining_n -= draw;
        remaining_p -= p;
        if remaining_p <= 0.0 {
            break;
        }
    }
    *out.last_mut().unwrap() += remaining_n;
    out
}

/// Fraction of zero cells among observed columns.
pub fn sparsity_report(data: &CountDataset) -> f64 {
    let mut zeros = 0usize;
    let mut cells = 0usize;
    for t in 0..data.t_total() {
        if !data.observed[t] {
            continue;
        }
        for d in 0..data.d() {
            cells += 1;
            if data.y[(d, t)] == 0 {
                zeros += 1;
            }
        }
    }
    if cells == 0 {
        0.0
    } else {
        zeros as f64 / cells as f64
    }
}
