//! The cycle expansion of the log-likelihood ratio, the test built on it, and
//! two likelihood oracles used to check the expansion.
//!
//! ```text
//! T = Σ_{k ≤ m} [2 μ_k (B_{n,k} − p·1{k=1}) − μ_k²] / (4kγ̂^k)
//! ```
//!
//! Under the null `T` is approximately `N(−σ_m²/2, σ_m²)` with
//! `σ_m² = Σ_{k ≤ m} μ_k² / (2kγ̂^k)`, and `σ_m² → σ_b²` as `m` grows.
//!
//! The likelihood itself is `L = E_prior[exp(Σ X∘M − ½ Σ M²)]` with `M` the
//! signal matrix. [`exact_likelihood_discrete`] enumerates finite priors;
//! [`mc_likelihood`] averages over prior draws in log space.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, AsymptoticParams};
use crate::cycles::{cycle_vector, CycleStats};
use crate::defaults::{DEFAULT_EXACT_BUDGET, DEFAULT_K_MAX};
use crate::error::{Error, Result};
use crate::model::{DataMatrix, ModelSpec, PriorSpec, Variant};
use crate::numeric::{log_sum_exp, normal_sf, pairwise_sum, sample_variance};
use crate::sampler::{derive_rep_seed, draw_latents, rng_from_seed};

/// `m = max(1, ⌊(log n)^{1/4}⌋)`, capped at the default `k_max`.
///
/// Any `m` growing slower than `√log n` is admissible; this schedule is a convention.
pub fn default_m(n: usize) -> usize {
    if n < 2 {
        return 1;
    }
    ((n as f64).ln().powf(0.25).floor() as usize).clamp(1, DEFAULT_K_MAX)
}

/// `T` from precomputed cycle statistics and `mu[k - 1] = μ_k`.
pub fn anova_from_cycles(stats: &CycleStats, mu: &[f64], m: usize) -> f64 {
    (1..=m)
        .map(|k| {
            let mu = mu[k - 1];
            (2.0 * mu * stats.centered(k) - mu * mu) / (2.0 * asymptotics::sigma_k_sq(k, stats.gamma_hat))
        })
        .sum()
}

fn check_order(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if m > DEFAULT_K_MAX {
        return Err(Error::OrderTooLarge {
            k: m,
            k_max: DEFAULT_K_MAX,
        });
    }
    Ok(())
}

fn warn_if_not_contiguous(spec: &ModelSpec) {
    match asymptotics::contiguity_margin(spec) {
        Ok(m) if m.contiguous => {}
        Ok(m) => log::warn!(
            "spec is outside the contiguity regime (margin {}); the expansion has no guarantee",
            m.margin
        ),
        Err(e) => log::warn!("contiguity margin unavailable: {e}"),
    }
}

/// The truncated expansion `T` of `log L_n` for the observed matrix, with `γ̂ = p/n`.
pub fn anova_statistic(x: &DataMatrix, spec: &ModelSpec, m: usize) -> Result<f64> {
    check_order(m)?;
    warn_if_not_contiguous(spec);
    let stats = cycle_vector(x.view(), m)?;
    let mu = asymptotics::mu_list(spec, m)?;
    Ok(anova_from_cycles(&stats, &mu, m))
}

/// `1 − Φ((T + σ_m²/2) / σ_m)`, the upper-tail p-value under `N(−σ_m²/2, σ_m²)`.
pub fn null_p_value(statistic: f64, sigma_m_sq: f64) -> f64 {
    normal_sf((statistic + 0.5 * sigma_m_sq) / sigma_m_sq.sqrt())
}

/// Outcome of [`lr_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub m_used: usize,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    /// `Σ_{k ≤ m} μ_k² / (2kγ̂^k)`.
    pub sigma_m_sq: f64,
    pub sigma_b_sq: f64,
    /// Limiting power at `σ_b`.
    pub asymptotic_power: f64,
    /// Limiting power at `σ_m`, what the truncated statistic can reach.
    pub truncated_power: f64,
    pub params: AsymptoticParams,
}

impl TestReport {
    pub fn verdict(&self) -> String {
        format!(
            "{} H0 at level {}: T = {:.6}, p-value = {:.6} (m = {})",
            if self.reject { "reject" } else { "do not reject" },
            self.alpha,
            self.statistic,
            self.p_value,
            self.m_used
        )
    }
}

/// Level-`alpha` test of the null against `spec` using `T` with `m` terms
/// (default [`default_m`] of the observed `n`).
///
/// When every `μ_k` vanishes `T` is constant, and the p-value falls back to
/// the standardized first cycle `(B_{n,1} − p)/√(2γ̂)`.
pub fn lr_test(x: &DataMatrix, spec: &ModelSpec, alpha: f64, m: Option<usize>) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let margin = asymptotics::contiguity_margin(spec)?;
    if !margin.contiguous {
        return Err(Error::NotContiguous(format!(
            "margin {} <= 0; run the threshold report for this spec",
            margin.margin
        )));
    }
    let m = m.unwrap_or_else(|| default_m(x.n()));
    check_order(m)?;
    let stats = cycle_vector(x.view(), m)?;
    let params = AsymptoticParams::from_spec(spec, m)?;
    let statistic = anova_from_cycles(&stats, &params.mu, m);
    let sigma_m_sq = asymptotics::truncated_sigma_sq(&params.mu, stats.gamma_hat, m);
    let p_value = if sigma_m_sq > 0.0 {
        null_p_value(statistic, sigma_m_sq)
    } else {
        normal_sf(stats.normalized(1))
    };
    let sigma_b_sq = params.sigma_b_sq.ok_or_else(|| {
        Error::NotContiguous("some h_i h_j >= gamma, sigma_b^2 is undefined".into())
    })?;
    Ok(TestReport {
        statistic,
        m_used: m,
        p_value,
        reject: p_value < alpha,
        alpha,
        sigma_m_sq,
        sigma_b_sq,
        asymptotic_power: asymptotics::asymptotic_power(alpha, sigma_b_sq.sqrt())?,
        truncated_power: asymptotics::asymptotic_power(alpha, sigma_m_sq.sqrt())?,
        params,
    })
}

fn finite_support(prior: &PriorSpec, which: &str) -> Result<Vec<(Vec<f64>, f64)>> {
    prior
        .support()
        .ok_or_else(|| Error::NotDiscrete(format!("{which} prior is {}", prior.kind().name())))
}

/// Exact `L_n` for finitely supported priors in the unnormalized model.
pub fn exact_likelihood_discrete(x: &DataMatrix, spec: &ModelSpec) -> Result<f64> {
    if spec.variant != Variant::Unnormalized {
        return Err(Error::InvalidArgument(
            "exact enumeration covers the unnormalized variant only".into(),
        ));
    }
    check_dims(x, spec)?;
    Ok(exact_log_likelihood(x.view(), &spec.theta_prior, &spec.u_prior, DEFAULT_EXACT_BUDGET)?.exp())
}

/// `log L_n` by enumeration, for explicit priors and any matrix shape.
///
/// The budget bounds `|supp Θ-row|^n · |supp U-row|^p`. Given `U`, the rows of
/// `Θ` are independent, so the inner expectation factorises over rows.
pub fn exact_log_likelihood(
    x: ArrayView2<'_, f64>,
    theta_prior: &PriorSpec,
    u_prior: &PriorSpec,
    budget: f64,
) -> Result<f64> {
    let (n, p) = x.dim();
    let theta_support = finite_support(theta_prior, "theta")?;
    let u_support = finite_support(u_prior, "u")?;
    if theta_prior.dim() != u_prior.dim() {
        return Err(Error::DimensionMismatch("theta and u priors differ in dimension".into()));
    }
    let required = (theta_support.len() as f64).powi(n as i32) * (u_support.len() as f64).powi(p as i32);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let kappa = u_prior.dim();
    let scale = 1.0 / (p as f64).sqrt();
    let log_theta_w: Vec<f64> = theta_support.iter().map(|(_, w)| w.ln()).collect();

    let mut index = vec![0usize; p];
    let mut terms = Vec::new();
    loop {
        let u = Array2::from_shape_fn((p, kappa), |(j, l)| u_support[index[j]].0[l] * scale);
        let log_wu: f64 = index.iter().map(|&i| u_support[i].1.ln()).sum();
        let gram = u.t().dot(&u);
        let xu = x.dot(&u);
        let row_terms: f64 = xu
            .axis_iter(Axis(0))
            .map(|xu_i| {
                let inner: Vec<f64> = theta_support
                    .iter()
                    .zip(&log_theta_w)
                    .map(|((theta, _), lw)| {
                        let t = ndarray::ArrayView1::from(theta.as_slice());
                        lw + t.dot(&xu_i) - 0.5 * t.dot(&gram.dot(&t))
                    })
                    .collect();
                log_sum_exp(&inner)
            })
            .sum();
        terms.push(log_wu + row_terms);

        // odometer over U assignments
        let mut j = 0;
        while j < p {
            index[j] += 1;
            if index[j] < u_support.len() {
                break;
            }
            index[j] = 0;
            j += 1;
        }
        if j == p {
            break;
        }
    }
    Ok(log_sum_exp(&terms))
}

/// Monte Carlo estimate of `L_n` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McLikelihood {
    pub estimate: f64,
    pub std_error: f64,
    /// `log(estimate)`, kept separately because `estimate` can underflow.
    pub log_estimate: f64,
    /// `std_error / estimate`, also the delta-method standard error of `log_estimate`.
    pub relative_std_error: f64,
    pub draws: usize,
}

fn check_dims(x: &DataMatrix, spec: &ModelSpec) -> Result<()> {
    if (x.n(), x.p()) != (spec.n, spec.p) {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but the model is {}x{}",
            x.n(),
            x.p(),
            spec.n,
            spec.p
        )));
    }
    Ok(())
}

/// Average of `exp(Σ X∘M − ½ Σ M²)` over `r` prior draws; draw `i` uses `derive_rep_seed(seed, i)`.
pub fn mc_likelihood(x: &DataMatrix, spec: &ModelSpec, r: usize, seed: u64) -> Result<McLikelihood> {
    check_dims(x, spec)?;
    mc_likelihood_with_priors(x.view(), spec.variant, &spec.theta_prior, &spec.u_prior, r, seed)
}

/// [`mc_likelihood`] for explicit priors and any matrix shape.
pub fn mc_likelihood_with_priors(
    x: ArrayView2<'_, f64>,
    variant: Variant,
    theta_prior: &PriorSpec,
    u_prior: &PriorSpec,
    r: usize,
    seed: u64,
) -> Result<McLikelihood> {
    if r < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 draws, got {r}")));
    }
    let (n, p) = x.dim();
    let scale = 1.0 / (p as f64).sqrt();
    let log_terms = (0..r as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_rep_seed(seed, i));
            let (theta, u, v) = draw_latents(variant, theta_prior, u_prior, n, p, &mut rng)?;
            let loading = v.unwrap_or_else(|| u * scale);
            let cross = (&x.dot(&loading) * &theta).sum();
            let energy = (&theta.t().dot(&theta) * &loading.t().dot(&loading)).sum();
            Ok(cross - 0.5 * energy)
        })
        .collect::<Result<Vec<f64>>>()?;

    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_terms.iter().map(|l| (l - max).exp()).collect();
    let mean = pairwise_sum(&shifted) / r as f64;
    let log_estimate = max + mean.ln();
    let shifted_se = (sample_variance(&shifted) / r as f64).sqrt();
    Ok(McLikelihood {
        estimate: log_estimate.exp(),
        std_error: shifted_se * max.exp(),
        log_estimate,
        relative_std_error: shifted_se / mean,
        draws: r,
    })
}
