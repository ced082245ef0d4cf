//! Monte Carlo harnesses for the cycle CLTs, the log-likelihood-ratio law and
//! the variance decomposition.
//!
//! Replication `r` samples with seed `derive_rep_seed(master_seed, r)`.
//! Replications run in parallel and are collected in index order, and every
//! reduction is a pairwise sum over that order, so outputs do not depend on
//! the number of worker threads.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, mu_list, sigma_k_sq, truncated_sigma_sq};
use crate::cycles::cycle_vector;
use crate::defaults::DEFAULT_K_MAX;
use crate::error::{Error, Result, Violation};
use crate::io::write_atomic;
use crate::llr::{anova_from_cycles, mc_likelihood};
use crate::model::ModelSpec;
use crate::numeric::{mean, normal_cdf, normal_quantile, pairwise_sum, quantile_sorted, sample_variance};
use crate::sampler::{derive_rep_seed, sample};

/// Domain tag separating likelihood draws from data draws of the same replication.
const LIKELIHOOD_STREAM: u64 = 0x4c48_4154;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Null,
    Alternative,
}

impl Hypothesis {
    pub fn is_alternative(self) -> bool {
        self == Hypothesis::Alternative
    }
}

/// Which harness an experiment document drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Clt,
    Llr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub spec: ModelSpec,
    pub hypothesis: Hypothesis,
    pub reps: usize,
    /// Cycle orders reported by the CLT harness.
    pub k_list: Vec<usize>,
    /// Terms of the log-likelihood expansion; the largest `m` for the decomposition.
    pub m: usize,
    pub master_seed: u64,
    /// Directory receiving CSV and JSON outputs.
    pub output_path: Option<PathBuf>,
    /// Prior draws per likelihood estimate; `0` skips the likelihood.
    pub mc_draws: usize,
}

impl ExperimentConfig {
    /// All constraint violations, with field paths.
    pub fn violations(&self) -> Vec<Violation> {
        settings_violations(self.reps, &self.k_list, self.m, self.mc_draws)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    fn rep_seed(&self, rep: usize) -> u64 {
        derive_rep_seed(self.master_seed, rep as u64)
    }
}

/// Violations among the run settings of an experiment, independent of the model.
pub fn settings_violations(reps: usize, k_list: &[usize], m: usize, mc_draws: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if reps < 2 {
        out.push(Violation::new("reps", format!("must be at least 2, got {reps}")));
    }
    if k_list.is_empty() {
        out.push(Violation::new("k_list", "must list at least one order"));
    }
    for (i, &k) in k_list.iter().enumerate() {
        if k == 0 || k > DEFAULT_K_MAX {
            out.push(Violation::new(
                format!("k_list[{i}]"),
                format!("must lie in 1..={DEFAULT_K_MAX}, got {k}"),
            ));
        }
    }
    if m == 0 || m > DEFAULT_K_MAX {
        out.push(Violation::new("m", format!("must lie in 1..={DEFAULT_K_MAX}, got {m}")));
    }
    if mc_draws == 1 {
        out.push(Violation::new("mc_draws", "must be 0 or at least 2"));
    }
    out
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|estimate − target| ≤ z · std_error`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.estimate - target).abs() <= z * self.std_error
    }
}

fn central_moment(values: &[f64], center: f64, power: i32) -> f64 {
    let terms: Vec<f64> = values.iter().map(|v| (v - center).powi(power)).collect();
    pairwise_sum(&terms) / values.len() as f64
}

pub fn mean_estimate(values: &[f64]) -> Estimate {
    Estimate {
        estimate: mean(values),
        std_error: (sample_variance(values) / values.len() as f64).sqrt(),
    }
}

/// Sample variance with the standard error `√((m₄ − s⁴)/R)`.
pub fn variance_estimate(values: &[f64]) -> Estimate {
    let s2 = sample_variance(values);
    let m4 = central_moment(values, mean(values), 4);
    Estimate {
        estimate: s2,
        std_error: ((m4 - s2 * s2).max(0.0) / values.len() as f64).sqrt(),
    }
}

/// Sample skewness with the normal-theory standard error.
pub fn skewness_estimate(values: &[f64]) -> Estimate {
    let r = values.len() as f64;
    let m = mean(values);
    let m2 = central_moment(values, m, 2);
    let m3 = central_moment(values, m, 3);
    let estimate = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    Estimate {
        estimate,
        std_error: (6.0 * r * (r - 1.0) / ((r - 2.0) * (r + 1.0) * (r + 3.0))).sqrt(),
    }
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cross: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let sa = central_moment(a, ma, 2);
    let sb = central_moment(b, mb, 2);
    if sa == 0.0 || sb == 0.0 {
        return 0.0;
    }
    (pairwise_sum(&cross) / a.len() as f64 / (sa * sb).sqrt()).clamp(-1.0, 1.0)
}

/// `sup_x |F_N(x) − F(x)|`, evaluated at the order statistics.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max))
}

/// Asymptotic 1%-level Kolmogorov critical value `1.63/√N`.
pub fn ks_critical_value(reps: usize) -> f64 {
    1.63 / (reps as f64).sqrt()
}

/// `E[Z^m]` for standard normal `Z`: the number of pairings of `m` points.
///
/// Pairings are enumerated for `m ≤ 10`; larger even `m` use `(m − 1)!!`.
pub fn wick_moment(m: usize) -> Result<u64> {
    if m > 20 {
        return Err(Error::InvalidArgument(format!("m must be at most 20, got {m}")));
    }
    if m % 2 == 1 {
        return Ok(0);
    }
    if m <= 10 {
        fn count(free: &mut Vec<usize>) -> u64 {
            if free.is_empty() {
                return 1;
            }
            let first = free.remove(0);
            let mut total = 0;
            for i in 0..free.len() {
                let partner = free.remove(i);
                total += count(free);
                free.insert(i, partner);
            }
            free.insert(0, first);
            total
        }
        return Ok(count(&mut (0..m).collect()));
    }
    Ok((1..m as u64).step_by(2).product())
}

/// Runs `f` for every replication in parallel, returning results in replication order.
fn replicate<T: Send>(reps: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..reps).into_par_iter().map(f).collect()
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.json` atomically.
pub fn write_outputs(dir: &Path, stem: &str, csv: &str, json: &str) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.csv")), csv.as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Serialize(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltOrder {
    pub k: usize,
    /// Subtracted from `B_{n,k} − p·1{k=1}` before scaling: `μ_k` under the alternative, else 0.
    pub centering: f64,
    /// Mean of `B_{n,k} − p·1{k=1}`.
    pub raw_mean: Estimate,
    pub mean: Estimate,
    pub variance: Estimate,
    pub skewness: Estimate,
    pub ks: f64,
    pub ks_critical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub hypothesis: Hypothesis,
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub orders: Vec<CltOrder>,
    /// Pearson correlations of the standardized statistics, indexed like `orders`.
    pub correlations: Vec<Vec<f64>>,
    /// Standard error of a correlation near 0, `1/√reps`.
    pub correlation_std_error: f64,
    /// `raw[rep][i]` is `B_{n,k}` for `k = orders[i].k`.
    #[serde(skip)]
    pub raw: Vec<Vec<f64>>,
    #[serde(skip)]
    pub standardized: Vec<Vec<f64>>,
}

impl CltReport {
    pub fn order(&self, k: usize) -> Option<&CltOrder> {
        self.orders.iter().find(|o| o.k == k)
    }

    /// Per-replication CSV, one row per `(rep, k)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# spiked-cycles clt v1\nrep,k,raw,standardized\n");
        for (rep, (raw, std)) in self.raw.iter().zip(&self.standardized).enumerate() {
            for (i, order) in self.orders.iter().enumerate() {
                out.push_str(&format!("{rep},{},{},{}\n", order.k, fmt_value(raw[i]), fmt_value(std[i])));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Standardized cycle statistics `(B_{n,k} − p·1{k=1} − c_k)/√(2kγ̂^k)` over replications,
/// with `c_k = μ_k` under the alternative and 0 under the null.
pub fn clt_experiment(config: &ExperimentConfig) -> Result<CltReport> {
    config.validate()?;
    let spec = &config.spec;
    let alternative = config.hypothesis.is_alternative();
    let k_top = *config.k_list.iter().max().expect("validated non-empty");
    let mu = mu_list(spec, k_top)?;
    let centering: Vec<f64> = config
        .k_list
        .iter()
        .map(|&k| if alternative { mu[k - 1] } else { 0.0 })
        .collect();

    let rows = replicate(config.reps, |rep| {
        let x = sample(spec, alternative, config.rep_seed(rep))?.x;
        let stats = cycle_vector(x.view(), k_top)?;
        let raw: Vec<f64> = config.k_list.iter().map(|&k| stats.get(k)).collect();
        let std: Vec<f64> = config
            .k_list
            .iter()
            .zip(&centering)
            .map(|(&k, c)| (stats.centered(k) - c) / sigma_k_sq(k, stats.gamma_hat).sqrt())
            .collect();
        Ok((raw, std))
    })?;
    let (raw, standardized): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();

    let column = |data: &[Vec<f64>], i: usize| -> Vec<f64> { data.iter().map(|r| r[i]).collect() };
    let p = spec.p as f64;
    let orders: Vec<CltOrder> = config
        .k_list
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let z = column(&standardized, i);
            let centered: Vec<f64> = column(&raw, i)
                .into_iter()
                .map(|b| if k == 1 { b - p } else { b })
                .collect();
            Ok(CltOrder {
                k,
                centering: centering[i],
                raw_mean: mean_estimate(&centered),
                mean: mean_estimate(&z),
                variance: variance_estimate(&z),
                skewness: skewness_estimate(&z),
                ks: ks_statistic(&z, normal_cdf)?,
                ks_critical: ks_critical_value(config.reps),
            })
        })
        .collect::<Result<_>>()?;
    let l = config.k_list.len();
    let correlations = (0..l)
        .map(|a| {
            (0..l)
                .map(|b| {
                    if a == b {
                        1.0
                    } else {
                        correlation(&column(&standardized, a), &column(&standardized, b))
                    }
                })
                .collect()
        })
        .collect();
    Ok(CltReport {
        hypothesis: config.hypothesis,
        n: spec.n,
        p: spec.p,
        reps: config.reps,
        master_seed: config.master_seed,
        orders,
        correlations,
        correlation_std_error: 1.0 / (config.reps as f64).sqrt(),
        raw,
        standardized,
    })
}

/// A sample quantile with a distribution-free 95% confidence interval from order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub q: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn quantile_estimate(values: &[f64], q: f64) -> QuantileEstimate {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    let half = normal_quantile(0.975) * (r * q * (1.0 - q)).sqrt();
    let idx = |v: f64| (v.max(1.0).min(r) as usize) - 1;
    QuantileEstimate {
        q,
        estimate: quantile_sorted(&sorted, q),
        lower: sorted[idx((r * q - half).floor())],
        upper: sorted[idx((r * q + half).ceil())],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlrRep {
    pub statistic: f64,
    pub log_likelihood: Option<f64>,
    /// Delta-method standard error of `log L̂`.
    pub log_likelihood_se: Option<f64>,
}

impl LlrRep {
    /// `|log L̂ − T|`.
    pub fn gap(&self) -> Option<f64> {
        self.log_likelihood.map(|l| (l - self.statistic).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlrReport {
    pub hypothesis: Hypothesis,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub reps: usize,
    pub mc_draws: usize,
    pub master_seed: u64,
    /// `σ_m² = Σ_{k ≤ m} μ_k² / (2kγ^k)`.
    pub sigma_m_sq: f64,
    pub sigma_b_sq: f64,
    /// `∓σ_m²/2` for null/alternative.
    pub target_mean_truncated: f64,
    pub target_mean_full: f64,
    pub statistic_mean: Estimate,
    pub statistic_variance: Estimate,
    pub log_likelihood_mean: Option<Estimate>,
    pub log_likelihood_variance: Option<Estimate>,
    /// Median of the per-replication standard errors of `log L̂`.
    pub log_likelihood_median_se: Option<f64>,
    /// Quantiles 0.5 and 0.9 of `|log L̂ − T|`.
    pub gap_quantiles: Vec<QuantileEstimate>,
    #[serde(skip)]
    pub per_rep: Vec<LlrRep>,
}

impl LlrReport {
    pub fn gap_quantile(&self, q: f64) -> Option<&QuantileEstimate> {
        self.gap_quantiles.iter().find(|g| g.q == q)
    }

    /// Per-replication CSV with rows for `T`, `log_lhat` and `gap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# spiked-cycles llr v1\nrep,stat,raw,standardized\n");
        let sm = self.sigma_m_sq.sqrt();
        let sb = self.sigma_b_sq.sqrt();
        for (rep, r) in self.per_rep.iter().enumerate() {
            let z = (r.statistic - self.target_mean_truncated) / sm;
            out.push_str(&format!("{rep},T,{},{}\n", fmt_value(r.statistic), fmt_value(z)));
            if let (Some(l), Some(g)) = (r.log_likelihood, r.gap()) {
                let z = (l - self.target_mean_full) / sb;
                out.push_str(&format!("{rep},log_lhat,{},{}\n", fmt_value(l), fmt_value(z)));
                out.push_str(&format!("{rep},gap,{},\n", fmt_value(g)));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// `T` and, when `mc_draws > 0`, the Monte Carlo `log L̂` for every replication.
pub fn llr_experiment(config: &ExperimentConfig) -> Result<LlrReport> {
    config.validate()?;
    let spec = &config.spec;
    let margin = asymptotics::contiguity_margin(spec)?;
    if !margin.contiguous {
        return Err(Error::NotContiguous(format!("margin {} <= 0", margin.margin)));
    }
    let alternative = config.hypothesis.is_alternative();
    let m = config.m;
    let mu = mu_list(spec, m)?;
    let gamma = spec.gamma();
    let sigma_m_sq = truncated_sigma_sq(&mu, gamma, m);
    let sigma_b_sq = asymptotics::sigma_b_sq(&asymptotics::signal_eigenvalues(spec)?, gamma)?;
    let sign = if alternative { 0.5 } else { -0.5 };

    let per_rep = replicate(config.reps, |rep| {
        let seed = config.rep_seed(rep);
        let x = sample(spec, alternative, seed)?.x;
        let stats = cycle_vector(x.view(), m)?;
        let statistic = anova_from_cycles(&stats, &mu, m);
        let (log_likelihood, log_likelihood_se) = if config.mc_draws > 0 {
            let mc = mc_likelihood(&x, spec, config.mc_draws, derive_rep_seed(seed, LIKELIHOOD_STREAM))?;
            (Some(mc.log_estimate), Some(mc.relative_std_error))
        } else {
            (None, None)
        };
        Ok(LlrRep {
            statistic,
            log_likelihood,
            log_likelihood_se,
        })
    })?;

    let t: Vec<f64> = per_rep.iter().map(|r| r.statistic).collect();
    let logs: Vec<f64> = per_rep.iter().filter_map(|r| r.log_likelihood).collect();
    let gaps: Vec<f64> = per_rep.iter().filter_map(|r| r.gap()).collect();
    let have_mc = !logs.is_empty();
    let median_se = if have_mc {
        let ses: Vec<f64> = per_rep.iter().filter_map(|r| r.log_likelihood_se).collect();
        Some(crate::numeric::quantile(&ses, 0.5))
    } else {
        None
    };
    Ok(LlrReport {
        hypothesis: config.hypothesis,
        n: spec.n,
        p: spec.p,
        m,
        reps: config.reps,
        mc_draws: config.mc_draws,
        master_seed: config.master_seed,
        sigma_m_sq,
        sigma_b_sq,
        target_mean_truncated: sign * sigma_m_sq,
        target_mean_full: sign * sigma_b_sq,
        statistic_mean: mean_estimate(&t),
        statistic_variance: variance_estimate(&t),
        log_likelihood_mean: have_mc.then(|| mean_estimate(&logs)),
        log_likelihood_variance: have_mc.then(|| variance_estimate(&logs)),
        log_likelihood_median_se: median_se,
        gap_quantiles: if have_mc {
            vec![quantile_estimate(&gaps, 0.5), quantile_estimate(&gaps, 0.9)]
        } else {
            Vec::new()
        },
        per_rep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub m: usize,
    /// `Σ_{k ≤ m} μ_k² / (2kγ^k)`.
    pub cumulative: f64,
    pub fraction: f64,
    /// Variance of the `m`-term statistic over replications.
    pub empirical_variance: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub hypothesis: Hypothesis,
    pub sigma_b_sq: f64,
    pub reps: usize,
    pub rows: Vec<DecompositionRow>,
}

impl DecompositionReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("sigma_b^2 = {:.6}\nm    cumulative    fraction    empirical_var (se)\n", self.sigma_b_sq);
        for r in &self.rows {
            out.push_str(&format!(
                "{:<4} {:<13.6} {:<11.6} {:.6} ({:.6})\n",
                r.m, r.cumulative, r.fraction, r.empirical_variance.estimate, r.empirical_variance.std_error
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# spiked-cycles decomposition v1\nm,cumulative,fraction,empirical_variance,std_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.m, r.cumulative, r.fraction, r.empirical_variance.estimate, r.empirical_variance.std_error
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Share of `σ_b²` carried by the first `m` cycles for `m = 1..=config.m`, beside the
/// simulated variance of the `m`-term statistic.
pub fn variance_decomposition_report(config: &ExperimentConfig) -> Result<DecompositionReport> {
    config.validate()?;
    let spec = &config.spec;
    let gamma = spec.gamma();
    let m_max = config.m;
    let sigma_b_sq = asymptotics::sigma_b_sq(&asymptotics::signal_eigenvalues(spec)?, gamma)?;
    let mu = mu_list(spec, m_max)?;
    let alternative = config.hypothesis.is_alternative();
    let per_rep = replicate(config.reps, |rep| {
        let x = sample(spec, alternative, config.rep_seed(rep))?.x;
        let stats = cycle_vector(x.view(), m_max)?;
        Ok((1..=m_max).map(|m| anova_from_cycles(&stats, &mu, m)).collect::<Vec<f64>>())
    })?;
    let rows = (1..=m_max)
        .map(|m| {
            let cumulative = truncated_sigma_sq(&mu, gamma, m);
            let t: Vec<f64> = per_rep.iter().map(|r| r[m - 1]).collect();
            DecompositionRow {
                m,
                cumulative,
                fraction: if sigma_b_sq > 0.0 { cumulative / sigma_b_sq } else { 1.0 },
                empirical_variance: variance_estimate(&t),
            }
        })
        .collect();
    Ok(DecompositionReport {
        hypothesis: config.hypothesis,
        sigma_b_sq,
        reps: config.reps,
        rows,
    })
}
