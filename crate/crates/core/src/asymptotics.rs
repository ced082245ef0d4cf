//! Closed-form limits: cycle means `μ_k`, variances `2kγ^k`, the limiting
//! log-likelihood-ratio variance `σ_b²`, contiguity margins and the power and
//! total-variation limits that follow from a Gaussian location shift.
//!
//! `σ_b²` is evaluated as `−½ Σ_{i,j} log(1 − h_i h_j / γ)`. The leading minus
//! sign is required for this to equal the positive series
//! `Σ_k μ_k² / (2kγ^k)`; both forms are computed and cross-checked.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, spectral_norm};
use crate::model::{ModelSpec, Variant};
use crate::numeric::{normal_cdf, normal_quantile};

/// Required agreement between the closed form and the series for `σ_b²`.
pub const SIGMA_B_AGREEMENT: f64 = 1e-8;
/// Per-term tail bound at which the `σ_b²` series is truncated.
pub const SERIES_TAIL_BOUND: f64 = 1e-12;

/// `h_1 ≥ … ≥ h_κ`: eigenvalues of `Σ_Θ Σ_U` (unnormalized) or of `Σ_Θ` (normalized).
pub fn signal_eigenvalues(spec: &ModelSpec) -> Result<Vec<f64>> {
    let sigma_theta = spec.theta_prior.covariance();
    match spec.variant {
        Variant::Unnormalized => linalg::product_eigenvalues(sigma_theta, spec.u_prior.covariance()),
        Variant::Normalized => Ok(linalg::sym_eigen(sigma_theta).0),
    }
}

fn signal_matrix(spec: &ModelSpec) -> DMatrix<f64> {
    match spec.variant {
        Variant::Unnormalized => spec.theta_prior.covariance() * spec.u_prior.covariance(),
        Variant::Normalized => spec.theta_prior.covariance().clone(),
    }
}

/// `μ_k`: `Tr((Σ_Θ Σ_U)^k)` for the unnormalized model, `Tr(Σ_Θ^k)` for the normalized one.
pub fn mu_k(spec: &ModelSpec, k: usize) -> Result<f64> {
    linalg::trace_power(&signal_matrix(spec), k)
}

/// `μ_1, …, μ_m`.
pub fn mu_list(spec: &ModelSpec, m: usize) -> Result<Vec<f64>> {
    let base = signal_matrix(spec);
    let mut acc = base.clone();
    let mut out = Vec::with_capacity(m);
    for k in 1..=m {
        if k > 1 {
            acc = &acc * &base;
        }
        out.push(acc.trace());
    }
    Ok(out)
}

/// Limiting variance `2kγ^k` of `B_{n,k}` (centered at `p` for `k = 1`).
pub fn sigma_k_sq(k: usize, gamma: f64) -> f64 {
    2.0 * k as f64 * gamma.powi(k as i32)
}

/// `Σ_{k ≤ m} μ_k² / (2kγ^k)`, the part of `σ_b²` carried by the first `m` cycles.
pub fn truncated_sigma_sq(mu: &[f64], gamma: f64, m: usize) -> f64 {
    mu.iter()
        .take(m)
        .enumerate()
        .map(|(i, mu)| mu * mu / sigma_k_sq(i + 1, gamma))
        .sum()
}

fn pair_ratios(h: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let mut out = Vec::with_capacity(h.len() * h.len());
    for &a in h {
        for &b in h {
            let x = a * b / gamma;
            if x >= 1.0 {
                return Err(Error::NotContiguous(format!(
                    "h_i h_j / gamma = {x} >= 1 for h_i = {a}, h_j = {b}"
                )));
            }
            out.push(x);
        }
    }
    Ok(out)
}

/// `σ_b² = −½ Σ_{i,j} log(1 − h_i h_j / γ)`, verified against the series form.
pub fn sigma_b_sq(h: &[f64], gamma: f64) -> Result<f64> {
    let closed = sigma_b_sq_closed(h, gamma)?;
    let (series, _) = sigma_b_sq_series(h, gamma)?;
    if (closed - series).abs() > SIGMA_B_AGREEMENT {
        return Err(Error::InvalidArgument(format!(
            "closed form {closed} and series {series} for sigma_b^2 disagree"
        )));
    }
    Ok(closed)
}

pub fn sigma_b_sq_closed(h: &[f64], gamma: f64) -> Result<f64> {
    Ok(pair_ratios(h, gamma)?
        .into_iter()
        .map(|x| -0.5 * (-x).ln_1p())
        .sum())
}

/// `Σ_k μ_k² / (2kγ^k)` expanded per pair as `Σ_k x^k / (2k)` with `x = h_i h_j / γ`.
///
/// Each pair's series stops at the first `K` with `|x|^{K+1} / ((K+1)(1−|x|)) <`
/// [`SERIES_TAIL_BOUND`]. Returns the sum and the largest `K` used.
pub fn sigma_b_sq_series(h: &[f64], gamma: f64) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut max_terms = 0;
    for x in pair_ratios(h, gamma)? {
        let ax = x.abs();
        let mut sum = 0.0;
        let mut power = 1.0;
        let mut k = 0usize;
        loop {
            k += 1;
            power *= x;
            sum += power / (2.0 * k as f64);
            let tail = ax.powi(k as i32 + 1) / ((k as f64 + 1.0) * (1.0 - ax));
            if tail < SERIES_TAIL_BOUND {
                break;
            }
        }
        max_terms = max_terms.max(k);
        total += sum;
    }
    Ok((total, max_terms))
}

/// Distance to the contiguity boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContiguityMargin {
    pub contiguous: bool,
    /// `γ` minus the variant's operator-norm product.
    pub margin: f64,
}

/// Margin of the sufficient condition for contiguity and normal limits.
///
/// Unnormalized: `‖Σ̃_Θ Σ̃_U‖₂ ‖Σ_Θ Σ_U‖₂ < γ`.
/// Normalized: `‖Σ_U^{-1/2} Σ̃_U Σ_U^{-1/2} Σ̃_Θ‖₂ ‖Σ_Θ‖₂ < γ`, needing `Σ_U` invertible.
pub fn contiguity_margin(spec: &ModelSpec) -> Result<ContiguityMargin> {
    let (st, su) = (spec.theta_prior.covariance(), spec.u_prior.covariance());
    let (pt, pu) = (spec.theta_prior.variance_proxy(), spec.u_prior.variance_proxy());
    let product = match spec.variant {
        Variant::Unnormalized => spectral_norm(&(pt * pu)) * spectral_norm(&(st * su)),
        Variant::Normalized => {
            let root = linalg::inverse_sqrt_sym(su)?;
            spectral_norm(&(&root * pu * &root * pt)) * spectral_norm(st)
        }
    };
    let margin = spec.gamma() - product;
    Ok(ContiguityMargin {
        contiguous: margin > 0.0,
        margin,
    })
}

/// Limiting laws `N(mean_null, variance)` and `N(mean_alt, variance)` of `log L_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlrLimit {
    pub mean_null: f64,
    pub mean_alt: f64,
    pub variance: f64,
}

pub fn llr_limit_from_sigma_b_sq(sigma_b_sq: f64) -> LlrLimit {
    LlrLimit {
        mean_null: -0.5 * sigma_b_sq,
        mean_alt: 0.5 * sigma_b_sq,
        variance: sigma_b_sq,
    }
}

/// `(−σ_b²/2, σ_b²/2, σ_b²)` for a spec inside the contiguity regime.
pub fn limiting_llr_params(spec: &ModelSpec) -> Result<LlrLimit> {
    let margin = contiguity_margin(spec)?;
    if !margin.contiguous {
        return Err(Error::NotContiguous(format!(
            "contiguity margin is {} (must be positive)",
            margin.margin
        )));
    }
    let h = signal_eigenvalues(spec)?;
    Ok(llr_limit_from_sigma_b_sq(sigma_b_sq(&h, spec.gamma())?))
}

/// Limiting power `1 − Φ(z_{1−α} − σ_b)` of the level-α likelihood ratio test.
pub fn asymptotic_power(alpha: f64, sigma_b: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if sigma_b.is_nan() || sigma_b < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma_b must be >= 0, got {sigma_b}")));
    }
    Ok(normal_cdf(sigma_b + normal_quantile(alpha)))
}

/// Total variation distance `2Φ(σ_b/2) − 1` between the two limiting laws.
pub fn total_variation_limit(sigma_b: f64) -> Result<f64> {
    if sigma_b.is_nan() || sigma_b < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma_b must be >= 0, got {sigma_b}")));
    }
    Ok(libm::erf(sigma_b / (2.0 * std::f64::consts::SQRT_2)))
}

/// Everything the theory says about one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub gamma: f64,
    pub h: Vec<f64>,
    /// `mu[k - 1] = μ_k`.
    pub mu: Vec<f64>,
    /// `sigma_k_sq[k - 1] = 2kγ^k`.
    pub sigma_k_sq: Vec<f64>,
    /// `None` when some `h_i h_j ≥ γ`, where the series diverges.
    pub sigma_b_sq: Option<f64>,
    pub contiguous: bool,
    pub margin: f64,
}

impl AsymptoticParams {
    /// Parameters with `terms` entries of `μ_k` and `2kγ^k`.
    pub fn from_spec(spec: &ModelSpec, terms: usize) -> Result<Self> {
        let gamma = spec.gamma();
        let h = signal_eigenvalues(spec)?;
        let sigma_b_sq = match sigma_b_sq(&h, gamma) {
            Ok(v) => Some(v),
            Err(Error::NotContiguous(_)) => None,
            Err(e) => return Err(e),
        };
        let margin = contiguity_margin(spec)?;
        Ok(Self {
            gamma,
            mu: mu_list(spec, terms)?,
            sigma_k_sq: (1..=terms).map(|k| sigma_k_sq(k, gamma)).collect(),
            h,
            sigma_b_sq,
            contiguous: margin.contiguous,
            margin: margin.margin,
        })
    }

    /// Aligned plain-text table of the parameters.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("gamma        {:.6}\n", self.gamma));
        let h: Vec<String> = self.h.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&format!("h            [{}]\n", h.join(", ")));
        match self.sigma_b_sq {
            Some(s) => out.push_str(&format!("sigma_b^2    {s:.6}\n")),
            None => out.push_str("sigma_b^2    undefined (h_i h_j >= gamma)\n"),
        }
        out.push_str(&format!("contiguous   {}\n", self.contiguous));
        out.push_str(&format!("margin       {:.6}\n", self.margin));
        out.push_str("k    mu_k          2k*gamma^k\n");
        for (k, (mu, s)) in self.mu.iter().zip(&self.sigma_k_sq).enumerate() {
            out.push_str(&format!("{:<4} {:<13.6} {:.6}\n", k + 1, mu, s));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriorSpec;

    fn scalar_spec(theta_var: f64, u_var: f64, n: usize, p: usize) -> ModelSpec {
        ModelSpec::new(
            Variant::Unnormalized,
            n,
            p,
            PriorSpec::isotropic_gaussian(1, theta_var).unwrap(),
            PriorSpec::isotropic_gaussian(1, u_var).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mu_k_examples() {
        let spec = scalar_spec(0.5, 1.0, 10, 20);
        assert!((mu_k(&spec, 3).unwrap() - 0.125).abs() < 1e-15);
        let eye = PriorSpec::isotropic_gaussian(3, 1.0).unwrap();
        let spec = ModelSpec::new(Variant::Unnormalized, 10, 20, eye.clone(), eye).unwrap();
        for k in 1..6 {
            assert!((mu_k(&spec, k).unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mu_2_matches_expanded_index_sum() {
        let st = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 0.8, -0.3, 0.1, -0.3, 0.6]);
        let su = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.9, 0.2, 0.0, 0.2, 0.4]);
        let spec = ModelSpec::new(
            Variant::Unnormalized,
            10,
            20,
            PriorSpec::gaussian(st.clone()).unwrap(),
            PriorSpec::gaussian(su.clone()).unwrap(),
        )
        .unwrap();
        let mut expanded = 0.0;
        for l1 in 0..3 {
            for l2 in 0..3 {
                for l3 in 0..3 {
                    for l4 in 0..3 {
                        expanded += st[(l1, l4)] * su[(l1, l2)] * st[(l2, l3)] * su[(l3, l4)];
                    }
                }
            }
        }
        assert!((mu_k(&spec, 2).unwrap() - expanded).abs() < 1e-10);
        assert_eq!(mu_list(&spec, 3).unwrap()[1], mu_k(&spec, 2).unwrap());
    }

    #[test]
    fn normalized_mu_uses_theta_covariance_only() {
        let spec = ModelSpec::new(
            Variant::Normalized,
            10,
            20,
            PriorSpec::isotropic_gaussian(2, 0.5).unwrap(),
            PriorSpec::isotropic_gaussian(2, 3.0).unwrap(),
        )
        .unwrap();
        assert!((mu_k(&spec, 2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(signal_eigenvalues(&spec).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn sigma_k_sq_examples() {
        assert_eq!(sigma_k_sq(1, 2.0), 4.0);
        assert_eq!(sigma_k_sq(2, 1.0), 4.0);
    }

    #[test]
    fn sigma_b_sq_examples() {
        // series oracle sum_k 1/(2k 2^k) = log(2)/2
        let oracle: f64 = (1..200).map(|k| 1.0 / (2.0 * k as f64 * 2f64.powi(k))).sum();
        let v = sigma_b_sq(&[1.0], 2.0).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(sigma_b_sq(&[0.0], 2.0).unwrap(), 0.0);

        let expected = -0.5 * (0.5f64.ln() + 2.0 * 0.75f64.ln() + 0.875f64.ln());
        let v = sigma_b_sq(&[1.0, 0.5], 2.0).unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.70102).abs() < 1e-5);
        // 200-term series straight from mu_k = sum_i h_i^k
        let series: f64 = (1..=200)
            .map(|k| {
                let mu = 1.0 + 0.5f64.powi(k);
                mu * mu / (2.0 * k as f64 * 2f64.powi(k))
            })
            .sum();
        assert!((v - series).abs() < 1e-10);

        assert!(matches!(sigma_b_sq(&[1.5], 2.0), Err(Error::NotContiguous(_))));
    }

    #[test]
    fn contiguity_boundary_cases() {
        // lambda^2 = gamma exactly
        let spec = scalar_spec(1.0, 1.0, 50, 50);
        let m = contiguity_margin(&spec).unwrap();
        assert!(!m.contiguous);
        assert_eq!(m.margin, 0.0);

        let spec = scalar_spec(1.0, 1.0, 50, 100);
        let m = contiguity_margin(&spec).unwrap();
        assert!(m.contiguous);
        assert_eq!(m.margin, 1.0);
    }

    #[test]
    fn wider_proxy_shrinks_margin() {
        // same covariance diag(1, 0.36), discrete rows with proxy strictly above it
        let atoms = vec![
            vec![1.0, 0.6],
            vec![1.0, -0.6],
            vec![-1.0, 0.6],
            vec![-1.0, -0.6],
        ];
        let discrete = PriorSpec::bounded_discrete(atoms, vec![0.25; 4])
            .unwrap()
            .with_variance_proxy(DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]))
            .unwrap();
        let gaussian = PriorSpec::gaussian(discrete.covariance().clone()).unwrap();
        let u = PriorSpec::isotropic_gaussian(2, 1.0).unwrap();
        let d = ModelSpec::new(Variant::Unnormalized, 100, 200, discrete, u.clone()).unwrap();
        let g = ModelSpec::new(Variant::Unnormalized, 100, 200, gaussian, u).unwrap();
        let md = contiguity_margin(&d).unwrap().margin;
        let mg = contiguity_margin(&g).unwrap().margin;
        assert!(md < mg);
        assert!((mg - (2.0 - 1.0)).abs() < 1e-12);
        assert!((md - (2.0 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn normalized_margin_requires_invertible_sigma_u() {
        let spec = ModelSpec::new(
            Variant::Normalized,
            10,
            20,
            PriorSpec::isotropic_gaussian(1, 0.5).unwrap(),
            PriorSpec::isotropic_gaussian(1, 0.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(contiguity_margin(&spec), Err(Error::Singular { .. })));
    }

    #[test]
    fn llr_limits() {
        let spec = scalar_spec(0.0, 1.0, 10, 20);
        assert_eq!(
            limiting_llr_params(&spec).unwrap(),
            LlrLimit {
                mean_null: 0.0,
                mean_alt: 0.0,
                variance: 0.0
            }
        );
        let spec = scalar_spec(1.0, 1.0, 10, 20);
        let l = limiting_llr_params(&spec).unwrap();
        assert!((l.mean_null + 0.17329).abs() < 1e-5);
        assert!((l.mean_alt - 0.17329).abs() < 1e-5);
        assert!((l.variance - 0.34657).abs() < 1e-5);
        assert_eq!(l.mean_alt, -l.mean_null);
        assert!(limiting_llr_params(&scalar_spec(1.5, 1.0, 10, 20)).is_err());
    }

    #[test]
    fn power_examples() {
        assert!((asymptotic_power(0.05, 0.0).unwrap() - 0.05).abs() < 1e-12);
        assert!(asymptotic_power(0.05, 10.0).unwrap() >= 1.0 - 1e-6);
        // normal CDF oracle: 1 - Phi(1.644854 - 1)
        assert!((asymptotic_power(0.05, 1.0).unwrap() - 0.259_511_7).abs() < 1e-6);
        assert!(asymptotic_power(0.0, 1.0).is_err());
        assert!(asymptotic_power(0.5, -1.0).is_err());
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(total_variation_limit(0.0).unwrap(), 0.0);
        assert!((total_variation_limit(2.0).unwrap() - 0.682_689_492_137_086).abs() < 1e-12);
        let grid: Vec<f64> = (0..100).map(|i| total_variation_limit(i as f64 * 0.1).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn params_table_and_undefined_sigma() {
        let spec = scalar_spec(1.5, 1.0, 10, 20);
        let params = AsymptoticParams::from_spec(&spec, 3).unwrap();
        assert!(params.sigma_b_sq.is_none());
        assert!(!params.contiguous);
        assert!(params.to_table().contains("undefined"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn power_monotone_in_sigma(alpha in 0.001f64..0.999, a in 0.0f64..5.0, b in 0.0f64..5.0) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(asymptotic_power(alpha, lo).unwrap() <= asymptotic_power(alpha, hi).unwrap());
            }

            #[test]
            fn mu_non_increasing_when_h_at_most_one(h in proptest::collection::vec(0.0f64..1.0, 1..4)) {
                let k = h.len();
                let st = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(h));
                let spec = ModelSpec::new(
                    Variant::Unnormalized, 20, 30,
                    PriorSpec::gaussian(st).unwrap(),
                    PriorSpec::isotropic_gaussian(k, 1.0).unwrap(),
                ).unwrap();
                let mu = mu_list(&spec, 8).unwrap();
                prop_assert!(mu.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            }
        }
    }
}
