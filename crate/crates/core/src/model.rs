//! Prior and model descriptions for the spiked testing problems.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ensure_psd, PSD_TOLERANCE};

/// Tolerance on `|Σ w_i a_i|` per coordinate for discrete atoms.
pub const ATOM_MEAN_TOLERANCE: f64 = 1e-12;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Which of the two alternatives is being tested against pure noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `X = Θ Uᵀ / √p + Z`.
    Unnormalized,
    /// `X = Θ Vᵀ + Z` with `V = U (UᵀU)^{-1/2}`.
    Normalized,
}

/// Distribution family of the i.i.d. prior rows.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind {
    Gaussian,
    /// Independent ±1 coordinates; covariance and proxy are both `I_κ`.
    Rademacher,
    /// Finitely many mean-zero atoms with probabilities summing to one.
    BoundedDiscrete { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl PriorKind {
    pub fn name(&self) -> &'static str {
        match self {
            PriorKind::Gaussian => "gaussian",
            PriorKind::Rademacher => "rademacher",
            PriorKind::BoundedDiscrete { .. } => "bounded-discrete",
        }
    }
}

/// Row distribution for Θ or U together with its covariance and sub-Gaussian variance proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    kind: PriorKind,
    dim: usize,
    covariance: DMatrix<f64>,
    variance_proxy: DMatrix<f64>,
}

impl PriorSpec {
    /// Mean-zero Gaussian rows; the variance proxy equals the covariance.
    pub fn gaussian(covariance: DMatrix<f64>) -> Result<Self> {
        ensure_psd(&covariance, "covariance")?;
        Ok(Self {
            kind: PriorKind::Gaussian,
            dim: covariance.nrows(),
            variance_proxy: covariance.clone(),
            covariance,
        })
    }

    /// Gaussian rows with covariance `variance * I_dim`.
    pub fn isotropic_gaussian(dim: usize, variance: f64) -> Result<Self> {
        Self::gaussian(DMatrix::identity(dim, dim) * variance)
    }

    pub fn rademacher(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("prior dimension must be positive".into()));
        }
        Ok(Self {
            kind: PriorKind::Rademacher,
            dim,
            covariance: DMatrix::identity(dim, dim),
            variance_proxy: DMatrix::identity(dim, dim),
        })
    }

    /// Discrete rows drawn from `atoms` with probabilities `weights`.
    ///
    /// The default variance proxy is `diag(¼(max_c − min_c)²)` when the
    /// coordinates are independent under the atom distribution, and `R² I`
    /// with `R` the largest atom norm otherwise.
    pub fn bounded_discrete(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = validate_atoms(&atoms, &weights)?;
        let covariance = discrete_covariance(&atoms, &weights, dim);
        let variance_proxy = default_discrete_proxy(&atoms, &weights, dim);
        Ok(Self {
            kind: PriorKind::BoundedDiscrete { atoms, weights },
            dim,
            covariance,
            variance_proxy,
        })
    }

    /// Scalar prior on `{-scale, +scale}` with equal weights (a scaled Rademacher).
    pub fn symmetric_two_point(scale: f64) -> Result<Self> {
        Self::bounded_discrete(vec![vec![-scale], vec![scale]], vec![0.5, 0.5])
    }

    /// Replaces the variance proxy.
    ///
    /// The proxy must be PSD with the prior's dimension. A proxy that does not
    /// dominate the covariance is accepted with a warning.
    pub fn with_variance_proxy(mut self, proxy: DMatrix<f64>) -> Result<Self> {
        ensure_psd(&proxy, "variance_proxy")?;
        if proxy.nrows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "variance proxy is {0}x{0}, prior dimension is {1}",
                proxy.nrows(),
                self.dim
            )));
        }
        let gap = linalg::min_eigenvalue(&(&proxy - &self.covariance));
        if gap < -PSD_TOLERANCE {
            log::warn!(
                "variance proxy does not dominate the covariance (min eigenvalue of difference {gap:e})"
            );
        }
        self.variance_proxy = proxy;
        Ok(self)
    }

    pub fn kind(&self) -> &PriorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn variance_proxy(&self) -> &DMatrix<f64> {
        &self.variance_proxy
    }

    /// Support points with their probabilities, if the prior is finitely supported.
    pub fn support(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        match &self.kind {
            PriorKind::Gaussian => None,
            PriorKind::Rademacher => {
                let count = 1usize.checked_shl(self.dim as u32)?;
                let w = 1.0 / count as f64;
                Some(
                    (0..count)
                        .map(|mask| {
                            let row = (0..self.dim)
                                .map(|c| if mask >> c & 1 == 1 { 1.0 } else { -1.0 })
                                .collect();
                            (row, w)
                        })
                        .collect(),
                )
            }
            PriorKind::BoundedDiscrete { atoms, weights } => Some(
                atoms
                    .iter()
                    .cloned()
                    .zip(weights.iter().copied())
                    .filter(|(_, w)| *w > 0.0)
                    .collect(),
            ),
        }
    }

    /// Number of support points, or `None` for continuous priors.
    pub fn support_size(&self) -> Option<f64> {
        match &self.kind {
            PriorKind::Gaussian => None,
            PriorKind::Rademacher => Some(2f64.powi(self.dim as i32)),
            PriorKind::BoundedDiscrete { weights, .. } => {
                Some(weights.iter().filter(|w| **w > 0.0).count() as f64)
            }
        }
    }
}

fn validate_atoms(atoms: &[Vec<f64>], weights: &[f64]) -> Result<usize> {
    if atoms.is_empty() {
        return Err(Error::InvalidArgument("discrete prior needs at least one atom".into()));
    }
    if atoms.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} atoms but {} weights",
            atoms.len(),
            weights.len()
        )));
    }
    let dim = atoms[0].len();
    if dim == 0 || atoms.iter().any(|a| a.len() != dim) {
        return Err(Error::DimensionMismatch("atoms must share a positive dimension".into()));
    }
    if atoms.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("atoms must be finite".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
    }
    for c in 0..dim {
        let mean: f64 = atoms.iter().zip(weights).map(|(a, w)| w * a[c]).sum();
        if mean.abs() > ATOM_MEAN_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "atoms have non-zero mean {mean:e} in coordinate {c}"
            )));
        }
    }
    Ok(dim)
}

fn discrete_covariance(atoms: &[Vec<f64>], weights: &[f64], dim: usize) -> DMatrix<f64> {
    let mut cov = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..=r {
            let v: f64 = atoms.iter().zip(weights).map(|(a, w)| w * a[r] * a[c]).sum();
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    cov
}

fn coordinates_independent(atoms: &[Vec<f64>], weights: &[f64], dim: usize) -> bool {
    use std::collections::BTreeMap;
    if dim == 1 {
        return true;
    }
    let mut joint: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut marginals: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); dim];
    for (a, &w) in atoms.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let key: Vec<u64> = a.iter().map(|v| (v + 0.0).to_bits()).collect();
        *joint.entry(key.clone()).or_default() += w;
        for (c, bits) in key.into_iter().enumerate() {
            *marginals[c].entry(bits).or_default() += w;
        }
    }
    let combos: f64 = marginals.iter().map(|m| m.len() as f64).product();
    if combos > joint.len() as f64 {
        return false;
    }
    joint.iter().all(|(key, &w)| {
        let prod: f64 = key.iter().enumerate().map(|(c, b)| marginals[c][b]).product();
        (prod - w).abs() <= 1e-12
    })
}

fn default_discrete_proxy(atoms: &[Vec<f64>], weights: &[f64], dim: usize) -> DMatrix<f64> {
    let live: Vec<&Vec<f64>> = atoms
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, _)| a)
        .collect();
    if coordinates_independent(atoms, weights, dim) {
        DMatrix::from_fn(dim, dim, |r, c| {
            if r != c {
                return 0.0;
            }
            let lo = live.iter().map(|a| a[r]).fold(f64::INFINITY, f64::min);
            let hi = live.iter().map(|a| a[r]).fold(f64::NEG_INFINITY, f64::max);
            0.25 * (hi - lo) * (hi - lo)
        })
    } else {
        let radius_sq = live
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        DMatrix::identity(dim, dim) * radius_sq
    }
}

/// Full description of one testing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub n: usize,
    pub p: usize,
    pub kappa: usize,
    pub theta_prior: PriorSpec,
    pub u_prior: PriorSpec,
}

impl ModelSpec {
    pub fn new(
        variant: Variant,
        n: usize,
        p: usize,
        theta_prior: PriorSpec,
        u_prior: PriorSpec,
    ) -> Result<Self> {
        let kappa = theta_prior.dim();
        if u_prior.dim() != kappa {
            return Err(Error::DimensionMismatch(format!(
                "theta prior has dimension {kappa}, u prior has dimension {}",
                u_prior.dim()
            )));
        }
        if kappa >= n.min(p) {
            return Err(Error::InvalidArgument(format!(
                "kappa = {kappa} must be smaller than min(n, p) = {}",
                n.min(p)
            )));
        }
        Ok(Self {
            variant,
            n,
            p,
            kappa,
            theta_prior,
            u_prior,
        })
    }

    /// Aspect ratio `p / n`.
    pub fn gamma(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// Same priors and variant at a different size.
    pub fn resized(&self, n: usize, p: usize) -> Result<Self> {
        Self::new(self.variant, n, p, self.theta_prior.clone(), self.u_prior.clone())
    }
}

/// Where a data matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Null,
    Alternative,
    /// Loaded from a file or supplied by the caller.
    External,
}

/// An observed `n × p` matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    provenance: Provenance,
    seed: Option<u64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, provenance: Provenance, seed: Option<u64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument("data matrix must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data matrix has non-finite entries".into()));
        }
        Ok(Self {
            values,
            provenance,
            seed,
        })
    }

    /// Wraps caller-supplied values.
    pub fn external(values: Array2<f64>) -> Result<Self> {
        Self::new(values, Provenance::External, None)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Observed aspect ratio `p / n`.
    pub fn gamma_hat(&self) -> f64 {
        self.p() as f64 / self.n() as f64
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_prior_covariance_and_proxy() {
        let p = PriorSpec::symmetric_two_point(0.8).unwrap();
        assert!((p.covariance()[(0, 0)] - 0.64).abs() < 1e-15);
        assert!((p.variance_proxy()[(0, 0)] - 0.64).abs() < 1e-15);

        // skewed three-point law on {-2, 1} with weights 1/3, 2/3: mean 0, range 3
        let p = PriorSpec::bounded_discrete(vec![vec![-2.0], vec![1.0]], vec![1.0 / 3.0, 2.0 / 3.0]);
        let p = p.unwrap();
        assert!((p.covariance()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((p.variance_proxy()[(0, 0)] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn correlated_atoms_fall_back_to_radius_proxy() {
        let p = PriorSpec::bounded_discrete(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.5, 0.5])
            .unwrap();
        assert_eq!(p.variance_proxy(), &(DMatrix::identity(2, 2) * 2.0));
        let gap = linalg::min_eigenvalue(&(p.variance_proxy() - p.covariance()));
        assert!(gap >= -PSD_TOLERANCE);
    }

    #[test]
    fn independent_atoms_keep_diagonal_proxy() {
        let atoms = vec![
            vec![1.0, 2.0],
            vec![1.0, -2.0],
            vec![-1.0, 2.0],
            vec![-1.0, -2.0],
        ];
        let p = PriorSpec::bounded_discrete(atoms, vec![0.25; 4]).unwrap();
        assert_eq!(p.variance_proxy(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        assert_eq!(p.covariance(), p.variance_proxy());
    }

    #[test]
    fn discrete_prior_rejects_bad_input() {
        assert!(PriorSpec::bounded_discrete(vec![vec![1.0], vec![0.0]], vec![0.5, 0.5]).is_err());
        assert!(PriorSpec::bounded_discrete(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.4]).is_err());
        assert!(PriorSpec::bounded_discrete(vec![vec![1.0], vec![-1.0, 0.0]], vec![0.5, 0.5]).is_err());
        assert!(PriorSpec::bounded_discrete(vec![], vec![]).is_err());
    }

    #[test]
    fn rademacher_support_enumerates_sign_vectors() {
        let p = PriorSpec::rademacher(3).unwrap();
        let s = p.support().unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|(a, w)| a.iter().all(|v| v.abs() == 1.0) && *w == 0.125));
        assert_eq!(p.covariance(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn model_spec_invariants() {
        let g = PriorSpec::isotropic_gaussian(2, 1.0).unwrap();
        assert!(ModelSpec::new(Variant::Unnormalized, 10, 20, g.clone(), g.clone()).is_ok());
        assert!(ModelSpec::new(Variant::Unnormalized, 2, 20, g.clone(), g.clone()).is_err());
        let r = PriorSpec::rademacher(1).unwrap();
        assert!(ModelSpec::new(Variant::Normalized, 10, 20, g, r).is_err());
    }

    #[test]
    fn proxy_override_checks_shape() {
        let g = PriorSpec::isotropic_gaussian(2, 1.0).unwrap();
        assert!(g.clone().with_variance_proxy(DMatrix::identity(3, 3)).is_err());
        // under-dominating proxy is accepted (with a warning)
        let p = g.with_variance_proxy(DMatrix::identity(2, 2) * 0.5).unwrap();
        assert_eq!(p.variance_proxy()[(0, 0)], 0.5);
    }

    #[test]
    fn data_matrix_rejects_non_finite() {
        let mut a = Array2::zeros((2, 2));
        a[(0, 1)] = f64::NAN;
        assert!(DataMatrix::external(a).is_err());
    }
}
