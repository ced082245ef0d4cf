//! Seeded generation of null and alternative data matrices.
//!
//! All randomness comes from `ChaCha8Rng` (rand_chacha 0.9) seeded through
//! `SeedableRng::seed_from_u64`, with standard normals drawn by
//! `rand_distr::StandardNormal` (ziggurat, rand_distr 0.5). Draw order for an
//! alternative sample is Θ row by row, then U row by row (redrawn if `UᵀU` is
//! rank deficient in the normalized variant), then Z row-major. A null sample
//! draws Z only.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DataMatrix, ModelSpec, PriorKind, PriorSpec, Provenance, Variant};

/// Extra draws of U allowed when `UᵀU` is numerically singular.
pub const RANK_RETRIES: usize = 3;

/// The generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for replication `rep` of an experiment with master seed `master`.
///
/// SplitMix64: the master seed is advanced by `rep + 1` golden-ratio
/// increments and passed through the SplitMix64 finalizer. The finalizer is a
/// bijection, so distinct `rep` values under one master never collide.
pub fn derive_rep_seed(master: u64, rep: u64) -> u64 {
    let mut z = master.wrapping_add(rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A sampled data matrix plus the latent factors that produced it.
#[derive(Debug, Clone)]
pub struct SampleBundle {
    pub x: DataMatrix,
    pub theta: Option<Array2<f64>>,
    pub u: Option<Array2<f64>>,
    /// Orthonormalized `U`, normalized variant only.
    pub v: Option<Array2<f64>>,
    pub seed: u64,
}

impl SampleBundle {
    /// The signal part `X − Z`, when latents are present.
    pub fn signal(&self) -> Option<Array2<f64>> {
        let theta = self.theta.as_ref()?;
        match &self.v {
            Some(v) => Some(theta.dot(&v.t())),
            None => {
                let u = self.u.as_ref()?;
                let scale = 1.0 / (u.nrows() as f64).sqrt();
                Some(theta.dot(&u.t()) * scale)
            }
        }
    }
}

fn standard_normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches length")
}

/// Draws `rows` i.i.d. rows from `prior` as a `rows × κ` matrix.
pub fn sample_prior_rows<R: Rng>(prior: &PriorSpec, rows: usize, rng: &mut R) -> Array2<f64> {
    let dim = prior.dim();
    match prior.kind() {
        PriorKind::Gaussian => {
            let factor = linalg::psd_factor(prior.covariance());
            let z = standard_normal_matrix(rows, dim, rng);
            z.dot(&to_ndarray(&factor).t())
        }
        PriorKind::Rademacher => Array2::from_shape_fn((rows, dim), |_| {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }),
        PriorKind::BoundedDiscrete { atoms, weights } => {
            let index = WeightedIndex::new(weights).expect("weights validated at construction");
            let mut out = Array2::zeros((rows, dim));
            for mut row in out.rows_mut() {
                let atom = &atoms[index.sample(rng)];
                row.iter_mut().zip(atom).for_each(|(dst, src)| *dst = *src);
            }
            out
        }
    }
}

pub(crate) fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}

pub(crate) fn to_nalgebra(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)])
}

/// `U (UᵀU)^{-1/2}` if `UᵀU` is comfortably invertible.
pub fn orthonormalize(u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let gram = to_nalgebra(u.t().dot(&u).view());
    let gram = linalg::symmetrize(&gram);
    let min = linalg::min_eigenvalue(&gram);
    if min <= 1e-12 * u.nrows() as f64 {
        return Err(Error::Singular {
            min_eigenvalue: min,
        });
    }
    let s = linalg::inverse_sqrt_sym(&gram)?;
    Ok(u.dot(&to_ndarray(&s)))
}

/// Pure-noise sample `X = Z`.
pub fn sample_null(n: usize, p: usize, seed: u64) -> SampleBundle {
    let mut rng = rng_from_seed(seed);
    let z = standard_normal_matrix(n, p, &mut rng);
    SampleBundle {
        x: DataMatrix::new(z, Provenance::Null, Some(seed)).expect("normal draws are finite"),
        theta: None,
        u: None,
        v: None,
        seed,
    }
}

/// `(Θ, U, V)`; `V` is present only for the normalized variant.
pub type Latents = (Array2<f64>, Array2<f64>, Option<Array2<f64>>);

/// Prior draws `(Θ, U, V)` for one alternative sample, consuming `rng` in the documented order.
pub fn sample_latents<R: Rng>(
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<Latents> {
    draw_latents(spec.variant, &spec.theta_prior, &spec.u_prior, spec.n, spec.p, rng)
}

/// [`sample_latents`] for explicit priors and sizes, without the `κ < min(n, p)` check.
///
/// `V` is present only for the normalized variant. A rank-deficient `U` is
/// redrawn up to [`RANK_RETRIES`] times.
pub fn draw_latents<R: Rng>(
    variant: Variant,
    theta_prior: &PriorSpec,
    u_prior: &PriorSpec,
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<Latents> {
    let theta = sample_prior_rows(theta_prior, n, rng);
    let mut u = sample_prior_rows(u_prior, p, rng);
    if variant == Variant::Unnormalized {
        return Ok((theta, u, None));
    }
    let mut attempt = 0;
    loop {
        match orthonormalize(u.view()) {
            Ok(v) => return Ok((theta, u, Some(v))),
            Err(Error::Singular { min_eigenvalue }) => {
                if attempt == RANK_RETRIES {
                    return Err(Error::RankDeficient {
                        attempts: attempt + 1,
                        min_eigenvalue,
                    });
                }
                attempt += 1;
                u = sample_prior_rows(u_prior, p, rng);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Alternative sample for `spec.variant`, with all latents attached.
pub fn sample_alternative(spec: &ModelSpec, seed: u64) -> Result<SampleBundle> {
    let mut rng = rng_from_seed(seed);
    let (theta, u, v) = sample_latents(spec, &mut rng)?;
    let mut x = standard_normal_matrix(spec.n, spec.p, &mut rng);
    match &v {
        Some(v) => x += &theta.dot(&v.t()),
        None => {
            let scale = 1.0 / (spec.p as f64).sqrt();
            x.scaled_add(scale, &theta.dot(&u.t()));
        }
    }
    Ok(SampleBundle {
        x: DataMatrix::new(x, Provenance::Alternative, Some(seed))?,
        theta: Some(theta),
        u: Some(u),
        v,
        seed,
    })
}

/// Null or alternative sample depending on `alternative`.
pub fn sample(spec: &ModelSpec, alternative: bool, seed: u64) -> Result<SampleBundle> {
    if alternative {
        sample_alternative(spec, seed)
    } else {
        Ok(sample_null(spec.n, spec.p, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use std::collections::HashSet;

    fn empirical_cov(rows: &Array2<f64>) -> Array2<f64> {
        rows.t().dot(rows) / rows.nrows() as f64
    }

    #[test]
    fn null_is_deterministic_and_standard() {
        let a = sample_null(200, 200, 7);
        let b = sample_null(200, 200, 7);
        assert_eq!(a.x, b.x);
        assert_ne!(a.x, sample_null(200, 200, 8).x);

        let x = a.x.values();
        let count = x.len() as f64;
        let mean = x.sum() / count;
        let var = x.mapv(|v| (v - mean) * (v - mean)).sum() / count;
        assert!(mean.abs() <= 4.0 / count.sqrt());
        assert!((var - 1.0).abs() <= 0.05);
        assert!(a.theta.is_none() && a.u.is_none() && a.v.is_none());
    }

    #[test]
    fn rep_seeds_are_stable_and_distinct() {
        assert_eq!(derive_rep_seed(99, 5), derive_rep_seed(99, 5));
        let mut seen = HashSet::with_capacity(1_000_000);
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_rep_seed(2024, i)), "collision at {i}");
        }
        for i in [0u64, 1, 17, 1 << 40] {
            assert_ne!(derive_rep_seed(1, i), derive_rep_seed(2, i));
            assert_ne!(derive_rep_seed(0, i), derive_rep_seed(u64::MAX, i));
        }
    }

    #[test]
    fn normalized_variant_has_orthonormal_v() {
        let g = PriorSpec::isotropic_gaussian(3, 1.0).unwrap();
        let spec = ModelSpec::new(Variant::Normalized, 40, 30, g.clone(), g).unwrap();
        let b = sample_alternative(&spec, 3).unwrap();
        let v = b.v.as_ref().unwrap();
        let vtv = v.t().dot(v);
        let eye = Array2::<f64>::eye(3);
        assert!((&vtv - &eye).iter().all(|d| d.abs() <= 1e-10));
    }

    #[test]
    fn normalized_variant_gives_up_on_rank_deficiency() {
        // all-zero U can never be orthonormalized
        let theta = PriorSpec::isotropic_gaussian(1, 1.0).unwrap();
        let u = PriorSpec::isotropic_gaussian(1, 0.0).unwrap();
        let spec = ModelSpec::new(Variant::Normalized, 5, 5, theta, u).unwrap();
        assert!(matches!(
            sample_alternative(&spec, 1),
            Err(Error::RankDeficient { attempts: 4, .. })
        ));
    }

    #[test]
    fn zero_signal_alternative_is_pure_noise() {
        let theta = PriorSpec::isotropic_gaussian(1, 0.0).unwrap();
        let u = PriorSpec::isotropic_gaussian(1, 1.0).unwrap();
        let spec = ModelSpec::new(Variant::Unnormalized, 20, 30, theta, u).unwrap();
        let b = sample_alternative(&spec, 5).unwrap();
        assert!(b.signal().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn signal_reconstructs_x_minus_noise() {
        let theta = PriorSpec::isotropic_gaussian(2, 0.5).unwrap();
        let u = PriorSpec::rademacher(2).unwrap();
        let spec = ModelSpec::new(Variant::Unnormalized, 6, 9, theta, u).unwrap();
        let b = sample_alternative(&spec, 21).unwrap();
        // replay the draw order to recover Z
        let mut rng = rng_from_seed(21);
        let _ = sample_latents(&spec, &mut rng).unwrap();
        let z = standard_normal_matrix(6, 9, &mut rng);
        let diff = b.x.values() - &z - b.signal().unwrap();
        assert!(diff.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn prior_rows_match_declared_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let priors = [
            PriorSpec::gaussian(cov).unwrap(),
            PriorSpec::rademacher(2).unwrap(),
            PriorSpec::bounded_discrete(
                vec![vec![1.0, 0.5], vec![-1.0, -0.5], vec![0.0, 1.0], vec![0.0, -1.0]],
                vec![0.25; 4],
            )
            .unwrap(),
        ];
        let rows = 10_000;
        let mut rng = rng_from_seed(77);
        for prior in &priors {
            let draws = sample_prior_rows(prior, rows, &mut rng);
            let emp = empirical_cov(&draws);
            let k = prior.dim() as f64;
            let tol = 5.0 * k * k / (rows as f64).sqrt();
            let declared = to_ndarray(prior.covariance());
            let gap = (&emp - &declared).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(gap <= tol, "{}: gap {gap}", prior.kind().name());
        }
    }

    #[test]
    fn gaussian_rows_entrywise_band() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 0.7]);
        let prior = PriorSpec::gaussian(cov.clone()).unwrap();
        let draws = sample_prior_rows(&prior, 10_000, &mut rng_from_seed(8));
        let emp = empirical_cov(&draws);
        let tol = 0.05 * cov.amax() * 3.0;
        assert!((&emp - &to_ndarray(&cov)).iter().all(|d| d.abs() <= tol));
    }

    #[test]
    fn rademacher_rows_are_signs_with_identity_correlation() {
        let prior = PriorSpec::rademacher(3).unwrap();
        let draws = sample_prior_rows(&prior, 10_000, &mut rng_from_seed(9));
        assert!(draws.iter().all(|v| *v == 1.0 || *v == -1.0));
        let emp = empirical_cov(&draws);
        assert!((&emp - &Array2::<f64>::eye(3)).iter().all(|d| d.abs() <= 0.05));
    }
}
