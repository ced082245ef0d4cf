//! Small dense linear algebra on κ×κ matrices.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; the κ×κ matrices in this
//! crate are tiny, so clarity wins over blocking or caching.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Minimum eigenvalue accepted for a matrix to count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Minimum eigenvalue accepted by [`inverse_sqrt_sym`].
pub const SPD_TOLERANCE: f64 = 1e-12;

fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Exact symmetry check (entries must mirror bit-for-bit).
pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.nrows() == m.ncols()
        && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

/// Averages `m` with its transpose to remove round-off asymmetry.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Fails unless `m` is square, exactly symmetric and PSD within [`PSD_TOLERANCE`].
pub fn ensure_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    ensure_square(m, what)?;
    if !is_symmetric(m) {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let min = min_eigenvalue(m);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, q) = sym_eigen(m);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.into_iter().map(f),
    ));
    symmetrize(&(&q * d * q.transpose()))
}

/// Principal square root of a symmetric PSD matrix; tiny negative eigenvalues are clamped to 0.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |v| v.max(0.0).sqrt())
}

/// A factor `L` with `L Lᵀ = m`, used to draw correlated Gaussian rows.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, q) = sym_eigen(m);
    let mut l = q;
    for (c, v) in values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        l.column_mut(c).scale_mut(s);
    }
    l
}

/// Eigenvalues `h_1 ≥ … ≥ h_κ` of `Σ_Θ Σ_U`.
///
/// The product is not symmetric, so the eigenvalues are taken from the similar
/// matrix `Σ_U^{1/2} Σ_Θ Σ_U^{1/2}`, which is symmetric PSD.
pub fn product_eigenvalues(sigma_theta: &DMatrix<f64>, sigma_u: &DMatrix<f64>) -> Result<Vec<f64>> {
    ensure_psd(sigma_theta, "sigma_theta")?;
    ensure_psd(sigma_u, "sigma_u")?;
    if sigma_theta.nrows() != sigma_u.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sigma_theta is {0}x{0} but sigma_u is {1}x{1}",
            sigma_theta.nrows(),
            sigma_u.nrows()
        )));
    }
    let root = sqrt_psd(sigma_u);
    let conj = symmetrize(&(&root * sigma_theta * &root));
    Ok(sym_eigen(&conj).0)
}

/// `Tr(m^k)` by repeated multiplication.
pub fn trace_power(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    ensure_square(m, "matrix")?;
    if k == 0 {
        return Err(Error::InvalidArgument("trace_power needs k >= 1".into()));
    }
    let mut acc = m.clone();
    for _ in 1..k {
        acc = &acc * m;
    }
    Ok(acc.trace())
}

/// Kronecker product `a ⊗ b` in the usual block layout (block (i, j) is `a[i, j] * b`).
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Symmetric inverse square root `S` with `S m S = I`.
pub fn inverse_sqrt_sym(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "matrix")?;
    if !is_symmetric(m) {
        return Err(Error::InvalidArgument("matrix is not symmetric".into()));
    }
    let min = min_eigenvalue(m);
    if min <= SPD_TOLERANCE {
        return Err(Error::Singular {
            min_eigenvalue: min,
        });
    }
    Ok(spectral_map(m, |v| 1.0 / v.sqrt()))
}

/// Spectral norm (largest singular value), computed as `sqrt(λ_max(mᵀm))`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = symmetrize(&(m.transpose() * m));
    sym_eigen(&gram).0[0].max(0.0).sqrt()
}

/// Row-major nested vectors from a matrix.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Matrix from row-major nested vectors; rows must be of equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&(&a * a.transpose() + DMatrix::identity(k, k) * 0.1))
    }

    /// Real roots of det(A - hI) for 3x3 A from the characteristic cubic,
    /// found by bisection on sign changes (independent of any eigen-solver).
    fn char_poly_roots_3x3(a: &DMatrix<f64>) -> Vec<f64> {
        let det3 = |h: f64| {
            let m = a - DMatrix::identity(3, 3) * h;
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        };
        let hi = a.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        let steps = 200_000;
        let mut roots = Vec::new();
        let mut prev_h = -hi;
        let mut prev = det3(prev_h);
        for s in 1..=steps {
            let h = -hi + 2.0 * hi * s as f64 / steps as f64;
            let v = det3(h);
            if prev == 0.0 || prev.signum() != v.signum() {
                let (mut lo, mut up) = (prev_h, h);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + up);
                    if det3(lo).signum() == det3(mid).signum() {
                        lo = mid;
                    } else {
                        up = mid;
                    }
                }
                roots.push(0.5 * (lo + up));
            }
            prev_h = h;
            prev = v;
        }
        roots.sort_by(|a, b| b.total_cmp(a));
        roots
    }

    #[test]
    fn product_eigenvalues_diagonal_and_identity() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let h = product_eigenvalues(&d, &DMatrix::identity(2, 2)).unwrap();
        assert!((h[0] - 2.0).abs() < 1e-12 && (h[1] - 1.0).abs() < 1e-12);

        let h = product_eigenvalues(&DMatrix::identity(4, 4), &DMatrix::identity(4, 4)).unwrap();
        assert!(h.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn product_eigenvalues_match_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_spd(&mut rng, 3);
            let b = random_spd(&mut rng, 3);
            let h = product_eigenvalues(&a, &b).unwrap();
            let roots = char_poly_roots_3x3(&(&a * &b));
            assert_eq!(roots.len(), 3);
            for (x, y) in h.iter().zip(&roots) {
                assert!((x - y).abs() < 1e-8, "{h:?} vs {roots:?}");
            }
        }
    }

    #[test]
    fn product_eigenvalues_errors() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            product_eigenvalues(&bad, &DMatrix::identity(2, 2)),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            product_eigenvalues(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn trace_power_examples() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(trace_power(&d, 3).unwrap(), 9.0);
        for k in 1..6 {
            assert_eq!(trace_power(&DMatrix::identity(3, 3), k).unwrap(), 3.0);
        }
        assert!(trace_power(&d, 0).is_err());
        assert!(trace_power(&DMatrix::zeros(2, 3), 2).is_err());
    }

    #[test]
    fn trace_power_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_spd(&mut rng, 4);
        let (values, _) = sym_eigen(&a);
        let oracle: f64 = values.iter().map(|h| h.powi(5)).sum();
        let got = trace_power(&a, 5).unwrap();
        assert!((got - oracle).abs() <= 1e-8 * oracle.abs().max(1.0));
    }

    #[test]
    fn kron_examples() {
        assert_eq!(kron(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2)), DMatrix::identity(4, 4));
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(kron(&DMatrix::from_element(1, 1, 2.0), &b), &b * 2.0);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron(&a, &b);
        // block (1, 0) is a[1,0] * b = 3b
        assert_eq!(k[(2, 0)], 3.0);
        assert_eq!(k[(3, 2)], 18.0);
    }

    #[test]
    fn kron_eigenvalues_are_pairwise_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_spd(&mut rng, 2);
        let b = random_spd(&mut rng, 2);
        let (ea, _) = sym_eigen(&a);
        let (eb, _) = sym_eigen(&b);
        let mut expected: Vec<f64> = ea.iter().flat_map(|x| eb.iter().map(move |y| x * y)).collect();
        expected.sort_by(|x, y| y.total_cmp(x));
        let (got, _) = sym_eigen(&symmetrize(&kron(&a, &b)));
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_sqrt_examples() {
        assert!((inverse_sqrt_sym(&DMatrix::identity(3, 3)).unwrap() - DMatrix::identity(3, 3)).amax() < 1e-14);
        let s = inverse_sqrt_sym(&DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0])).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-14 && (s[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(s[(0, 1)].abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let m = random_spd(&mut rng, 4);
            let s = inverse_sqrt_sym(&m).unwrap();
            assert!((&s * &m * &s - DMatrix::identity(4, 4)).amax() < 1e-10);
        }
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse_sqrt_sym(&singular), Err(Error::Singular { .. })));
    }

    #[test]
    fn spectral_norm_of_diagonal_is_exact() {
        for h in [0.1, 0.3, 0.7, 1.0, 1.3, 2.9] {
            let m = DMatrix::from_row_slice(2, 2, &[h, 0.0, 0.0, h / 2.0]);
            assert_eq!(spectral_norm(&m), h);
        }
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        assert!((spectral_norm(&a) - 2.0).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spd(k: usize) -> impl Strategy<Value = DMatrix<f64>> {
            proptest::collection::vec(-1.0f64..1.0, k * k).prop_map(move |v| {
                let a = DMatrix::from_vec(k, k, v);
                symmetrize(&(&a * a.transpose()))
            })
        }

        proptest! {
            #[test]
            fn product_eigenvalues_symmetric_in_arguments(a in spd(3), b in spd(3)) {
                let ab = product_eigenvalues(&a, &b).unwrap();
                let ba = product_eigenvalues(&b, &a).unwrap();
                for (x, y) in ab.iter().zip(&ba) {
                    prop_assert!((x - y).abs() < 1e-8);
                    prop_assert!(*x >= -PSD_TOLERANCE);
                }
            }

            #[test]
            fn trace_power_nonnegative_for_psd(a in spd(3), k in 1usize..8) {
                prop_assert!(trace_power(&a, k).unwrap() >= -1e-10);
            }
        }
    }
}
