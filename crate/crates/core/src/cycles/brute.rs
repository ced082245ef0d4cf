//! Direct enumeration of bipartite signed cycles, for oracle use on small matrices.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Default cap on `n^k · p^k` for [`cycle_brute`].
pub const DEFAULT_BRUTE_BUDGET: f64 = 1e8;

fn injective_tuples(range: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                extend(prefix, used, k, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(k), &mut vec![false; range], k, &mut out);
    out
}

/// `B_{n,k}` by summing over every tuple of distinct rows and distinct columns.
///
/// The sum is empty, hence `0`, when `k > min(n, p)`.
pub fn cycle_brute(x: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    cycle_brute_with_budget(x, k, DEFAULT_BRUTE_BUDGET)
}

pub fn cycle_brute_with_budget(x: ArrayView2<'_, f64>, k: usize, budget: f64) -> Result<f64> {
    let (n, p) = x.dim();
    if k == 0 {
        return Err(Error::InvalidArgument("cycle order must be at least 1".into()));
    }
    if k > n.min(p) {
        return Ok(0.0);
    }
    let required = (n as f64).powi(k as i32) * (p as f64).powi(k as i32);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let rows = injective_tuples(n, k);
    let cols = injective_tuples(p, k);
    let mut total = 0.0;
    for i in &rows {
        for j in &cols {
            let mut prod = 1.0;
            for t in 0..k {
                prod *= x[(i[t], j[t])] * x[(i[(t + 1) % k], j[t])];
            }
            total += prod;
        }
    }
    Ok(total / (n as f64).powi(k as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn hand_computed_values() {
        let ones = Array2::<f64>::ones((2, 2));
        assert_eq!(cycle_brute(ones.view(), 1).unwrap(), 2.0);
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(cycle_brute(x.view(), 2).unwrap(), 24.0);
        let zeros = Array2::<f64>::zeros((3, 4));
        for k in 1..=3 {
            assert_eq!(cycle_brute(zeros.view(), k).unwrap(), 0.0);
        }
    }

    #[test]
    fn empty_sums_and_budget() {
        let x = Array2::<f64>::ones((3, 5));
        assert_eq!(cycle_brute(x.view(), 4).unwrap(), 0.0);
        assert!(cycle_brute(x.view(), 0).is_err());
        assert!(matches!(
            cycle_brute_with_budget(x.view(), 2, 100.0),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
