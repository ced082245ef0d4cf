//! Bipartite signed cycle statistics.
//!
//! For an `n × p` matrix `X`,
//!
//! ```text
//! B_{n,k} = n^{-k} Σ X[i0,j0] X[i1,j0] X[i1,j1] X[i2,j1] … X[i_{k-1},j_{k-1}] X[i0,j_{k-1}]
//! ```
//!
//! summed over distinct rows `i0..i_{k-1}` and distinct columns `j0..j_{k-1}`.
//! [`cycle_fast`] removes the distinctness constraint by Möbius inversion on
//! the partition lattices of row and column positions: every pair of
//! partitions collapses the cycle into a small multigraph whose unconstrained
//! sum is a tensor contraction. [`cycle_brute`] enumerates tuples directly
//! and exists to check it.

mod brute;
mod contract;
pub mod partition;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use brute::{cycle_brute, cycle_brute_with_budget, DEFAULT_BRUTE_BUDGET};
pub use contract::elimination_order;
pub use partition::{bell_number, set_partitions, CyclePattern, PartitionPlan, SetPartition};

use crate::defaults::DEFAULT_K_MAX;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use contract::ContractionCache;

/// The vector `(B_{n,1}, …, B_{n,m})` for one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    /// `values[k - 1]` holds `B_{n,k}`.
    pub values: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub gamma_hat: f64,
}

impl CycleStats {
    pub fn get(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    /// `B_{n,k} − p·1{k=1}`.
    pub fn centered(&self, k: usize) -> f64 {
        let b = self.get(k);
        if k == 1 {
            b - self.p as f64
        } else {
            b
        }
    }

    /// `(B_{n,k} − p·1{k=1}) / √(2kγ̂^k)`.
    pub fn normalized(&self, k: usize) -> f64 {
        self.centered(k) / (2.0 * k as f64 * self.gamma_hat.powi(k as i32)).sqrt()
    }

    /// CSV with columns `k,B_nk,normalized`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,B_nk,normalized\n");
        for k in 1..=self.values.len() {
            out.push_str(&format!("{k},{},{}\n", self.get(k), self.normalized(k)));
        }
        out
    }
}

fn plan_cache() -> &'static Mutex<HashMap<usize, Arc<PartitionPlan>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<PartitionPlan>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// The partition plan for order `k`, subject to the default `k_max`.
pub fn enumerate_partitions(k: usize) -> Result<Arc<PartitionPlan>> {
    enumerate_partitions_capped(k, DEFAULT_K_MAX)
}

pub fn enumerate_partitions_capped(k: usize, k_max: usize) -> Result<Arc<PartitionPlan>> {
    if k == 0 {
        return Err(Error::InvalidArgument("cycle order must be at least 1".into()));
    }
    if k > k_max {
        return Err(Error::OrderTooLarge { k, k_max });
    }
    let mut cache = plan_cache().lock().expect("plan cache poisoned");
    Ok(cache
        .entry(k)
        .or_insert_with(|| Arc::new(PartitionPlan::new(k)))
        .clone())
}

fn evaluate(cache: &mut ContractionCache<'_>, plan: &PartitionPlan, n: usize, p: usize) -> f64 {
    if plan.k > n.min(p) {
        return 0.0;
    }
    let terms: Vec<f64> = plan
        .patterns
        .iter()
        .map(|planned| planned.weight * cache.pattern_sum(&planned.pattern))
        .collect();
    pairwise_sum(&terms) / (n as f64).powi(plan.k as i32)
}

/// `B_{n,k}` by inclusion–exclusion over partition pairs, for `k ≤` the default `k_max`.
///
/// Returns `0` when `k > min(n, p)`, where no tuple of distinct indices exists.
pub fn cycle_fast(x: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    cycle_fast_capped(x, k, DEFAULT_K_MAX)
}

pub fn cycle_fast_capped(x: ArrayView2<'_, f64>, k: usize, k_max: usize) -> Result<f64> {
    let plan = enumerate_partitions_capped(k, k_max)?;
    let (n, p) = x.dim();
    Ok(evaluate(&mut ContractionCache::new(x), &plan, n, p))
}

/// `B_{n,1}, …, B_{n,m}` sharing powers, Gram products and pattern sums across orders.
pub fn cycle_vector(x: ArrayView2<'_, f64>, m: usize) -> Result<CycleStats> {
    cycle_vector_capped(x, m, DEFAULT_K_MAX)
}

pub fn cycle_vector_capped(x: ArrayView2<'_, f64>, m: usize, k_max: usize) -> Result<CycleStats> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one cycle order".into()));
    }
    let plans = (1..=m)
        .map(|k| enumerate_partitions_capped(k, k_max))
        .collect::<Result<Vec<_>>>()?;
    let (n, p) = x.dim();
    let mut cache = ContractionCache::new(x);
    let values = plans
        .iter()
        .map(|plan| evaluate(&mut cache, plan, n, p))
        .collect();
    Ok(CycleStats {
        values,
        n,
        p,
        gamma_hat: p as f64 / n as f64,
    })
}
