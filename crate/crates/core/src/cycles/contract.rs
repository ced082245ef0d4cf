//! Unconstrained contraction of a collapsed cycle pattern.
//!
//! Row blocks become variables of size `n`, column blocks variables of size
//! `p`, and every distinct edge of multiplicity `m` contributes the
//! elementwise power `X^{∘m}` as a factor. Variables are summed out one at a
//! time in greedy minimum-degree order.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayD, ArrayView2, Axis, Ix3, IxDyn, Zip};

use super::partition::CyclePattern;

#[derive(Clone)]
struct Factor {
    vars: Vec<usize>,
    data: Rc<ArrayD<f64>>,
    /// `Some(m)` for an untouched `X^{∘m}` edge factor over `[row, col]`.
    edge_power: Option<u32>,
}

/// Per-matrix memo of elementwise powers, Gram products and whole-pattern sums.
pub(crate) struct ContractionCache<'a> {
    x: ArrayView2<'a, f64>,
    powers: HashMap<u32, Rc<ArrayD<f64>>>,
    row_grams: HashMap<(u32, u32), Rc<ArrayD<f64>>>,
    col_grams: HashMap<(u32, u32), Rc<ArrayD<f64>>>,
    patterns: HashMap<CyclePattern, f64>,
}

impl<'a> ContractionCache<'a> {
    pub(crate) fn new(x: ArrayView2<'a, f64>) -> Self {
        Self {
            x,
            powers: HashMap::new(),
            row_grams: HashMap::new(),
            col_grams: HashMap::new(),
            patterns: HashMap::new(),
        }
    }

    fn power(&mut self, m: u32) -> Rc<ArrayD<f64>> {
        let x = self.x;
        self.powers
            .entry(m)
            .or_insert_with(|| Rc::new(x.mapv(|v| v.powi(m as i32)).into_dyn()))
            .clone()
    }

    fn as_matrix(a: &ArrayD<f64>) -> ArrayView2<'_, f64> {
        a.view().into_dimensionality().expect("edge factors are 2-d")
    }

    /// `X^{∘a} (X^{∘b})ᵀ`, an `n × n` matrix.
    fn row_gram(&mut self, a: u32, b: u32) -> Rc<ArrayD<f64>> {
        if let Some(g) = self.row_grams.get(&(a, b)) {
            return g.clone();
        }
        let (pa, pb) = (self.power(a), self.power(b));
        let g = Rc::new(Self::as_matrix(&pa).dot(&Self::as_matrix(&pb).t()).into_dyn());
        self.row_grams.insert((a, b), g.clone());
        g
    }

    /// `(X^{∘a})ᵀ X^{∘b}`, a `p × p` matrix.
    fn col_gram(&mut self, a: u32, b: u32) -> Rc<ArrayD<f64>> {
        if let Some(g) = self.col_grams.get(&(a, b)) {
            return g.clone();
        }
        let (pa, pb) = (self.power(a), self.power(b));
        let g = Rc::new(Self::as_matrix(&pa).t().dot(&Self::as_matrix(&pb)).into_dyn());
        self.col_grams.insert((a, b), g.clone());
        g
    }

    /// Unconstrained sum of the pattern's edge products over all block index values.
    pub(crate) fn pattern_sum(&mut self, pattern: &CyclePattern) -> f64 {
        if let Some(v) = self.patterns.get(pattern) {
            return *v;
        }
        let v = self.contract(pattern);
        self.patterns.insert(pattern.clone(), v);
        v
    }

    fn contract(&mut self, pattern: &CyclePattern) -> f64 {
        let (n, p) = self.x.dim();
        let rows = pattern.row_blocks();
        let sizes: Vec<usize> = (0..rows + pattern.col_blocks())
            .map(|v| if v < rows { n } else { p })
            .collect();
        let mut factors: Vec<Factor> = pattern
            .edges()
            .into_iter()
            .map(|e| Factor {
                vars: vec![e.row, rows + e.col],
                data: self.power(e.multiplicity),
                edge_power: Some(e.multiplicity),
            })
            .collect();

        for v in elimination_order(pattern, n, p) {
            let (group, rest): (Vec<Factor>, Vec<Factor>) =
                factors.into_iter().partition(|f| f.vars.contains(&v));
            factors = rest;
            if group.is_empty() {
                // already summed inside an earlier pairwise contraction
                continue;
            }
            let merged = self.eliminate(v, group, &factors, rows, &sizes);
            factors.push(merged);
        }
        factors
            .iter()
            .map(|f| *f.data.first().expect("fully contracted factors are scalars"))
            .product()
    }

    fn eliminate(
        &mut self,
        v: usize,
        mut group: Vec<Factor>,
        others: &[Factor],
        rows: usize,
        sizes: &[usize],
    ) -> Factor {
        if let [a, b] = group.as_slice() {
            if let (Some(pa), Some(pb)) = (a.edge_power, b.edge_power) {
                // two plain edges meeting at v: a cached Gram product
                return if v >= rows {
                    Factor {
                        vars: vec![a.vars[0], b.vars[0]],
                        data: self.row_gram(pa, pb),
                        edge_power: None,
                    }
                } else {
                    Factor {
                        vars: vec![a.vars[1], b.vars[1]],
                        data: self.col_gram(pa, pb),
                        edge_power: None,
                    }
                };
            }
        }
        // merge the pair with the smallest result first
        while group.len() > 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..group.len() {
                for j in i + 1..group.len() {
                    let keep = keep_set(others, &group, &[i, j]);
                    let size: f64 = group[i]
                        .vars
                        .iter()
                        .chain(&group[j].vars)
                        .copied()
                        .collect::<BTreeSet<usize>>()
                        .into_iter()
                        .filter(|w| keep.contains(w))
                        .map(|w| sizes[w] as f64)
                        .product();
                    if best.is_none_or(|(s, _, _)| size < s) {
                        best = Some((size, i, j));
                    }
                }
            }
            let (_, i, j) = best.expect("at least two factors");
            let keep = keep_set(others, &group, &[i, j]);
            let b = group.swap_remove(j);
            let a = group.swap_remove(i);
            group.push(contract_pair(&a, &b, &keep, sizes));
        }
        let mut acc = group.pop().expect("every variable touches a factor");
        if let Some(axis) = acc.vars.iter().position(|&w| w == v) {
            let mut vars = acc.vars.clone();
            vars.remove(axis);
            acc = Factor {
                vars,
                data: Rc::new(acc.data.sum_axis(Axis(axis))),
                edge_power: None,
            };
        }
        acc
    }
}

/// Greedy minimum-degree elimination order for a pattern's variables
/// (row blocks first, then column blocks).
///
/// Ties are broken by the size of the factor the elimination creates and
/// then by the cost of forming it, so that for `n < p` column blocks go first.
pub fn elimination_order(pattern: &CyclePattern, n: usize, p: usize) -> Vec<usize> {
    let rows = pattern.row_blocks();
    let total = rows + pattern.col_blocks();
    let size = |v: usize| if v < rows { n as f64 } else { p as f64 };
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); total];
    for e in pattern.edges() {
        let (a, b) = (e.row, rows + e.col);
        adj[a].insert(b);
        adj[b].insert(a);
    }
    let mut alive: BTreeSet<usize> = (0..total).collect();
    let mut order = Vec::with_capacity(total);
    while !alive.is_empty() {
        let v = *alive
            .iter()
            .min_by(|&&a, &&b| {
                let key = |v: usize| {
                    let fill: f64 = adj[v].iter().map(|&w| size(w)).product();
                    (adj[v].len(), fill, fill * size(v))
                };
                let (ka, kb) = (key(a), key(b));
                ka.0.cmp(&kb.0)
                    .then(ka.1.total_cmp(&kb.1))
                    .then(ka.2.total_cmp(&kb.2))
                    .then(a.cmp(&b))
            })
            .expect("non-empty");
        let neighbours: Vec<usize> = adj[v].iter().copied().collect();
        for &a in &neighbours {
            adj[a].remove(&v);
            for &b in &neighbours {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        adj[v].clear();
        alive.remove(&v);
        order.push(v);
    }
    order
}

/// Variables still needed outside the factors at `skip`.
fn keep_set(others: &[Factor], group: &[Factor], skip: &[usize]) -> BTreeSet<usize> {
    others
        .iter()
        .chain(group.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, f)| f))
        .flat_map(|f| f.vars.iter().copied())
        .collect()
}

fn sum_out_private(f: &Factor, other: &Factor, keep: &BTreeSet<usize>) -> Factor {
    let mut vars = f.vars.clone();
    let mut data: Option<ArrayD<f64>> = None;
    for axis in (0..f.vars.len()).rev() {
        let v = f.vars[axis];
        if !keep.contains(&v) && !other.vars.contains(&v) {
            let src = data.as_ref().unwrap_or(&f.data);
            data = Some(src.sum_axis(Axis(axis)));
            vars.remove(axis);
        }
    }
    match data {
        Some(d) => Factor {
            vars,
            data: Rc::new(d),
            edge_power: None,
        },
        None => f.clone(),
    }
}

fn permuted_3d(
    f: &Factor,
    groups: [&[usize]; 3],
    sizes: &[usize],
) -> ndarray::Array3<f64> {
    let perm: Vec<usize> = groups
        .iter()
        .flat_map(|g| g.iter().map(|v| f.vars.iter().position(|w| w == v).expect("var present")))
        .collect();
    let shape: Vec<usize> = groups
        .iter()
        .map(|g| g.iter().map(|&v| sizes[v]).product())
        .collect();
    let view = f.data.view().permuted_axes(IxDyn(&perm));
    let owned = view.as_standard_layout().into_owned();
    owned
        .into_shape_with_order(IxDyn(&shape))
        .expect("standard layout reshape")
        .into_dimensionality::<Ix3>()
        .expect("three groups")
}

/// Contracts two factors, keeping variables in `keep` and summing the rest.
fn contract_pair(a: &Factor, b: &Factor, keep: &BTreeSet<usize>, sizes: &[usize]) -> Factor {
    let a = sum_out_private(a, b, keep);
    let b = sum_out_private(b, &a, keep);
    let shared: Vec<usize> = a.vars.iter().copied().filter(|v| b.vars.contains(v)).collect();
    let batch: Vec<usize> = shared.iter().copied().filter(|v| keep.contains(v)).collect();
    let summed: Vec<usize> = shared.iter().copied().filter(|v| !keep.contains(v)).collect();
    let free_a: Vec<usize> = a.vars.iter().copied().filter(|v| !shared.contains(v)).collect();
    let free_b: Vec<usize> = b.vars.iter().copied().filter(|v| !shared.contains(v)).collect();

    let left = permuted_3d(&a, [&batch, &free_a, &summed], sizes);
    let right = permuted_3d(&b, [&batch, &summed, &free_b], sizes);
    let (nb, nfa, _) = left.dim();
    let nfb = right.dim().2;

    let mut out = ndarray::Array3::<f64>::zeros((nb, nfa, nfb));
    if nfa == 1 && nfb == 1 {
        Zip::from(out.outer_iter_mut())
            .and(left.outer_iter())
            .and(right.outer_iter())
            .for_each(|mut o, l, r| {
                o[(0, 0)] = l.row(0).dot(&r.column(0));
            });
    } else {
        for ((l, r), mut o) in left.outer_iter().zip(right.outer_iter()).zip(out.outer_iter_mut()) {
            general_mat_mul(1.0, &l, &r, 0.0, &mut o);
        }
    }

    let vars: Vec<usize> = batch.iter().chain(&free_a).chain(&free_b).copied().collect();
    let shape: Vec<usize> = vars.iter().map(|&v| sizes[v]).collect();
    let data = out
        .into_shape_with_order(IxDyn(&shape))
        .expect("output reshape");
    Factor {
        vars,
        data: Rc::new(data),
        edge_power: None,
    }
}

