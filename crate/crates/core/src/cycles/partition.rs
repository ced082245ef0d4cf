//! Set partitions of cycle positions and the collapsed cycle patterns they induce.
//!
//! A pattern records, for each position `t` of a length-`2k` bipartite cycle,
//! which row block `i_t` and which column block `j_t` it uses. The walk visits
//! edges `(i_t, j_t)` and `(i_{t+1}, j_t)` with indices taken mod `k`.

use std::collections::BTreeMap;

/// A set partition of `{0, …, k−1}` as a restricted growth string:
/// `labels[0] = 0` and each label is at most one more than the largest before it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    labels: Vec<u8>,
}

impl SetPartition {
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn num_blocks(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| *m as usize + 1)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_blocks()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Möbius function `μ(0̂, π) = Π_b (−1)^{|b|−1} (|b|−1)!` on the partition lattice.
    pub fn mobius_weight(&self) -> i64 {
        self.block_sizes()
            .into_iter()
            .map(|s| {
                let fact: i64 = (1..s as i64).product();
                if s % 2 == 1 {
                    fact
                } else {
                    -fact
                }
            })
            .product()
    }

    pub fn is_discrete(&self) -> bool {
        self.num_blocks() == self.labels.len()
    }
}

/// All set partitions of `{0, …, k−1}` in lexicographic order of their growth strings.
pub fn set_partitions(k: usize) -> Vec<SetPartition> {
    fn extend(prefix: &mut Vec<u8>, max: u8, k: usize, out: &mut Vec<SetPartition>) {
        if prefix.len() == k {
            out.push(SetPartition {
                labels: prefix.clone(),
            });
            return;
        }
        for label in 0..=max + 1 {
            prefix.push(label);
            extend(prefix, max.max(label), k, out);
            prefix.pop();
        }
    }
    if k == 0 {
        return vec![SetPartition { labels: Vec::new() }];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0u8];
    extend(&mut prefix, 0, k, &mut out);
    out
}

/// Bell numbers via the Bell triangle.
pub fn bell_number(k: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..k {
        let mut next = vec![*row.last().expect("non-empty")];
        for v in &row {
            let last = *next.last().expect("non-empty");
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// One distinct edge of a collapsed cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternEdge {
    pub row: usize,
    pub col: usize,
    /// Number of times the walk traverses this edge.
    pub multiplicity: u32,
}

/// A collapsed cycle, canonical under rotation and reflection of the walk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CyclePattern {
    rows: Vec<u8>,
    cols: Vec<u8>,
}

fn relabel(seq: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut map = [u8::MAX; 64];
    let mut next = 0u8;
    seq.map(|s| {
        let slot = &mut map[s as usize];
        if *slot == u8::MAX {
            *slot = next;
            next += 1;
        }
        *slot
    })
    .collect()
}

impl CyclePattern {
    /// Canonical pattern for row partition `rows` and column partition `cols` of the same order.
    pub fn canonical(rows: &SetPartition, cols: &SetPartition) -> Self {
        let k = rows.labels.len();
        assert_eq!(k, cols.labels.len(), "partitions must have the same order");
        let (r, c) = (&rows.labels, &cols.labels);
        let mut best: Option<CyclePattern> = None;
        for shift in 0..k {
            let rotated = CyclePattern {
                rows: relabel((0..k).map(|t| r[(t + shift) % k])),
                cols: relabel((0..k).map(|t| c[(t + shift) % k])),
            };
            let reflected = CyclePattern {
                rows: relabel((0..k).map(|t| r[(2 * k - t + shift) % k])),
                cols: relabel((0..k).map(|t| c[(3 * k - t - 1 + shift) % k])),
            };
            for cand in [rotated, reflected] {
                if best.as_ref().is_none_or(|b| cand < *b) {
                    best = Some(cand);
                }
            }
        }
        best.expect("k >= 1")
    }

    pub fn order(&self) -> usize {
        self.rows.len()
    }

    pub fn row_blocks(&self) -> usize {
        self.rows.iter().max().map_or(0, |m| *m as usize + 1)
    }

    pub fn col_blocks(&self) -> usize {
        self.cols.iter().max().map_or(0, |m| *m as usize + 1)
    }

    pub fn row_labels(&self) -> &[u8] {
        &self.rows
    }

    pub fn col_labels(&self) -> &[u8] {
        &self.cols
    }

    /// Distinct edges with traversal multiplicities, sorted by `(row, col)`.
    pub fn edges(&self) -> Vec<PatternEdge> {
        let k = self.order();
        let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for t in 0..k {
            let j = self.cols[t] as usize;
            *counts.entry((self.rows[t] as usize, j)).or_default() += 1;
            *counts.entry((self.rows[(t + 1) % k] as usize, j)).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|((row, col), multiplicity)| PatternEdge {
                row,
                col,
                multiplicity,
            })
            .collect()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for smaller in permutations(n - 1) {
        for pos in 0..n {
            let mut p = smaller.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

impl CyclePattern {
    /// Canonical form of the pattern's bipartite multigraph with rows and columns kept apart.
    ///
    /// For each ordering of the row blocks, every column becomes its vector of
    /// edge multiplicities; the sorted list of those vectors is minimised over
    /// row orderings. Two patterns share a key exactly when their multigraphs
    /// are isomorphic, so their unconstrained sums agree.
    pub fn graph_key(&self) -> Vec<Vec<u32>> {
        let (rows, cols) = (self.row_blocks(), self.col_blocks());
        let mut incidence = vec![vec![0u32; rows]; cols];
        for e in self.edges() {
            incidence[e.col][e.row] = e.multiplicity;
        }
        permutations(rows)
            .into_iter()
            .map(|perm| {
                let mut columns: Vec<Vec<u32>> = incidence
                    .iter()
                    .map(|c| perm.iter().map(|&r| c[r]).collect())
                    .collect();
                columns.sort_unstable();
                columns
            })
            .min()
            .expect("at least one row block")
    }
}

/// One isomorphism class of collapsed patterns with the summed Möbius weight of every partition pair producing it.
#[derive(Debug, Clone)]
pub struct PlannedPattern {
    pub pattern: CyclePattern,
    pub weight: f64,
    /// Number of `(π_I, π_J)` pairs that collapse to this pattern.
    pub pair_count: usize,
}

/// Inclusion–exclusion plan for one cycle order `k`.
#[derive(Debug, Clone)]
pub struct PartitionPlan {
    pub k: usize,
    pub partitions: Vec<SetPartition>,
    /// Pattern classes with non-zero total weight, ordered by graph key.
    pub patterns: Vec<PlannedPattern>,
}

impl PartitionPlan {
    pub fn new(k: usize) -> Self {
        let partitions = set_partitions(k);
        let mut by_pattern: BTreeMap<CyclePattern, (i64, usize)> = BTreeMap::new();
        for pi in &partitions {
            let wi = pi.mobius_weight();
            for pj in &partitions {
                let entry = by_pattern.entry(CyclePattern::canonical(pi, pj)).or_default();
                entry.0 += wi * pj.mobius_weight();
                entry.1 += 1;
            }
        }
        let mut by_graph: BTreeMap<Vec<Vec<u32>>, (CyclePattern, i64, usize)> = BTreeMap::new();
        for (pattern, (w, count)) in by_pattern {
            let entry = by_graph
                .entry(pattern.graph_key())
                .or_insert_with(|| (pattern, 0, 0));
            entry.1 += w;
            entry.2 += count;
        }
        let patterns = by_graph
            .into_values()
            .filter(|(_, w, _)| *w != 0)
            .map(|(pattern, w, pair_count)| PlannedPattern {
                pattern,
                weight: w as f64,
                pair_count,
            })
            .collect();
        Self {
            k,
            partitions,
            patterns,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.partitions.len() * self.partitions.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: count functions {0..k-1} -> {0..k-1} whose kernel is distinct,
    /// i.e. canonical labelings by first occurrence.
    fn brute_partition_count(k: usize) -> usize {
        let mut seen = std::collections::BTreeSet::new();
        let total = k.pow(k as u32);
        for code in 0..total {
            let mut c = code;
            let f: Vec<u8> = (0..k)
                .map(|_| {
                    let d = (c % k) as u8;
                    c /= k;
                    d
                })
                .collect();
            seen.insert(relabel(f.into_iter()));
        }
        seen.len()
    }

    #[test]
    fn partition_counts_are_bell_numbers() {
        assert_eq!(set_partitions(3).len(), 5);
        for k in 1..=6 {
            assert_eq!(set_partitions(k).len() as u64, bell_number(k));
            assert_eq!(set_partitions(k).len(), brute_partition_count(k));
        }
        assert_eq!(bell_number(6), 203);
    }

    #[test]
    fn mobius_weights() {
        let parts = set_partitions(3);
        let discrete = parts.iter().find(|p| p.is_discrete()).unwrap();
        assert_eq!(discrete.mobius_weight(), 1);
        let single = parts.iter().find(|p| p.num_blocks() == 1).unwrap();
        assert_eq!(single.mobius_weight(), 2);
    }

    #[test]
    fn mobius_inversion_counts_distinct_tuples() {
        // toy sum: sum_{a,b,c distinct} 1 over [n] by inclusion-exclusion
        for k in 1..=6 {
            for n in 1..=9u64 {
                let via_mobius: i64 = set_partitions(k)
                    .iter()
                    .map(|p| p.mobius_weight() * (n as i64).pow(p.num_blocks() as u32))
                    .sum();
                let falling: i64 = (0..k as u64).map(|i| n as i64 - i as i64).product();
                assert_eq!(via_mobius, falling, "k={k} n={n}");
            }
        }
    }

    #[test]
    fn canonical_pattern_is_rotation_and_reflection_invariant() {
        let parts = set_partitions(4);
        for a in &parts {
            for b in &parts {
                let base = CyclePattern::canonical(a, b);
                let rot_a = SetPartition {
                    labels: relabel((0..4).map(|t| a.labels[(t + 1) % 4])),
                };
                let rot_b = SetPartition {
                    labels: relabel((0..4).map(|t| b.labels[(t + 1) % 4])),
                };
                assert_eq!(base, CyclePattern::canonical(&rot_a, &rot_b));
                let total: u32 = base.edges().iter().map(|e| e.multiplicity).sum();
                assert_eq!(total, 8);
            }
        }
    }

    #[test]
    fn plan_accounts_for_every_pair() {
        for k in 1..=4 {
            let plan = PartitionPlan::new(k);
            assert_eq!(plan.pair_count() as u64, bell_number(k).pow(2));
            // the all-distinct pattern carries weight 1
            let discrete = plan
                .patterns
                .iter()
                .find(|p| p.pattern.row_blocks() == k && p.pattern.col_blocks() == k)
                .unwrap();
            assert_eq!(discrete.weight, 1.0);
        }
        assert_eq!(PartitionPlan::new(1).patterns.len(), 1);
    }

    #[test]
    fn graph_key_identifies_isomorphic_patterns() {
        let p = |r: &[u8], c: &[u8]| CyclePattern {
            rows: r.to_vec(),
            cols: c.to_vec(),
        };
        // same multigraph reached through different partition pairs
        let a = p(&[0, 0, 1, 2], &[0, 1, 0, 1]);
        let b = p(&[0, 1, 0, 2], &[0, 1, 1, 0]);
        assert_ne!(a, b);
        assert_eq!(a.graph_key(), b.graph_key());
        // a 4-cycle on two rows differs from a doubled path
        let c = p(&[0, 1], &[0, 1]);
        let d = p(&[0, 1], &[0, 0]);
        assert_ne!(c.graph_key(), d.graph_key());
        assert_eq!(permutations(4).len(), 24);
    }
}
