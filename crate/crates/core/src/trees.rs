//! Rooted trees in the m-vector encoding, labeled trees with momenta, and
//! the scale bookkeeping behind the counting lemma.
//!
//! A tree of order `N` is the vector `(m_1, …, m_N)` of child counts listed
//! in preorder, node 0 being the root. Children are ordered, so the forest
//! `T_N` has Catalan(N−1) members.

use std::fmt;

use crate::divisors::{ScaleDivisor, ScaleSequence};
use crate::series::{CoefIndex, Momentum};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RootedTree {
    m: Vec<u32>,
}

impl fmt::Debug for RootedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RootedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.m.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl RootedTree {
    /// Checks `Σ m_i = N−1` and `Σ_{i>=j} m_i <= N−j`.
    pub fn new(m: Vec<u32>) -> Option<Self> {
        let n = m.len();
        if n == 0 || m.iter().map(|&x| x as usize).sum::<usize>() != n - 1 {
            return None;
        }
        let mut tail = 0usize;
        for j in (0..n).rev() {
            tail += m[j] as usize;
            // 1-based j+1: tail sum from j+1 to N must be <= N−(j+1)
            if tail > n - (j + 1) {
                return None;
            }
        }
        Some(RootedTree { m })
    }

    pub fn single() -> Self {
        RootedTree { m: vec![0] }
    }

    pub fn m(&self) -> &[u32] {
        &self.m
    }

    /// Number of nodes `N`.
    pub fn order(&self) -> usize {
        self.m.len()
    }

    /// Parent of every node (root maps to `None`), in preorder.
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.m.len()];
        let mut stack: Vec<(usize, u32)> = Vec::new();
        for v in 0..self.m.len() {
            while let Some(top) = stack.last_mut() {
                if top.1 == 0 {
                    stack.pop();
                } else {
                    break;
                }
            }
            if let Some(top) = stack.last_mut() {
                parents[v] = Some(top.0);
                top.1 -= 1;
            }
            stack.push((v, self.m[v]));
        }
        parents
    }

    /// Children of every node, in order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.m.len()];
        for (v, p) in self.parents().into_iter().enumerate() {
            if let Some(p) = p {
                children[p].push(v);
            }
        }
        children
    }

    /// Size of the subtree rooted at every node.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let parents = self.parents();
        let mut size = vec![1usize; self.m.len()];
        for v in (1..self.m.len()).rev() {
            if let Some(p) = parents[v] {
                size[p] += size[v];
            }
        }
        size
    }

    /// `(t, [θ_1, …, θ_t])`: root degree and the subtrees hanging from it.
    pub fn standard_decomposition(&self) -> (u32, Vec<RootedTree>) {
        let t = self.m[0];
        let mut subtrees = Vec::with_capacity(t as usize);
        let mut pos = 1;
        while pos < self.m.len() {
            let start = pos;
            let mut open = 1i64;
            while open > 0 {
                open += self.m[pos] as i64 - 1;
                pos += 1;
            }
            subtrees.push(RootedTree { m: self.m[start..pos].to_vec() });
        }
        (t, subtrees)
    }

    /// Inverse of [`RootedTree::standard_decomposition`].
    pub fn join(subtrees: &[RootedTree]) -> RootedTree {
        let mut m = vec![subtrees.len() as u32];
        for s in subtrees {
            m.extend_from_slice(&s.m);
        }
        RootedTree { m }
    }
}

/// Every tree of order `n`, in lexicographic order of the m-vectors.
pub fn enumerate_forest(n: usize) -> Vec<RootedTree> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut cur = Vec::with_capacity(n);
    forest_rec(n, &mut cur, 1, &mut out);
    out
}

// `open` counts nodes still to be placed that are already attached.
fn forest_rec(n: usize, cur: &mut Vec<u32>, open: usize, out: &mut Vec<RootedTree>) {
    let placed = cur.len();
    if placed == n {
        if open == 0 {
            out.push(RootedTree { m: cur.clone() });
        }
        return;
    }
    let remaining_after = n - placed - 1;
    // after placing this node, open − 1 + m slots remain; m must leave at
    // least one open slot until the last node and not exceed the nodes left
    let open_after_base = open - 1;
    for m in 0..=remaining_after.saturating_sub(open_after_base) as u32 {
        let open_after = open_after_base + m as usize;
        if remaining_after > 0 && open_after == 0 {
            continue;
        }
        cur.push(m);
        forest_rec(n, cur, open_after, out);
        cur.pop();
    }
}

/// A rooted tree with node labels `α_v` (`|α_v| >= 2`) and one unit label
/// per line, stored as the axis of the line leaving each node. The line
/// leaving the root carries the axis `j` of the computed coefficient.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LabeledTree {
    tree: RootedTree,
    node_labels: Vec<CoefIndex>,
    line_axes: Vec<usize>,
}

impl fmt::Debug for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", encode_labeled(self))
    }
}

impl LabeledTree {
    pub fn new(tree: RootedTree, node_labels: Vec<CoefIndex>, line_axes: Vec<usize>) -> Option<Self> {
        let n = tree.order();
        if node_labels.len() != n || line_axes.len() != n {
            return None;
        }
        let dim = node_labels[0].len();
        if node_labels.iter().any(|a| a.len() != dim || a.degree() < 2) || line_axes.iter().any(|&i| i >= dim) {
            return None;
        }
        Some(LabeledTree { tree, node_labels, line_axes })
    }

    pub fn tree(&self) -> &RootedTree {
        &self.tree
    }

    pub fn node_labels(&self) -> &[CoefIndex] {
        &self.node_labels
    }

    /// Axis `i` of the unit label `e_i` of the line leaving each node.
    pub fn line_axes(&self) -> &[usize] {
        &self.line_axes
    }

    pub fn dim(&self) -> usize {
        self.node_labels[0].len()
    }

    pub fn root_axis(&self) -> usize {
        self.line_axes[0]
    }

    /// `β_v`: sum of the labels of the lines entering each node.
    pub fn betas(&self) -> Vec<CoefIndex> {
        let dim = self.dim();
        let mut beta = vec![vec![0u32; dim]; self.tree.order()];
        for (v, p) in self.tree.parents().into_iter().enumerate() {
            if let Some(p) = p {
                beta[p][self.line_axes[v]] += 1;
            }
        }
        beta.into_iter().map(CoefIndex::new).collect()
    }

    /// Momentum `ν` of the line leaving each node: `Σ_{w in subtree}(α_w − β_w)`.
    pub fn momenta(&self) -> Vec<Momentum> {
        let betas = self.betas();
        let parents = self.tree.parents();
        let mut nu: Vec<Momentum> = self
            .node_labels
            .iter()
            .zip(&betas)
            .map(|(a, b)| a.to_momentum().minus(&b.to_momentum()))
            .collect();
        for v in (1..nu.len()).rev() {
            if let Some(p) = parents[v] {
                let child = nu[v].clone();
                nu[p] = nu[p].plus(&child);
            }
        }
        nu
    }

    /// `ν̄ = ν − β` for the line leaving each node.
    pub fn reduced_momenta(&self) -> Vec<Momentum> {
        self.momenta()
            .into_iter()
            .zip(&self.line_axes)
            .map(|(nu, &i)| nu.minus_unit(i))
            .collect()
    }

    /// Total momentum `ν_θ` (the momentum of the root line).
    pub fn total_momentum(&self) -> Momentum {
        self.momenta().swap_remove(0)
    }

    /// `α_v ≥ β_v` at every node, i.e. every binomial factor is nonzero.
    pub fn is_contributing(&self) -> bool {
        self.node_labels.iter().zip(self.betas()).all(|(a, b)| a.dominates(&b))
    }
}

/// Textual encoding with 1-based axes:
/// `m=(1,0) nodes=[(2,0);(1,1)] lines=[1,2]`.
pub fn encode_labeled(t: &LabeledTree) -> String {
    let nodes: Vec<String> = t.node_labels.iter().map(|a| a.to_string()).collect();
    let lines: Vec<String> = t.line_axes.iter().map(|i| (i + 1).to_string()).collect();
    format!("m={} nodes=[{}] lines=[{}]", t.tree, nodes.join(";"), lines.join(","))
}

/// Which labelings [`enumerate_labeled`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelFilter {
    /// Every labeling with node labels from the support.
    All,
    /// Only labelings with `α_v ≥ β_v` at every node.
    Contributing,
}

/// Every labeling of every tree of order `n` with total momentum `α` and
/// root line `e_j`, node labels drawn from `support` (indices of degree
/// below two are ignored). Ordered by m-vector, then node labels, then
/// line labels.
pub fn enumerate_labeled(
    n: usize,
    alpha: &CoefIndex,
    axis: usize,
    support: &[CoefIndex],
    filter: LabelFilter,
) -> Vec<LabeledTree> {
    let mut out = Vec::new();
    if n == 0 || (alpha.degree() as usize) < n + 1 {
        return out;
    }
    let support = prepare_support(support, alpha.len());
    for tree in enumerate_forest(n) {
        out.extend(labelings_of(&tree, alpha, axis, &support, filter));
    }
    out
}

fn prepare_support(support: &[CoefIndex], dim: usize) -> Vec<CoefIndex> {
    let mut s: Vec<CoefIndex> = support
        .iter()
        .filter(|a| a.degree() >= 2 && a.len() == dim)
        .cloned()
        .collect();
    s.sort();
    s.dedup();
    s
}

/// All labelings of one tree, in the order used by [`enumerate_labeled`].
pub fn labelings_of(
    tree: &RootedTree,
    alpha: &CoefIndex,
    axis: usize,
    support: &[CoefIndex],
    filter: LabelFilter,
) -> Vec<LabeledTree> {
    let dim = alpha.len();
    let n = tree.order();
    let mut out = Vec::new();
    if (alpha.degree() as usize) < n + 1 {
        return out;
    }
    let support = prepare_support(support, dim);
    if support.is_empty() {
        return out;
    }
    let parents = tree.parents();
    let max_sup = support.iter().map(CoefIndex::degree).max().unwrap_or(0);
    let mut axes = vec![0usize; n];
    axes[0] = axis;
    // iterate line labels of the non-root lines in lexicographic order
    let total_lines = n - 1;
    let combos = dim.pow(total_lines as u32);
    let mut found: Vec<LabeledTree> = Vec::new();
    for code in 0..combos {
        let mut c = code;
        for v in (1..n).rev() {
            axes[v] = c % dim;
            c /= dim;
        }
        let mut beta = vec![vec![0u32; dim]; n];
        for v in 1..n {
            beta[parents[v].expect("non-root")][axes[v]] += 1;
        }
        // Σ α_v = α + Σ_{non-root lines} e_{l}
        let mut target: Vec<u32> = alpha.entries().to_vec();
        for &a in &axes[1..] {
            target[a] += 1;
        }
        let target_deg: u32 = target.iter().sum();
        let mut labels: Vec<CoefIndex> = Vec::with_capacity(n);
        let ctx = LabelCtx { support: &support, beta: &beta, filter, max_sup, n };
        assign_labels(&ctx, 0, &mut target.clone(), target_deg, &mut labels, &mut |labels| {
            found.push(LabeledTree { tree: tree.clone(), node_labels: labels.to_vec(), line_axes: axes.clone() });
        });
    }
    found.sort_by(|a, b| {
        a.node_labels
            .iter()
            .cmp(b.node_labels.iter())
            .then_with(|| a.line_axes.cmp(&b.line_axes))
    });
    out.extend(found);
    out
}

struct LabelCtx<'a> {
    support: &'a [CoefIndex],
    beta: &'a [Vec<u32>],
    filter: LabelFilter,
    max_sup: u32,
    n: usize,
}

fn assign_labels<F: FnMut(&[CoefIndex])>(
    ctx: &LabelCtx<'_>,
    v: usize,
    remaining: &mut Vec<u32>,
    remaining_deg: u32,
    labels: &mut Vec<CoefIndex>,
    emit: &mut F,
) {
    if v == ctx.n {
        if remaining_deg == 0 {
            emit(labels);
        }
        return;
    }
    let left = (ctx.n - v) as u32;
    if remaining_deg < 2 * left || remaining_deg > ctx.max_sup * left {
        return;
    }
    for a in ctx.support {
        if !a.entries().iter().zip(remaining.iter()).all(|(x, r)| x <= r) {
            continue;
        }
        if ctx.filter == LabelFilter::Contributing
            && !a.entries().iter().zip(&ctx.beta[v]).all(|(x, b)| x >= b)
        {
            continue;
        }
        for (r, x) in remaining.iter_mut().zip(a.entries()) {
            *r -= x;
        }
        labels.push(a.clone());
        assign_labels(ctx, v + 1, remaining, remaining_deg - a.degree(), labels, emit);
        labels.pop();
        for (r, x) in remaining.iter_mut().zip(a.entries()) {
            *r += x;
        }
    }
}

/// Scale of a line with reduced momentum `ν̄`: the `k` with
/// `½T(p_{k+1}) <= s(ν̄) < ½T(p_k)`, `None` above every threshold or for
/// `ν̄ = 0`.
pub fn scale_of_line(nu_bar: &Momentum, sd: &dyn ScaleDivisor, seq: &ScaleSequence) -> Option<usize> {
    if nu_bar.is_zero() {
        return None;
    }
    let x = sd.small(nu_bar);
    let abs = nu_bar.abs_degree() as u64;
    let mut scale = None;
    let mut k = 0;
    // thresholds are cut at degree p_k, so a line of degree <= p_k is never below them
    while let Some(pk) = seq.get(k) {
        if pk >= abs {
            break;
        }
        if x < 0.5 * sd.threshold(pk) {
            scale = Some(k);
        } else {
            break;
        }
        k += 1;
    }
    scale
}

/// `N_k(θ)`: lines (root line included) on scale `k`.
pub fn count_scale(theta: &LabeledTree, k: usize, sd: &dyn ScaleDivisor, seq: &ScaleSequence) -> usize {
    theta
        .reduced_momenta()
        .iter()
        .filter(|nu| scale_of_line(nu, sd, seq) == Some(k))
        .count()
}

/// All scales present in the tree with their line counts.
pub fn scale_histogram(theta: &LabeledTree, sd: &dyn ScaleDivisor, seq: &ScaleSequence) -> Vec<(usize, usize)> {
    let mut h: Vec<(usize, usize)> = Vec::new();
    for nu in theta.reduced_momenta() {
        if let Some(k) = scale_of_line(&nu, sd, seq) {
            match h.iter_mut().find(|(s, _)| *s == k) {
                Some((_, c)) => *c += 1,
                None => h.push((k, 1)),
            }
        }
    }
    h.sort();
    h
}

/// `0` if `|ν̄_θ| < p_k`, else `2⌊|ν̄_θ|/p_k⌋ − 1`, with the signed degree.
pub fn counting_bound(theta: &LabeledTree, k: usize, seq: &ScaleSequence) -> i64 {
    let s = theta.total_momentum().signed_degree() - 1;
    let Some(pk) = seq.get(k) else { return 0 };
    counting_bound_for_degree(s, pk)
}

pub fn counting_bound_for_degree(s: i64, pk: u64) -> i64 {
    let pk = pk as i64;
    if s < pk {
        0
    } else {
        2 * (s / pk) - 1
    }
}

/// `⌊|ν̄_θ| / q_k⌋` with continued-fraction denominators `q`.
pub fn davie_bound(theta: &LabeledTree, k: usize, q: &[u64]) -> i64 {
    let s = theta.total_momentum().signed_degree() - 1;
    match q.get(k) {
        Some(&qk) if qk > 0 => s.div_euclid(qk as i64),
        _ => 0,
    }
}
