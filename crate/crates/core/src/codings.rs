//! Rooted ordered trees and their codings.
//!
//! Trees and forests are stored as the sequence of child counts `k_v` in
//! lexicographic (depth-first) order of their Ulam-Harris labels. That
//! sequence is exactly the increment sequence of the Łukasiewicz walk plus
//! one, so validity is the walk condition: partial sums of `k_v − 1` stay
//! nonnegative until the last vertex of each tree.
//!
//! Sibling-count conventions for the discrete exploration vectors: the vector
//! at step `n` has one entry per generation `1..=H_n`, the last entry being
//! the younger/older siblings of the visited vertex itself.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generation of each vertex in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightSeq(pub Vec<u32>);

/// Contour at integer times: unit up/down steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourSeq(pub Vec<u32>);

/// `V_0 = 0`, `V_{n+1} − V_n = k_{u(n)} − 1 ≥ −1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LukasiewiczWalk(pub Vec<i64>);

macro_rules! seq_deref {
    ($t:ty, $item:ty) => {
        impl std::ops::Deref for $t {
            type Target = [$item];
            fn deref(&self) -> &[$item] {
                &self.0
            }
        }
    };
}
seq_deref!(HeightSeq, u32);
seq_deref!(ContourSeq, u32);
seq_deref!(LukasiewiczWalk, i64);

/// Younger (`rho`) and older (`eta`) sibling counts of the ancestors of the
/// vertex visited at a given step, indexed by generation `1..=H_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscreteExploration {
    pub rho: Vec<u32>,
    pub eta: Vec<u32>,
}

/// `Z^n_k`, `k = 0..=n`: vertices of generation `k` with descendants at generation `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReducedCounts(pub Vec<u64>);

/// A finite sequence of rooted ordered trees.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Forest {
    child_counts: Vec<u32>,
}

/// A single rooted ordered tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderedTree {
    child_counts: Vec<u32>,
}

/// Parent/child-index/depth tables for a tree or forest.
#[derive(Debug, Clone)]
pub struct TreeIndex {
    /// `usize::MAX` for roots.
    pub parent: Vec<usize>,
    /// 1-based position among siblings (for roots, position in the forest).
    pub child_index: Vec<u32>,
    pub depth: Vec<u32>,
}

fn validate_forest(child_counts: &[u32]) -> Result<usize> {
    let mut pending: i64 = 0;
    let mut trees = 0;
    for (i, &k) in child_counts.iter().enumerate() {
        if pending == 0 {
            trees += 1;
            pending = 1;
        }
        pending += k as i64 - 1;
        if pending < 0 {
            return Err(Error::InvalidTree(format!("negative pending count at vertex {i}")));
        }
    }
    if pending != 0 {
        return Err(Error::InvalidTree(format!(
            "child counts end with {pending} unexplored vertices"
        )));
    }
    Ok(trees)
}

impl Forest {
    pub fn from_child_counts(child_counts: Vec<u32>) -> Result<Self> {
        validate_forest(&child_counts)?;
        Ok(Self { child_counts })
    }

    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a OrderedTree>) -> Self {
        let child_counts = trees.into_iter().flat_map(|t| t.child_counts.iter().copied()).collect();
        Self { child_counts }
    }

    pub fn child_counts(&self) -> &[u32] {
        &self.child_counts
    }

    pub fn size(&self) -> usize {
        self.child_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.child_counts.is_empty()
    }

    /// Index ranges of the individual trees.
    pub fn tree_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = Vec::new();
        let mut pending: i64 = 0;
        let mut start = 0;
        for (i, &k) in self.child_counts.iter().enumerate() {
            if pending == 0 {
                start = i;
                pending = 1;
            }
            pending += k as i64 - 1;
            if pending == 0 {
                ranges.push(start..i + 1);
            }
        }
        ranges
    }

    pub fn trees(&self) -> Vec<OrderedTree> {
        self.tree_ranges()
            .into_iter()
            .map(|r| OrderedTree {
                child_counts: self.child_counts[r].to_vec(),
            })
            .collect()
    }

    pub fn num_trees(&self) -> usize {
        self.tree_ranges().len()
    }

    pub fn lukasiewicz(&self) -> LukasiewiczWalk {
        let mut v = Vec::with_capacity(self.child_counts.len() + 1);
        let mut cur = 0i64;
        v.push(0);
        for &k in &self.child_counts {
            cur += k as i64 - 1;
            v.push(cur);
        }
        LukasiewiczWalk(v)
    }

    /// Generations in lexicographic order, trees concatenated.
    pub fn height(&self) -> HeightSeq {
        HeightSeq(self.index().depth)
    }

    /// Number of vertices in each generation, summed over the trees.
    pub fn generation_sizes(&self) -> Vec<u64> {
        let idx = self.index();
        let mut sizes = Vec::new();
        for &d in &idx.depth {
            let d = d as usize;
            if sizes.len() <= d {
                sizes.resize(d + 1, 0);
            }
            sizes[d] += 1;
        }
        sizes
    }

    /// Parent pointers recovered with an explicit depth-first stack.
    pub fn index(&self) -> TreeIndex {
        let n = self.child_counts.len();
        let mut parent = vec![usize::MAX; n];
        let mut child_index = vec![0u32; n];
        let mut depth = vec![0u32; n];
        // (vertex, children handed out so far)
        let mut stack: Vec<(usize, u32)> = Vec::new();
        let mut roots = 0u32;
        for v in 0..n {
            while let Some(&(u, used)) = stack.last() {
                if used < self.child_counts[u] {
                    break;
                }
                stack.pop();
            }
            match stack.last_mut() {
                Some((u, used)) => {
                    *used += 1;
                    parent[v] = *u;
                    child_index[v] = *used;
                    depth[v] = depth[*u] + 1;
                }
                None => {
                    roots += 1;
                    child_index[v] = roots;
                }
            }
            stack.push((v, 0));
        }
        TreeIndex { parent, child_index, depth }
    }

    /// Children lists in order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let idx = self.index();
        let mut out: Vec<Vec<usize>> = self.child_counts.iter().map(|&k| Vec::with_capacity(k as usize)).collect();
        for (v, &p) in idx.parent.iter().enumerate() {
            if p != usize::MAX {
                out[p].push(v);
            }
        }
        out
    }

    /// Contour of the whole forest rebuilt from its height sequence.
    pub fn contour(&self) -> ContourSeq {
        contour_from_height(&self.height())
    }
}

impl OrderedTree {
    pub fn from_child_counts(child_counts: Vec<u32>) -> Result<Self> {
        let trees = validate_forest(&child_counts)?;
        if trees != 1 {
            return Err(Error::InvalidTree(format!("expected one tree, found {trees}")));
        }
        Ok(Self { child_counts })
    }

    /// The single-vertex tree `{∅}`.
    pub fn root_only() -> Self {
        Self { child_counts: vec![0] }
    }

    /// Builds a tree from explicit Ulam-Harris labels (any order). Labels
    /// must be prefix closed with contiguous sibling indices starting at 1.
    pub fn from_labels<L: AsRef<[u32]>>(labels: &[L]) -> Result<Self> {
        let mut sorted: Vec<Vec<u32>> = labels.iter().map(|l| l.as_ref().to_vec()).collect();
        sorted.sort();
        sorted.dedup();
        if sorted.first().map(|l| !l.is_empty()).unwrap_or(true) {
            return Err(Error::InvalidTree("root label missing".into()));
        }
        let set: std::collections::HashSet<&[u32]> = sorted.iter().map(|l| l.as_slice()).collect();
        let mut child_counts = Vec::with_capacity(sorted.len());
        for label in &sorted {
            if let Some((&last, prefix)) = label.split_last() {
                if last == 0 || !set.contains(prefix) {
                    return Err(Error::InvalidTree(format!("label {label:?} has no parent")));
                }
                if last > 1 {
                    let mut elder = prefix.to_vec();
                    elder.push(last - 1);
                    if !set.contains(elder.as_slice()) {
                        return Err(Error::InvalidTree(format!("label {label:?} has a missing elder sibling")));
                    }
                }
            }
            let mut k = 0u32;
            loop {
                let mut child = label.clone();
                child.push(k + 1);
                if set.contains(child.as_slice()) {
                    k += 1;
                } else {
                    break;
                }
            }
            child_counts.push(k);
        }
        Self::from_child_counts(child_counts)
    }

    /// Reconstructs the tree from its height sequence.
    pub fn from_height(height: &HeightSeq) -> Result<Self> {
        let h = &height.0;
        if h.first() != Some(&0) {
            return Err(Error::InvalidTree("height sequence must start at 0".into()));
        }
        let mut child_counts = vec![0u32; h.len()];
        // stack[d] = index of the current ancestor at generation d
        let mut stack: Vec<usize> = vec![0];
        for (i, &hi) in h.iter().enumerate().skip(1) {
            let hi = hi as usize;
            if hi == 0 || hi > stack.len() {
                return Err(Error::InvalidTree(format!("invalid height {hi} at index {i}")));
            }
            stack.truncate(hi);
            child_counts[stack[hi - 1]] += 1;
            stack.push(i);
        }
        Ok(Self { child_counts })
    }

    pub fn child_counts(&self) -> &[u32] {
        &self.child_counts
    }

    pub fn size(&self) -> usize {
        self.child_counts.len()
    }

    pub fn as_forest(&self) -> Forest {
        Forest {
            child_counts: self.child_counts.clone(),
        }
    }

    /// `ζ(𝒯) = 2(#𝒯 − 1)`.
    pub fn contour_duration(&self) -> usize {
        2 * (self.size() - 1)
    }

    pub fn height(&self) -> HeightSeq {
        self.as_forest().height()
    }

    /// Maximal generation.
    pub fn max_height(&self) -> u32 {
        self.height().0.into_iter().max().unwrap_or(0)
    }

    pub fn lukasiewicz(&self) -> LukasiewiczWalk {
        self.as_forest().lukasiewicz()
    }

    pub fn index(&self) -> TreeIndex {
        self.as_forest().index()
    }

    pub fn generation_sizes(&self) -> Vec<u64> {
        self.as_forest().generation_sizes()
    }

    pub fn labels(&self) -> Vec<Vec<u32>> {
        let idx = self.index();
        let mut labels: Vec<Vec<u32>> = Vec::with_capacity(self.size());
        for v in 0..self.size() {
            let label = if v == 0 {
                Vec::new()
            } else {
                let mut l = labels[idx.parent[v]].clone();
                l.push(idx.child_index[v]);
                l
            };
            labels.push(label);
        }
        labels
    }

    /// Contour at integer times, produced by walking around the tree.
    pub fn contour(&self) -> ContourSeq {
        let mut c = Vec::with_capacity(self.contour_duration() + 1);
        c.push(0);
        // remaining children of every vertex on the current path
        let mut stack: Vec<u32> = vec![self.child_counts[0]];
        let mut next = 1;
        while let Some(top) = stack.last_mut() {
            if *top > 0 {
                *top -= 1;
                stack.push(self.child_counts[next]);
                next += 1;
                c.push((stack.len() - 1) as u32);
            } else {
                stack.pop();
                if !stack.is_empty() {
                    c.push((stack.len() - 1) as u32);
                }
            }
        }
        ContourSeq(c)
    }

    /// Tree with every child list reversed.
    pub fn mirror(&self) -> Self {
        self.mirror_with_map().0
    }

    /// Mirror tree together with the map from original lexicographic index to
    /// the index of the mirrored vertex.
    pub fn mirror_with_map(&self) -> (Self, Vec<usize>) {
        let children = self.as_forest().children();
        let n = self.size();
        let mut counts = Vec::with_capacity(n);
        let mut map = vec![0usize; n];
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            map[v] = counts.len();
            counts.push(self.child_counts[v]);
            // Visit the last child first: push in original order.
            stack.extend(children[v].iter().copied());
        }
        (Self { child_counts: counts }, map)
    }

    /// Sibling counts along the ancestral line of vertex `n`.
    pub fn exploration_at(&self, n: usize) -> Result<DiscreteExploration> {
        if n >= self.size() {
            return Err(Error::domain(format!("step {n} out of range for tree of size {}", self.size())));
        }
        Ok(exploration_from_index(&self.child_counts, &self.index(), n))
    }

    /// `exploration_at` for every vertex in order, building the index once.
    pub fn explorations(&self) -> impl Iterator<Item = DiscreteExploration> + '_ {
        let idx = self.index();
        (0..self.size()).map(move |n| exploration_from_index(&self.child_counts, &idx, n))
    }

    /// `Z^n` by marking the ancestors of every generation-`n` vertex.
    pub fn reduced_counts(&self, n: u32) -> ReducedCounts {
        let idx = self.index();
        let mut marked = vec![false; self.size()];
        let mut z = vec![0u64; n as usize + 1];
        for v in 0..self.size() {
            if idx.depth[v] != n {
                continue;
            }
            let mut u = v;
            loop {
                if marked[u] {
                    break;
                }
                marked[u] = true;
                z[idx.depth[u] as usize] += 1;
                if idx.parent[u] == usize::MAX {
                    break;
                }
                u = idx.parent[u];
            }
        }
        ReducedCounts(z)
    }
}

/// Exploration vectors from precomputed index tables.
pub fn exploration_from_index(child_counts: &[u32], idx: &TreeIndex, n: usize) -> DiscreteExploration {
    let h = idx.depth[n] as usize;
    let mut rho = vec![0u32; h];
    let mut eta = vec![0u32; h];
    let mut v = n;
    for g in (0..h).rev() {
        let p = idx.parent[v];
        let j = idx.child_index[v];
        rho[g] = child_counts[p] - j;
        eta[g] = j - 1;
        v = p;
    }
    DiscreteExploration { rho, eta }
}

impl fmt::Display for OrderedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_counts(f, &self.child_counts)
    }
}

impl fmt::Display for Forest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_counts(f, &self.child_counts)
    }
}

fn write_counts(f: &mut fmt::Formatter<'_>, counts: &[u32]) -> fmt::Result {
    for (i, k) in counts.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{k}")?;
    }
    Ok(())
}

fn parse_counts(s: &str) -> Result<Vec<u32>> {
    s.trim()
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u32>()
                .map_err(|e| Error::InvalidTree(format!("bad child count `{tok}`: {e}")))
        })
        .collect()
}

impl FromStr for OrderedTree {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::from_child_counts(parse_counts(s)?)
    }
}

impl FromStr for Forest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::from_child_counts(parse_counts(s)?)
    }
}

/// Inverse of [`Forest::lukasiewicz`].
pub fn walk_to_forest(walk: &LukasiewiczWalk) -> Result<Forest> {
    let v = &walk.0;
    if v.first() != Some(&0) {
        return Err(Error::InvalidWalk {
            step: 0,
            reason: "walk must start at 0".into(),
        });
    }
    let mut counts = Vec::with_capacity(v.len().saturating_sub(1));
    let mut running_min = 0i64;
    for (i, pair) in v.windows(2).enumerate() {
        let inc = pair[1] - pair[0];
        if inc < -1 {
            return Err(Error::InvalidWalk {
                step: i + 1,
                reason: format!("increment {inc} below -1"),
            });
        }
        counts.push((inc + 1) as u32);
        running_min = running_min.min(pair[1]);
    }
    let last = *v.last().expect("nonempty");
    if v.len() > 1 && (last != running_min || v[..v.len() - 1].iter().any(|&x| x <= last)) {
        return Err(Error::InvalidWalk {
            step: v.len() - 1,
            reason: "walk must end at the first hitting time of its minimum".into(),
        });
    }
    Forest::from_child_counts(counts)
}

/// `H_n = #{k < n : V_k = min_{k ≤ j ≤ n} V_j}` with a stack of running minima.
///
/// The walk has one more entry than the height sequence; `H_n` is produced
/// for `n = 0..len−1`.
pub fn height_from_walk(walk: &LukasiewiczWalk) -> HeightSeq {
    let v = &walk.0;
    let n = v.len().saturating_sub(1);
    let mut h = Vec::with_capacity(n);
    let mut stack: Vec<i64> = Vec::new();
    for &x in v.iter().take(n) {
        while stack.last().is_some_and(|&top| top > x) {
            stack.pop();
        }
        h.push(stack.len() as u32);
        stack.push(x);
    }
    HeightSeq(h)
}

/// Literal `O(n²)` evaluation of the height formula, kept as a reference.
pub fn height_from_walk_literal(walk: &LukasiewiczWalk) -> HeightSeq {
    let v = &walk.0;
    let n = v.len().saturating_sub(1);
    let h = (0..n)
        .map(|m| {
            (0..m)
                .filter(|&k| {
                    let inf = v[k..=m].iter().copied().min().expect("nonempty");
                    v[k] == inf
                })
                .count() as u32
        })
        .collect();
    HeightSeq(h)
}

/// Contour at integer times from `K_n = 2n − H_n` and
/// `C_t = (H_n − (t − K_n))^+` on `[K_n, K_{n+1} − 1]`,
/// `C_t = (H_{n+1} − (K_{n+1} − t))^+` on `[K_{n+1} − 1, K_{n+1}]`,
/// followed by the final descent to 0.
pub fn contour_from_height(height: &HeightSeq) -> ContourSeq {
    let h = &height.0;
    if h.is_empty() {
        return ContourSeq(Vec::new());
    }
    let k = |n: usize| 2 * n as i64 - h[n] as i64;
    let last = h.len() - 1;
    let end = k(last) + h[last] as i64;
    let mut c = Vec::with_capacity(end as usize + 1);
    let mut n = 0;
    for t in 0..=end {
        while n < last && k(n + 1) <= t {
            n += 1;
        }
        let val = if n < last && t >= k(n + 1) - 1 {
            h[n + 1] as i64 - (k(n + 1) - t)
        } else {
            h[n] as i64 - (t - k(n))
        };
        c.push(val.max(0) as u32);
    }
    ContourSeq(c)
}

/// `K_n = 2n − H_n`: the time at which the contour first reaches vertex `n`.
pub fn contour_visit_times(height: &HeightSeq) -> Vec<u64> {
    height
        .iter()
        .enumerate()
        .map(|(n, &hn)| 2 * n as u64 - hn as u64)
        .collect()
}

/// `#{j < horizon : H_j = a}`.
pub fn occupation_counts(height: &HeightSeq, level: u32, horizon: usize) -> u64 {
    height.iter().take(horizon).filter(|&&x| x == level).count() as u64
}

/// Number of excursions of `H` above level `k` (subtrees rooted at generation
/// `k`) that reach level `n`.
pub fn excursion_count_above(height: &HeightSeq, k: u32, n: u32) -> u64 {
    let mut count = 0;
    let mut inside = false;
    let mut hit = false;
    for &x in height.iter() {
        if x <= k {
            if inside && hit {
                count += 1;
            }
            inside = x == k;
            hit = x >= n;
        } else if inside && x >= n {
            hit = true;
        }
    }
    if inside && hit {
        count += 1;
    }
    count
}

/// `Z^n_k` for all `k ≤ n`, computed from the height sequence alone.
pub fn reduced_counts_from_height(height: &HeightSeq, n: u32) -> ReducedCounts {
    ReducedCounts((0..=n).map(|k| excursion_count_above(height, k, n)).collect())
}

/// Names of the coding identities that fail for `t`: walk → tree → walk,
/// tree → height → tree, and contour from the height sequence against the
/// depth-first walk.
pub fn roundtrip_failures(t: &OrderedTree) -> Vec<&'static str> {
    let mut bad = Vec::new();
    let walk = t.lukasiewicz();
    match walk_to_forest(&walk) {
        Ok(f) if f.child_counts() == t.child_counts() && f.lukasiewicz() == walk => {}
        _ => bad.push("walk"),
    }
    let h = t.height();
    match OrderedTree::from_height(&h) {
        Ok(back) if &back == t => {}
        _ => bad.push("height"),
    }
    if contour_from_height(&h) != t.contour() {
        bad.push("contour");
    }
    bad
}
