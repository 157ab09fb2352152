//! Brute-force references shared by the integration tests.

#![allow(dead_code)]

use branchtree::codings::OrderedTree;

/// Every plane tree with `n` vertices, as child counts in lexicographic
/// order (a sequence is valid iff its walk first reaches −1 at step n).
pub fn all_trees(n: usize) -> Vec<OrderedTree> {
    fn rec(prefix: &mut Vec<u32>, pending: i64, n: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            if pending == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        let left = (n - prefix.len()) as i64;
        // pending - 1 + k more vertices must fit into the remaining slots
        for k in 0..=(left - pending) {
            if pending - 1 + k < 0 {
                continue;
            }
            if pending - 1 + k == 0 && prefix.len() + 1 < n {
                continue;
            }
            prefix.push(k as u32);
            rec(prefix, pending - 1 + k, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), 1, n, &mut out);
    out.into_iter()
        .map(|c| OrderedTree::from_child_counts(c).expect("valid by construction"))
        .collect()
}

pub fn catalan(n: u64) -> u64 {
    (0..n).fold(1u64, |c, i| c * 2 * (2 * i + 1) / (i + 2))
}

/// Children lists from child counts by an explicit recursive descent.
pub fn children_of(counts: &[u32]) -> Vec<Vec<usize>> {
    fn build(counts: &[u32], next: &mut usize, out: &mut Vec<Vec<usize>>) -> usize {
        let v = *next;
        *next += 1;
        out.push(Vec::new());
        for _ in 0..counts[v] {
            let c = build(counts, next, out);
            out[v].push(c);
        }
        v
    }
    let mut out = Vec::new();
    let mut next = 0;
    build(counts, &mut next, &mut out);
    out
}

pub fn depths(counts: &[u32]) -> Vec<u32> {
    let ch = children_of(counts);
    let mut d = vec![0u32; counts.len()];
    for v in 0..counts.len() {
        for &c in &ch[v] {
            d[c] = d[v] + 1;
        }
    }
    d
}

/// Contour by walking around the tree: down each edge, back up it.
pub fn contour_walk(counts: &[u32]) -> Vec<u32> {
    fn go(v: usize, depth: u32, ch: &[Vec<usize>], out: &mut Vec<u32>) {
        for &c in &ch[v] {
            out.push(depth + 1);
            go(c, depth + 1, ch, out);
            out.push(depth);
        }
    }
    let ch = children_of(counts);
    let mut out = vec![0];
    go(0, 0, &ch, &mut out);
    out
}

/// `Z^n_k` by checking every vertex for a generation-`n` descendant.
pub fn reduced_counts(counts: &[u32], n: u32) -> Vec<u64> {
    let ch = children_of(counts);
    let d = depths(counts);
    fn reaches(v: usize, n: u32, ch: &[Vec<usize>], d: &[u32]) -> bool {
        d[v] == n || ch[v].iter().any(|&c| reaches(c, n, ch, d))
    }
    let mut z = vec![0u64; n as usize + 1];
    for v in 0..counts.len() {
        if d[v] <= n && reaches(v, n, &ch, &d) {
            z[d[v] as usize] += 1;
        }
    }
    z
}

/// `Π μ(k_v)`.
pub fn tree_probability(counts: &[u32], pmf: impl Fn(usize) -> f64) -> f64 {
    counts.iter().map(|&k| pmf(k as usize)).product()
}

/// The tree with heights (0,1,2,2,3,3,2,1): root with children 1, 2;
/// vertex 1 with children 11, 12, 13; vertex 12 with children 121, 122.
pub fn figure_one() -> OrderedTree {
    OrderedTree::from_child_counts(vec![2, 3, 0, 2, 0, 0, 0, 0]).unwrap()
}
