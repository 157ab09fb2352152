//! Offspring distributions and Galton-Watson samplers.

use std::sync::Arc;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::codings::{Forest, OrderedTree};
use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;

/// Default cap on the number of vertices a single sample may create.
pub const DEFAULT_NODE_BUDGET: usize = 100_000_000;

/// Dense cutoff for the stable family; mass beyond it is sampled from the
/// exact tail.
const STABLE_CUTOFF: usize = 65_536;

const CUSTOM_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OffspringKind {
    /// `μ(k) = 2^{-(k+1)}`.
    Geometric,
    /// `g(r) = r + (1 − r)^γ / γ`.
    Stable { gamma: f64 },
    Custom,
}

#[derive(Debug)]
struct Sampler {
    alias: WeightedAliasIndex<f64>,
    /// Index of the tail bucket in the alias table, if any.
    tail_bucket: Option<usize>,
}

/// An offspring law `μ` on the nonnegative integers.
#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    kind: OffspringKind,
    /// `μ(0..=K)`.
    pmf: Vec<f64>,
    /// `Σ_{k > K} μ(k)`.
    tail_mass: f64,
    mean: f64,
    sampler: Option<Arc<Sampler>>,
}

impl OffspringDistribution {
    pub fn geometric_half() -> Self {
        let pmf: Vec<f64> = (0..64).map(|k| 0.5f64.powi(k + 1)).collect();
        Self {
            kind: OffspringKind::Geometric,
            tail_mass: 0.5f64.powi(64),
            pmf,
            mean: 1.0,
            sampler: None,
        }
    }

    /// `μ(0) = 1/γ`, `μ(1) = 0`, `μ(k) = |binom(γ, k)|/γ` for `k ≥ 2`.
    pub fn stable(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma <= 2.0) {
            return Err(Error::InvalidOffspring(format!("stable index {gamma} outside (1, 2]")));
        }
        let mut pmf = vec![0.0; STABLE_CUTOFF + 1];
        pmf[0] = 1.0 / gamma;
        let mut a = gamma * (gamma - 1.0) / 2.0;
        for (k, slot) in pmf.iter_mut().enumerate().skip(2) {
            *slot = a / gamma;
            a *= (k as f64 - gamma) / (k as f64 + 1.0);
        }
        let tail_mass = stable_tail_mass(gamma, STABLE_CUTOFF);
        if tail_mass == 0.0 {
            let last = pmf.iter().rposition(|&x| x > 0.0).unwrap_or(0);
            pmf.truncate(last + 1);
        }
        let mut d = Self {
            kind: OffspringKind::Stable { gamma },
            pmf,
            tail_mass,
            mean: 1.0,
            sampler: None,
        };
        d.build_sampler()?;
        Ok(d)
    }

    /// Arbitrary finitely supported pmf. Must sum to 1 within `1e-9` (it is
    /// then renormalized), have mean at most 1 and `μ(1) ≠ 1`.
    pub fn custom(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidOffspring("empty pmf".into()));
        }
        if let Some(k) = pmf.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidOffspring(format!("μ({k}) is not a finite nonnegative number")));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > CUSTOM_SUM_TOL {
            return Err(Error::InvalidOffspring(format!("pmf sums to {total}, not 1")));
        }
        let pmf: Vec<f64> = pmf.into_iter().map(|x| x / total).collect();
        let mean: f64 = pmf.iter().enumerate().map(|(k, &x)| k as f64 * x).sum();
        if mean > 1.0 + 1e-12 {
            return Err(Error::InvalidOffspring(format!("supercritical mean {mean}")));
        }
        if pmf.get(1).is_some_and(|&x| x >= 1.0 - 1e-15) {
            return Err(Error::InvalidOffspring("μ(1) = 1 gives a degenerate tree".into()));
        }
        let mut d = Self {
            kind: OffspringKind::Custom,
            pmf,
            tail_mass: 0.0,
            mean,
            sampler: None,
        };
        d.build_sampler()?;
        Ok(d)
    }

    /// Reads a pmf from CSV text: either one probability per line (row index
    /// is `k`) or `k,probability` pairs. A non-numeric first line is skipped.
    pub fn custom_from_csv(text: &str) -> Result<Self> {
        let mut pmf: Vec<f64> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if lineno == 0 => continue,
                Err(e) => return Err(Error::InvalidOffspring(format!("line {}: {e}", lineno + 1))),
            };
            match values.as_slice() {
                [p] => pmf.push(*p),
                [k, p] => {
                    if *k < 0.0 || k.fract() != 0.0 {
                        return Err(Error::InvalidOffspring(format!("line {}: bad index {k}", lineno + 1)));
                    }
                    let k = *k as usize;
                    if pmf.len() <= k {
                        pmf.resize(k + 1, 0.0);
                    }
                    pmf[k] += *p;
                }
                _ => {
                    return Err(Error::InvalidOffspring(format!(
                        "line {}: expected 1 or 2 columns",
                        lineno + 1
                    )))
                }
            }
        }
        Self::custom(pmf)
    }

    fn build_sampler(&mut self) -> Result<()> {
        let mut weights = self.pmf.clone();
        let tail_bucket = (self.tail_mass > 0.0).then(|| {
            weights.push(self.tail_mass);
            weights.len() - 1
        });
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidOffspring(format!("alias table: {e}")))?;
        self.sampler = Some(Arc::new(Sampler { alias, tail_bucket }));
        Ok(())
    }

    pub fn kind(&self) -> &OffspringKind {
        &self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `μ(k)`, computed exactly beyond the dense table for the stable family.
    pub fn pmf(&self, k: usize) -> f64 {
        if let Some(&x) = self.pmf.get(k) {
            return x;
        }
        match self.kind {
            OffspringKind::Geometric => 0.5f64.powf(k as f64 + 1.0),
            OffspringKind::Stable { gamma } if gamma < 2.0 => {
                // a_k = γ(γ − 1) Γ(k − γ) / (Γ(2 − γ) Γ(k + 1))
                let kf = k as f64;
                let ln_a = (gamma * (gamma - 1.0)).ln() + ln_gamma(kf - gamma)
                    - ln_gamma(2.0 - gamma)
                    - ln_gamma(kf + 1.0);
                ln_a.exp() / gamma
            }
            _ => 0.0,
        }
    }

    /// Dense part of the pmf.
    pub fn pmf_table(&self) -> &[f64] {
        &self.pmf
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Largest `k` with `μ(k) > 0`, or `None` for unbounded support.
    pub fn max_offspring(&self) -> Option<usize> {
        match self.kind {
            OffspringKind::Geometric => None,
            _ if self.tail_mass > 0.0 => None,
            _ => self.pmf.iter().rposition(|&x| x > 0.0),
        }
    }

    /// `Σ k² μ(k) − 1` for critical laws with finite variance.
    pub fn variance(&self) -> Option<f64> {
        match self.kind {
            OffspringKind::Geometric => Some(2.0),
            OffspringKind::Stable { gamma } if gamma < 2.0 => None,
            _ => {
                let m2: f64 = self.pmf.iter().enumerate().map(|(k, &x)| (k * k) as f64 * x).sum();
                Some(m2 - self.mean * self.mean)
            }
        }
    }

    /// Generating function `g(r) = Σ μ(k) r^k`.
    pub fn gf(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::domain(format!("generating function argument {r} outside [0, 1]")));
        }
        Ok(self.gf_unchecked(r))
    }

    fn gf_unchecked(&self, r: f64) -> f64 {
        match self.kind {
            OffspringKind::Geometric => 1.0 / (2.0 - r),
            OffspringKind::Stable { gamma } => r + (1.0 - r).powf(gamma) / gamma,
            OffspringKind::Custom => self.pmf.iter().rev().fold(0.0, |acc, &x| acc * r + x),
        }
    }

    /// `n`-fold composition `g_n(r)`; `g_n(0)` is the probability of
    /// extinction by generation `n`.
    pub fn gf_iterate(&self, n: u64, r: f64) -> Result<f64> {
        let mut x = r;
        self.gf(r)?;
        for _ in 0..n {
            x = self.gf_unchecked(x);
        }
        Ok(x)
    }

    /// `g(1 − x) − (1 − x)` summed from the pmf table (for checking the
    /// small-`x` behaviour that fixes the scaling limit).
    pub fn gf_defect_from_series(&self, x: f64) -> f64 {
        let r = 1.0 - x;
        let mut sum = 0.0;
        let mut comp = 0.0;
        let mut pow = 1.0;
        for (k, &m) in self.pmf.iter().enumerate() {
            let term = m * pow - if k == 1 { r } else { 0.0 };
            // Kahan summation
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            pow *= r;
        }
        if self.pmf.len() < 2 {
            sum -= r;
        }
        sum + self.tail_mass * pow
    }

    /// Draws one offspring count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match (&self.kind, &self.sampler) {
            (OffspringKind::Geometric, _) => {
                // Trailing zeros of uniform bits are Geometric(1/2).
                let mut extra = 0u64;
                loop {
                    let bits: u64 = rng.random();
                    if bits != 0 {
                        return extra + bits.trailing_zeros() as u64;
                    }
                    extra += 64;
                }
            }
            (OffspringKind::Stable { gamma }, Some(s)) => {
                let i = s.alias.sample(rng);
                if Some(i) == s.tail_bucket {
                    sample_stable_tail(*gamma, self.pmf.len() - 1, rng)
                } else {
                    i as u64
                }
            }
            (_, Some(s)) => s.alias.sample(rng) as u64,
            (_, None) => unreachable!("sampler is built at construction"),
        }
    }
}

/// `Σ_{k > K} μ(k) = ((γ − 1)/γ) Π_{j=2}^{K} (j − γ)/j` for `K ≥ 1`.
pub(crate) fn stable_tail_mass(gamma: f64, cutoff: usize) -> f64 {
    if cutoff == 0 {
        return 1.0 - 1.0 / gamma;
    }
    if gamma == 2.0 {
        return if cutoff >= 2 { 0.0 } else { 0.5 };
    }
    // ln Π_{j=2}^{K} (j − γ)/j = lnΓ(K + 1 − γ) − lnΓ(2 − γ) − lnΓ(K + 1)
    let k = cutoff as f64;
    let ln_ratio = ln_gamma(k + 1.0 - gamma) - ln_gamma(2.0 - gamma) - ln_gamma(k + 1.0);
    (gamma - 1.0) / gamma * ln_ratio.exp()
}

/// Exact draw from `μ` conditioned on `k > cutoff`: the smallest `k` with
/// `P[X > k | X > cutoff] ≤ U`, located by exponential search plus bisection.
pub(crate) fn sample_stable_tail<R: Rng + ?Sized>(gamma: f64, cutoff: usize, rng: &mut R) -> u64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let ln_u = u.ln();
    let kc = cutoff as f64;
    let base = ln_gamma(kc + 1.0) - ln_gamma(kc + 1.0 - gamma);
    let ln_survival = |k: u64| {
        let k = k as f64;
        ln_gamma(k + 1.0 - gamma) - ln_gamma(k + 1.0) + base
    };
    let mut lo = cutoff as u64;
    let mut hi = lo + 1;
    const MAX_K: u64 = 1 << 52;
    while ln_survival(hi) > ln_u && hi < MAX_K {
        lo = hi;
        hi = (hi * 2).min(MAX_K);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ln_survival(mid) > ln_u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Population scale `p` and generation scale `γ_p` for a critical law,
/// together with the branching mechanism of the scaling limit.
#[derive(Debug, Clone, Serialize)]
pub struct RescalingPlan {
    pub p: u64,
    pub gamma_p: u64,
    pub mechanism: BranchingMechanism,
}

impl RescalingPlan {
    /// `γ_p = ⌈p^{γ−1}⌉` with limit `ψ(u) = u^γ/γ` for the stable family,
    /// `γ_p = p` with `ψ(u) = σ²u²/2` for finite variance laws.
    pub fn new(d: &OffspringDistribution, p: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::domain("population scale p must be at least 1"));
        }
        if (d.mean() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidOffspring(format!(
                "rescaling needs a critical law, mean is {}",
                d.mean()
            )));
        }
        let (gamma_p, mechanism) = match d.kind() {
            OffspringKind::Stable { gamma } if *gamma < 2.0 => {
                let gp = (p as f64).powf(gamma - 1.0).ceil().max(1.0) as u64;
                (gp, BranchingMechanism::stable(1.0 / gamma, *gamma)?)
            }
            _ => {
                let var = d.variance().expect("finite variance");
                (p, BranchingMechanism::quadratic(var / 2.0)?)
            }
        };
        Ok(Self { p, gamma_p, mechanism })
    }

    /// Generation index `[γ_p a]`.
    pub fn generation(&self, a: f64) -> u64 {
        (self.gamma_p as f64 * a).floor() as u64
    }
}

struct DfsOutcome {
    child_counts: Vec<u32>,
    max_depth: u32,
}

fn checked_count(k: u64) -> Result<u32> {
    u32::try_from(k).map_err(|_| Error::NodeBudgetExceeded {
        budget: u32::MAX as usize,
    })
}

/// Depth-first expansion in lexicographic order. Vertices at generation
/// `truncate` are given no children.
fn sample_lex<R: Rng + ?Sized>(
    d: &OffspringDistribution,
    truncate: Option<u32>,
    budget: usize,
    rng: &mut R,
) -> Result<DfsOutcome> {
    let mut counts: Vec<u32> = Vec::new();
    // Remaining unexplored children of each vertex on the current path.
    let mut stack: Vec<u64> = Vec::new();
    let mut depth = 0u32;
    let mut max_depth = 0u32;
    loop {
        if counts.len() >= budget {
            return Err(Error::NodeBudgetExceeded { budget });
        }
        let k = if truncate == Some(depth) { 0 } else { d.sample(rng) };
        counts.push(checked_count(k)?);
        max_depth = max_depth.max(depth);
        if k > 0 {
            stack.push(k);
        }
        while stack.last() == Some(&0) {
            stack.pop();
        }
        match stack.last_mut() {
            None => break,
            Some(top) => {
                *top -= 1;
                depth = stack.len() as u32;
            }
        }
    }
    Ok(DfsOutcome {
        child_counts: counts,
        max_depth,
    })
}

/// One `Q_μ` tree by running the `ν`-walk until it first hits `−1`.
pub fn sample_tree<R: Rng + ?Sized>(d: &OffspringDistribution, rng: &mut R) -> Result<OrderedTree> {
    sample_tree_with_budget(d, DEFAULT_NODE_BUDGET, rng)
}

pub fn sample_tree_with_budget<R: Rng + ?Sized>(
    d: &OffspringDistribution,
    budget: usize,
    rng: &mut R,
) -> Result<OrderedTree> {
    let mut counts = Vec::new();
    let mut pending: i64 = 1;
    while pending > 0 {
        if counts.len() >= budget {
            return Err(Error::NodeBudgetExceeded { budget });
        }
        let k = d.sample(rng);
        counts.push(checked_count(k)?);
        pending += k as i64 - 1;
    }
    OrderedTree::from_child_counts(counts)
}

/// Size of a tree, or `None` once it exceeds `cap` vertices.
pub fn sample_size_capped<R: Rng + ?Sized>(d: &OffspringDistribution, cap: u64, rng: &mut R) -> Option<u64> {
    let mut pending: i64 = 1;
    let mut n = 0u64;
    while pending > 0 {
        if n >= cap {
            return None;
        }
        pending += d.sample(rng) as i64 - 1;
        n += 1;
    }
    Some(n)
}

/// One tree grown generation by generation, then relabelled in
/// lexicographic order. Same law as [`sample_tree`], independent code path.
pub fn sample_tree_by_generations<R: Rng + ?Sized>(
    d: &OffspringDistribution,
    budget: usize,
    rng: &mut R,
) -> Result<OrderedTree> {
    let mut generations: Vec<Vec<u32>> = Vec::new();
    let mut width = 1u64;
    let mut total = 0usize;
    while width > 0 {
        total += width as usize;
        if total > budget {
            return Err(Error::NodeBudgetExceeded { budget });
        }
        let gen: Vec<u32> = (0..width).map(|_| checked_count(d.sample(rng))).collect::<Result<_>>()?;
        width = gen.iter().map(|&k| k as u64).sum();
        generations.push(gen);
    }
    // First child index of every vertex within the next generation.
    let offsets: Vec<Vec<usize>> = generations
        .iter()
        .map(|g| {
            let mut acc = 0usize;
            g.iter()
                .map(|&k| {
                    let o = acc;
                    acc += k as usize;
                    o
                })
                .collect()
        })
        .collect();
    let mut counts = Vec::with_capacity(total);
    let mut stack = vec![(0usize, 0usize)];
    while let Some((g, i)) = stack.pop() {
        let k = generations[g][i];
        counts.push(k);
        let first = offsets[g][i];
        for j in (0..k as usize).rev() {
            stack.push((g + 1, first + j));
        }
    }
    OrderedTree::from_child_counts(counts)
}

/// `count` independent trees.
pub fn sample_forest<R: Rng + ?Sized>(d: &OffspringDistribution, count: usize, rng: &mut R) -> Result<Forest> {
    let mut counts = Vec::new();
    for _ in 0..count {
        let remaining = DEFAULT_NODE_BUDGET.saturating_sub(counts.len());
        let t = sample_tree_with_budget(d, remaining, rng)?;
        counts.extend_from_slice(t.child_counts());
    }
    Forest::from_child_counts(counts)
}

/// Generation sizes `Y_0 = p, Y_1, …, Y_n` of a forest of `p` trees.
pub fn sample_generations<R: Rng + ?Sized>(d: &OffspringDistribution, p: u64, n: u64, rng: &mut R) -> Result<Vec<u64>> {
    let mut y = Vec::with_capacity(n as usize + 1);
    y.push(p);
    let mut cur = p;
    for _ in 0..n {
        cur = if cur == 0 {
            0
        } else if matches!(d.kind(), OffspringKind::Geometric) {
            // A sum of `cur` Geometric(1/2) counts is negative binomial,
            // drawn as a gamma mixture of Poissons.
            let lam: f64 = Gamma::new(cur as f64, 1.0).expect("positive shape").sample(rng);
            if lam > 0.0 {
                Poisson::new(lam).expect("positive rate").sample(rng) as u64
            } else {
                0
            }
        } else {
            let mut s = 0u64;
            for _ in 0..cur {
                s = s.saturating_add(d.sample(rng));
            }
            s
        };
        if cur as usize > DEFAULT_NODE_BUDGET {
            return Err(Error::NodeBudgetExceeded {
                budget: DEFAULT_NODE_BUDGET,
            });
        }
        y.push(cur);
    }
    Ok(y)
}

fn warn_low_acceptance(d: &OffspringDistribution, n: u32) {
    if let Ok(ext) = d.gf_iterate(n as u64, 0.0) {
        let accept = 1.0 - ext;
        if accept < 1e-4 {
            log::warn!(
                "height conditioning at n = {n}: acceptance {accept:.3e}, about {:.0} retries per sample",
                1.0 / accept.max(f64::MIN_POSITIVE)
            );
        }
    }
}

/// Tree conditioned on reaching generation `n`, with every vertex at
/// generation `n` left childless. This is the exact conditional law of the
/// tree restricted to generations `0..=n`, at expected cost `O(n)` per try.
pub fn sample_conditioned_height_truncated<R: Rng + ?Sized>(
    d: &OffspringDistribution,
    n: u32,
    rng: &mut R,
) -> Result<OrderedTree> {
    warn_low_acceptance(d, n);
    loop {
        let out = sample_lex(d, Some(n), DEFAULT_NODE_BUDGET, rng)?;
        if out.max_depth >= n {
            return OrderedTree::from_child_counts(out.child_counts);
        }
    }
}

/// Rejection sampler for `Q_μ(· | height ≥ n)`. Rejection runs on the tree
/// truncated at generation `n`; the subtrees of accepted generation-`n`
/// vertices are then grown unconditionally.
pub fn sample_conditioned_height<R: Rng + ?Sized>(d: &OffspringDistribution, n: u32, rng: &mut R) -> Result<OrderedTree> {
    let truncated = sample_conditioned_height_truncated(d, n, rng)?;
    let depth = truncated.height();
    let mut counts = Vec::with_capacity(truncated.size());
    for (v, &k) in truncated.child_counts().iter().enumerate() {
        if depth[v] == n {
            let remaining = DEFAULT_NODE_BUDGET.saturating_sub(counts.len());
            let sub = sample_tree_with_budget(d, remaining, rng)?;
            counts.extend_from_slice(sub.child_counts());
        } else {
            counts.push(k);
        }
    }
    OrderedTree::from_child_counts(counts)
}

/// Rotation of increments summing to `−1` that first hits `−1` at the last
/// step: start right after the first index where the partial sums reach
/// their minimum.
pub fn cycle_lemma_rotation(child_counts: &[u32]) -> Result<Vec<u32>> {
    let n = child_counts.len();
    let total: i64 = child_counts.iter().map(|&k| k as i64 - 1).sum();
    if total != -1 {
        return Err(Error::domain(format!("increments sum to {total}, expected -1")));
    }
    let mut s = 0i64;
    let mut min = i64::MAX;
    let mut argmin = 0;
    for (i, &k) in child_counts.iter().enumerate() {
        s += k as i64 - 1;
        if s < min {
            min = s;
            argmin = i + 1;
        }
    }
    let start = argmin % n;
    Ok(child_counts[start..].iter().chain(&child_counts[..start]).copied().collect())
}

fn size_feasible(d: &OffspringDistribution, n: usize) -> bool {
    if d.pmf(0) <= 0.0 {
        return false;
    }
    if n == 1 {
        return true;
    }
    // n − 1 must be a sum of positive offspring counts.
    let target = n - 1;
    let support: Vec<usize> = (1..=target).filter(|&k| d.pmf(k) > 0.0).collect();
    let mut reach = vec![false; target + 1];
    reach[0] = true;
    for s in 1..=target {
        reach[s] = support.iter().any(|&k| k <= s && reach[s - k]);
    }
    reach[target]
}

/// Exact sampler for `Q_μ(· | #T = n)` via the cycle lemma.
pub fn sample_conditioned_size<R: Rng + ?Sized>(d: &OffspringDistribution, n: usize, rng: &mut R) -> Result<OrderedTree> {
    if n == 0 {
        return Err(Error::domain("tree size must be at least 1"));
    }
    if !size_feasible(d, n) {
        return Err(Error::Infeasible(format!("no tree of size {n} has positive probability")));
    }
    if matches!(d.kind(), OffspringKind::Geometric) {
        return uniform_plane_tree(n, rng);
    }
    const MAX_ATTEMPTS: usize = 10_000_000;
    let mut counts = vec![0u32; n];
    for _ in 0..MAX_ATTEMPTS {
        let mut sum: i64 = 0;
        let mut overflow = false;
        for c in counts.iter_mut() {
            let k = d.sample(rng);
            sum += k as i64 - 1;
            if sum >= n as i64 {
                overflow = true;
                break;
            }
            *c = k as u32;
        }
        if !overflow && sum == -1 {
            return OrderedTree::from_child_counts(cycle_lemma_rotation(&counts)?);
        }
    }
    Err(Error::Infeasible(format!(
        "size {n} not reached after {MAX_ATTEMPTS} attempts"
    )))
}

/// Geometric offspring gives every tree with `n` vertices probability
/// `2^{−(2n−1)}`, so the conditioned law is uniform: draw a uniform weak
/// composition of `n − 1` into `n` parts and rotate it.
pub fn uniform_plane_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<OrderedTree> {
    if n == 0 {
        return Err(Error::domain("tree size must be at least 1"));
    }
    if n == 1 {
        return Ok(OrderedTree::root_only());
    }
    let slots = 2 * n - 2;
    let mut bars: Vec<usize> = rand::seq::index::sample(rng, slots, n - 1).into_vec();
    bars.sort_unstable();
    let mut counts = Vec::with_capacity(n);
    let mut prev = 0usize;
    for (i, &b) in bars.iter().enumerate() {
        // stars before this bar, excluding earlier bars
        let stars = b - i;
        counts.push((stars - prev) as u32);
        prev = stars;
    }
    counts.push((n - 1 - prev) as u32);
    OrderedTree::from_child_counts(cycle_lemma_rotation(&counts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn geometric_values() {
        let d = OffspringDistribution::geometric_half();
        assert_eq!(d.pmf(0), 0.5);
        assert_eq!(d.pmf(2), 0.125);
        assert_eq!(d.mean(), 1.0);
        assert!((d.gf(0.3).unwrap() - 1.0 / 1.7).abs() < 1e-15);
        for n in 0..=100u64 {
            let g = d.gf_iterate(n, 0.0).unwrap();
            assert!((g - n as f64 / (n as f64 + 1.0)).abs() < 1e-13);
        }
        assert_eq!(d.gf_iterate(0, 0.25).unwrap(), 0.25);
        assert!(d.gf(1.5).is_err());
    }

    #[test]
    fn stable_values() {
        let d = OffspringDistribution::stable(1.5).unwrap();
        assert!((d.pmf(0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.pmf(1), 0.0);
        assert!((d.pmf(2) - 0.25).abs() < 1e-15);
        assert!((d.pmf(3) - 1.0 / 24.0).abs() < 1e-15);
        let total: f64 = d.pmf_table().iter().sum::<f64>() + d.tail_mass();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        // Beyond the table the exact pmf continues the recursion.
        let k = d.pmf_table().len();
        let ratio = d.pmf(k) / d.pmf(k - 1);
        assert!((ratio - (k as f64 - 1.0 - 1.5) / k as f64).abs() < 1e-6);

        let two = OffspringDistribution::stable(2.0).unwrap();
        assert_eq!(two.pmf_table(), &[0.5, 0.0, 0.5]);
        assert_eq!(two.tail_mass(), 0.0);
        assert!(OffspringDistribution::stable(1.0).is_err());
    }

    #[test]
    fn custom_validation() {
        assert!(OffspringDistribution::custom(vec![0.5, 0.6]).is_err());
        assert!(OffspringDistribution::custom(vec![0.2, 0.0, 0.0, 0.8]).is_err());
        assert!(OffspringDistribution::custom(vec![0.0, 1.0]).is_err());
        let d = OffspringDistribution::custom(vec![0.25, 0.5, 0.25]).unwrap();
        assert!((d.gf(0.5).unwrap() - 0.5625).abs() < 1e-15);
        let csv = OffspringDistribution::custom_from_csv("k,p\n0,0.5\n2,0.5\n").unwrap();
        assert_eq!(csv.pmf_table(), &[0.5, 0.0, 0.5]);
        assert!(OffspringDistribution::custom_from_csv("0.5\nfoo\n").is_err());
    }

    #[test]
    fn stable_tail_draws_exceed_cutoff() {
        let mut rng = stream_rng(3, 0);
        let k = sample_stable_tail(1.5, 100, &mut rng);
        assert!(k > 100);
    }

    #[test]
    fn cycle_lemma_gives_a_tree() {
        let r = cycle_lemma_rotation(&[0, 2, 0, 1]).unwrap();
        assert!(OrderedTree::from_child_counts(r).is_ok());
        assert!(cycle_lemma_rotation(&[1, 1]).is_err());
    }

    #[test]
    fn trivial_law_gives_root() {
        let d = OffspringDistribution::custom(vec![1.0]).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..10 {
            assert_eq!(sample_tree(&d, &mut rng).unwrap(), OrderedTree::root_only());
        }
    }

    #[test]
    fn budget_is_enforced() {
        let d = OffspringDistribution::geometric_half();
        let mut rng = stream_rng(5, 0);
        let mut hit = false;
        for _ in 0..200 {
            if let Err(Error::NodeBudgetExceeded { budget }) = sample_tree_with_budget(&d, 50, &mut rng) {
                assert_eq!(budget, 50);
                hit = true;
            }
        }
        assert!(hit);
    }

    #[test]
    fn size_conditioning_feasibility() {
        let binary = OffspringDistribution::custom(vec![0.5, 0.0, 0.5]).unwrap();
        let mut rng = stream_rng(2, 0);
        assert!(matches!(sample_conditioned_size(&binary, 4, &mut rng), Err(Error::Infeasible(_))));
        assert_eq!(sample_conditioned_size(&binary, 5, &mut rng).unwrap().size(), 5);
        assert_eq!(sample_conditioned_size(&binary, 1, &mut rng).unwrap(), OrderedTree::root_only());
    }

    #[test]
    fn rescaling_plans() {
        let g = RescalingPlan::new(&OffspringDistribution::geometric_half(), 200).unwrap();
        assert_eq!(g.gamma_p, 200);
        assert_eq!(g.mechanism.beta(), 1.0);
        let s = RescalingPlan::new(&OffspringDistribution::stable(1.5).unwrap(), 400).unwrap();
        assert_eq!(s.gamma_p, 20);
        assert!((s.mechanism.psi(2.0) - 2f64.powf(1.5) / 1.5).abs() < 1e-14);
        let sub = OffspringDistribution::custom(vec![0.6, 0.2, 0.2]).unwrap();
        assert!(RescalingPlan::new(&sub, 10).is_err());
    }

    #[test]
    fn stable_limit_constant_from_series() {
        for gamma in [1.2, 1.5, 1.8] {
            let d = OffspringDistribution::stable(gamma).unwrap();
            for x in [0.05, 0.02] {
                let c = d.gf_defect_from_series(x) / x.powf(gamma);
                assert!((c - 1.0 / gamma).abs() < 1e-9, "gamma {gamma} x {x}: {c}");
            }
        }
    }
}
