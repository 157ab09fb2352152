//! Finite-dimensional marginals of continuum trees: marked skeletons, the
//! Poisson-marked tree, stable skeleton probabilities and reduced trees.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::codings::{contour_from_height, reduced_counts_from_height, OrderedTree};
use crate::csbp::CsbpKernel;
use crate::error::{Error, Result};
use crate::gw::{
    sample_conditioned_height_truncated, sample_conditioned_size, sample_stable_tail, OffspringDistribution,
    RescalingPlan,
};
use crate::mechanism::BranchingMechanism;
use crate::numerics;
use crate::report::{Check, ExperimentReport};
use crate::rng::{derive_seed, replicates};
use crate::stats::{chi_square, ks_statistic, mean_se};

/// Skeleton with one lifetime per vertex, both in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedTree {
    pub skeleton: OrderedTree,
    pub lifetimes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MarkedTreeJson {
    skeleton: String,
    lifetimes: Vec<f64>,
}

impl Serialize for MarkedTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MarkedTreeJson {
            skeleton: self.skeleton.to_string(),
            lifetimes: self.lifetimes.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MarkedTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MarkedTreeJson::deserialize(d)?;
        let skeleton: OrderedTree = raw.skeleton.parse().map_err(serde::de::Error::custom)?;
        if raw.lifetimes.len() != skeleton.size() {
            return Err(serde::de::Error::custom("one lifetime per vertex expected"));
        }
        Ok(Self {
            skeleton,
            lifetimes: raw.lifetimes,
        })
    }
}

impl MarkedTree {
    pub fn leaves(&self) -> usize {
        self.skeleton.child_counts().iter().filter(|&&k| k == 0).count()
    }

    pub fn total_length(&self) -> f64 {
        self.lifetimes.iter().sum()
    }

    /// Every vertex has 0 or at least 2 children.
    pub fn has_no_unary_vertex(&self) -> bool {
        self.skeleton.child_counts().iter().all(|&k| k != 1)
    }
}

/// The marked tree spanned by the times `t_1 ≤ … ≤ t_p` of the function `e`
/// (values at integer times). The root lifetime is `min e` on `[t_1, t_p]`;
/// the times are split at every gap where that minimum is attained, so equal
/// minima produce one vertex with several children.
pub fn extract_marginal_tree(e: &[f64], times: &[usize]) -> Result<MarkedTree> {
    if times.is_empty() {
        return Err(Error::domain("at least one time is needed"));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("times must be nondecreasing"));
    }
    if *times.last().expect("nonempty") >= e.len() {
        return Err(Error::domain("time outside the excursion"));
    }
    // Minimum of e between consecutive times.
    let gaps: Vec<f64> = times
        .windows(2)
        .map(|w| e[w[0]..=w[1]].iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let mut counts = Vec::new();
    let mut lifetimes = Vec::new();
    build_marked(e, times, &gaps, 0.0, &mut counts, &mut lifetimes);
    Ok(MarkedTree {
        skeleton: OrderedTree::from_child_counts(counts)?,
        lifetimes,
    })
}

fn build_marked(e: &[f64], times: &[usize], gaps: &[f64], base: f64, counts: &mut Vec<u32>, lifetimes: &mut Vec<f64>) {
    if times.len() == 1 {
        counts.push(0);
        lifetimes.push(e[times[0]] - base);
        return;
    }
    let m = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let splits: Vec<usize> = gaps.iter().enumerate().filter(|(_, &g)| g == m).map(|(i, _)| i).collect();
    counts.push(splits.len() as u32 + 1);
    lifetimes.push(m - base);
    let mut start = 0;
    for &i in splits.iter().chain(std::iter::once(&(times.len() - 1))) {
        let end = i + 1;
        let sub_gaps = if end - start > 1 { &gaps[start..end - 1] } else { &gaps[0..0] };
        build_marked(e, &times[start..end], sub_gaps, m, counts, lifetimes);
        start = end;
    }
}

/// All ordered trees with `p` leaves and no vertex with exactly one child.
pub fn enumerate_tstar(p: usize) -> Vec<OrderedTree> {
    fn rec(p: usize, memo: &mut Vec<Option<Vec<Vec<u32>>>>) -> Vec<Vec<u32>> {
        if let Some(v) = &memo[p] {
            return v.clone();
        }
        let mut out = Vec::new();
        if p == 1 {
            out.push(vec![0]);
        } else {
            // Root with k ≥ 2 children: compositions of p into k positive parts.
            for k in 2..=p {
                for comp in compositions(p, k) {
                    let mut partial: Vec<Vec<u32>> = vec![vec![k as u32]];
                    for &part in &comp {
                        let subs = rec(part, memo);
                        partial = partial
                            .iter()
                            .flat_map(|pre| {
                                subs.iter().map(move |s| {
                                    let mut v = pre.clone();
                                    v.extend_from_slice(s);
                                    v
                                })
                            })
                            .collect();
                    }
                    out.extend(partial);
                }
            }
        }
        memo[p] = Some(out.clone());
        out
    }
    if p == 0 {
        return Vec::new();
    }
    let mut memo = vec![None; p + 1];
    rec(p, &mut memo)
        .into_iter()
        .map(|c| OrderedTree::from_child_counts(c).expect("valid by construction"))
        .collect()
}

fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 1..=n.saturating_sub(k - 1) {
        for mut rest in compositions(n - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn leaf_count(t: &OrderedTree) -> usize {
    t.child_counts().iter().filter(|&&k| k == 0).count()
}

/// Probability of the skeleton under the stable marginal law with `p` leaves:
/// `p!/Π k_v! · Π |(γ−1)(γ−2)⋯(γ−k_v+1)| / ((γ−1)(2γ−1)⋯((p−1)γ−1))`.
pub fn stable_skeleton_pmf(gamma: f64, skeleton: &OrderedTree) -> Result<f64> {
    if !(gamma > 1.0 && gamma <= 2.0) {
        return Err(Error::domain(format!("stable index {gamma} outside (1, 2]")));
    }
    if skeleton.child_counts().contains(&1) {
        return Err(Error::domain("skeleton has a vertex with one child"));
    }
    let p = leaf_count(skeleton);
    let internal = skeleton.child_counts().iter().filter(|&&k| k >= 2);
    let mut value = 1.0;
    for &k in internal.clone() {
        for j in 1..k {
            value *= (gamma - j as f64).abs();
        }
    }
    for j in 1..p {
        value /= j as f64 * gamma - 1.0;
    }
    // exact in f64 while p! < 2^53
    let multinomial = if p <= 18 {
        let fact = |n: usize| (1..=n).map(|j| j as f64).product::<f64>();
        fact(p) / internal.map(|&k| fact(k as usize)).product::<f64>()
    } else {
        (ln_gamma(p as f64 + 1.0) - internal.map(|&k| ln_gamma(k as f64 + 1.0)).sum::<f64>()).exp()
    };
    Ok(multinomial * value)
}

/// Conditional density of the lifetimes given a binary skeleton in the
/// quadratic case: `2^p (1·3⋯(2p−3)) S e^{−S²}` with `S = Σ h_v`.
pub fn quadratic_lifetime_density(skeleton: &OrderedTree, lifetimes: &[f64]) -> Result<f64> {
    let p = leaf_count(skeleton);
    if skeleton.size() != 2 * p - 1 || skeleton.child_counts().iter().any(|&k| k != 0 && k != 2) {
        return Err(Error::domain("skeleton is not binary"));
    }
    if lifetimes.len() != skeleton.size() || lifetimes.iter().any(|&h| h < 0.0) {
        return Err(Error::domain("need one nonnegative lifetime per vertex"));
    }
    let s: f64 = lifetimes.iter().sum();
    let odd: f64 = (1..p).map(|j| (2 * j - 1) as f64).product();
    Ok(2f64.powi(p as i32) * odd * s * (-s * s).exp())
}

/// Coefficients `q_k = (−1)^k ψ^{(k)}(x) x^{k−1}/k!`, `k ≥ 2`, of the power
/// series of `ψ((1−r)x)`; they sum to `θ(x) = ψ'(x) − ψ(x)/x`.
#[derive(Debug, Clone)]
pub struct SeriesCoefficients {
    /// Index `k`; entries 0 and 1 are zero.
    pub dense: Vec<f64>,
    /// `Σ_{k ≥ dense.len()} q_k` from the stable term (exact).
    pub stable_tail: f64,
    stable_gamma: Option<f64>,
}

const STABLE_SERIES_CUTOFF: usize = 4096;
const MAX_SERIES_LEN: usize = 1 << 24;

impl SeriesCoefficients {
    pub fn new(m: &BranchingMechanism, x: f64) -> Result<Self> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::domain(format!("series point must be positive, got {x}")));
        }
        let mut cutoff = 3usize;
        for a in m.atoms() {
            let y = x * a.r;
            cutoff = cutoff.max((y + 12.0 * y.sqrt() + 40.0).ceil() as usize);
        }
        let stable = m.stable_term().filter(|s| s.index < 2.0);
        if stable.is_some() {
            cutoff = cutoff.max(STABLE_SERIES_CUTOFF);
        }
        if cutoff > MAX_SERIES_LEN {
            return Err(Error::domain(format!(
                "offspring series at {x} needs {cutoff} terms, more than {MAX_SERIES_LEN}"
            )));
        }
        let mut dense = vec![0.0; cutoff + 1];
        dense[2] += m.beta() * x;
        for a in m.atoms() {
            let y = x * a.r;
            for (k, slot) in dense.iter_mut().enumerate().skip(2) {
                let ln_pois = -y + k as f64 * y.ln() - ln_gamma(k as f64 + 1.0);
                *slot += a.w / x * ln_pois.exp();
            }
        }
        let mut stable_tail = 0.0;
        if let Some(s) = stable {
            let g = s.index;
            let scale = s.c * x.powf(g - 1.0);
            let mut b = g * (g - 1.0) / 2.0;
            for (k, slot) in dense.iter_mut().enumerate().skip(2) {
                *slot += scale * b;
                b *= (k as f64 - g) / (k as f64 + 1.0);
            }
            // Σ_{k > K} b_k = γ · P[stable offspring > K]
            stable_tail = scale * g * crate::gw::stable_tail_mass(g, cutoff);
        } else if let Some(s) = m.stable_term() {
            // Index 2 is the quadratic term c λ².
            dense[2] += s.c * x;
        }
        Ok(Self {
            dense,
            stable_tail,
            stable_gamma: stable.map(|s| s.index),
        })
    }

    pub fn total(&self) -> f64 {
        self.dense.iter().sum::<f64>() + self.stable_tail
    }
}

/// A law on `{0, 2, 3, …}` with a dense table and an exact stable tail.
#[derive(Debug, Clone)]
pub struct SeriesLaw {
    pub pmf: Vec<f64>,
    pub tail_mass: f64,
    stable_gamma: Option<f64>,
    cumulative: Vec<f64>,
}

impl SeriesLaw {
    fn new(pmf: Vec<f64>, tail_mass: f64, stable_gamma: Option<f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = pmf
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        Self {
            pmf,
            tail_mass,
            stable_gamma,
            cumulative,
        }
    }

    pub fn total(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.tail_mass
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean_dense(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, &x)| k as f64 * x).sum()
    }

    /// Inverse-cdf draw; the tail beyond the table is drawn exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = self.cumulative.last().copied().unwrap_or(0.0) + self.tail_mass;
        let u: f64 = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        if k < self.pmf.len() {
            return k as u64;
        }
        match self.stable_gamma {
            Some(g) => sample_stable_tail(g, self.pmf.len() - 1, rng),
            None => (self.pmf.len() - 1) as u64,
        }
    }
}

/// Offspring law of the tree spanned by Poisson marks of intensity `λ`:
/// with `w = ψ^{−1}(λ)`, `P[0] = λ/(wψ'(w))`, `P[1] = 0` and
/// `P[k] = w^{k−1}|ψ^{(k)}(w)|/(k!ψ'(w))`.
pub fn poisson_offspring_pmf(m: &BranchingMechanism, lam: f64) -> Result<SeriesLaw> {
    if !(lam > 0.0) {
        return Err(Error::domain(format!("mark intensity must be positive, got {lam}")));
    }
    let w = m.psi_inverse(lam)?;
    let dpsi = m.psi_prime(w);
    let series = SeriesCoefficients::new(m, w)?;
    let mut pmf: Vec<f64> = series.dense.iter().map(|q| q / dpsi).collect();
    // ψ(w) = λ; evaluating at w keeps all entries on the same rounded point
    pmf[0] = m.psi(w) / (w * dpsi);
    Ok(SeriesLaw::new(pmf, series.stable_tail / dpsi, series.stable_gamma))
}

/// `E[r^ξ] = r + ψ((1−r)w)/(wψ'(w))` in closed form.
pub fn poisson_offspring_gf(m: &BranchingMechanism, lam: f64, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::domain(format!("generating function argument {r} outside [0, 1]")));
    }
    let w = m.psi_inverse(lam)?;
    Ok(r + m.psi((1.0 - r) * w) / (w * m.psi_prime(w)))
}

/// Exponential lifetime rate `ψ'(ψ^{−1}(λ))`.
pub fn poisson_lifetime_rate(m: &BranchingMechanism, lam: f64) -> Result<f64> {
    Ok(m.psi_prime(m.psi_inverse(lam)?))
}

/// Galton-Watson tree with offspring law [`poisson_offspring_pmf`] and
/// i.i.d. exponential lifetimes.
pub fn poisson_tree_sample<R: Rng + ?Sized>(
    m: &BranchingMechanism,
    lam: f64,
    budget: usize,
    rng: &mut R,
) -> Result<MarkedTree> {
    let law = poisson_offspring_pmf(m, lam)?;
    let exp = Exp::new(poisson_lifetime_rate(m, lam)?).map_err(|e| Error::domain(e.to_string()))?;
    let mut counts = Vec::new();
    let mut pending: i64 = 1;
    while pending > 0 {
        if counts.len() >= budget {
            return Err(Error::NodeBudgetExceeded { budget });
        }
        let k = law.sample(rng);
        counts.push(u32::try_from(k).map_err(|_| Error::NodeBudgetExceeded { budget })?);
        pending += k as i64 - 1;
    }
    let lifetimes = (0..counts.len()).map(|_| exp.sample(rng)).collect();
    Ok(MarkedTree {
        skeleton: OrderedTree::from_child_counts(counts)?,
        lifetimes,
    })
}

/// A lineage of the reduced tree from `start` to `end`; `children` is empty
/// when the lineage is still unbranched at the sampling level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedTreeNode {
    pub start: f64,
    pub end: f64,
    pub children: Vec<ReducedTreeNode>,
}

impl ReducedTreeNode {
    /// Lineages alive at the sampling level.
    pub fn leaves(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(Self::leaves).sum()
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(Self::node_count).sum::<usize>()
    }

    /// Branch levels strictly increase along every path.
    pub fn levels_increase(&self) -> bool {
        self.start < self.end
            && self.children.iter().all(|c| c.start == self.end && c.levels_increase())
            && (self.children.is_empty() || self.children.len() >= 2)
    }
}

/// Law of the reduced tree with horizon `T` under the excursion measure
/// conditioned on height at least `T`.
#[derive(Debug, Clone)]
pub struct ReducedTreeLaw {
    kernel: CsbpKernel,
    horizon: f64,
}

impl ReducedTreeLaw {
    pub fn new(kernel: CsbpKernel, horizon: f64) -> Result<Self> {
        if !kernel.mechanism().grey_condition() {
            return Err(Error::GreyConditionFails);
        }
        if !(horizon > 0.0) {
            return Err(Error::domain("horizon must be positive"));
        }
        Ok(Self { kernel, horizon })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `P[γ_T > t] = ψ̃(v(T))/ψ̃(v(T−t))`.
    pub fn branch_survival(&self, t: f64) -> Result<f64> {
        if !(0.0..self.horizon).contains(&t) {
            return Err(Error::domain(format!("level {t} outside [0, T)")));
        }
        let m = self.kernel.mechanism();
        Ok(m.psi_tilde(self.kernel.v(self.horizon)?) / m.psi_tilde(self.kernel.v(self.horizon - t)?))
    }

    /// Inverse of the branch-level survival function at `u ∈ (0, 1]`:
    /// `v(T−t)` solves `ψ̃(v(T−t)) = ψ̃(v(T))/u`, then `T − t = ∫_{v(T−t)}^∞ dx/ψ(x)`.
    pub fn branch_quantile(&self, u: f64) -> Result<f64> {
        let m = self.kernel.mechanism();
        let target = m.psi_tilde(self.kernel.v(self.horizon)?) / u;
        let y = psi_tilde_inverse(m, target)?;
        let remaining = self.kernel.tail_integral(y)?;
        Ok((self.horizon - remaining).clamp(0.0, self.horizon))
    }

    /// Offspring law at a branch point at level `t`, with `U = v(T−t)`:
    /// `P[k] = (−1)^k ψ^{(k)}(U) U^{k−1}/(k! θ(U))`.
    pub fn offspring_pmf(&self, t: f64) -> Result<SeriesLaw> {
        if !(0.0..self.horizon).contains(&t) {
            return Err(Error::domain(format!("level {t} outside [0, T)")));
        }
        let m = self.kernel.mechanism();
        let u = self.kernel.v(self.horizon - t)?;
        let theta = m.theta(u);
        if !(theta > 0.0) {
            return Err(Error::domain(format!("theta({u}) = {theta} is not positive")));
        }
        let series = SeriesCoefficients::new(m, u)?;
        let pmf = series.dense.iter().map(|q| q / theta).collect();
        Ok(SeriesLaw::new(pmf, series.stable_tail / theta, series.stable_gamma))
    }

    /// `N_(T)[exp(−λ Z^T_t)] = 1 − u_t((1−e^{−λ}) v(T−t))/v(T)`.
    pub fn marginal_laplace(&self, t: f64, lam: f64) -> Result<f64> {
        if !(0.0..self.horizon).contains(&t) {
            return Err(Error::domain(format!("level {t} outside [0, T)")));
        }
        let vt = self.kernel.v(self.horizon - t)?;
        let inner = -(-lam).exp_m1() * vt;
        Ok(1.0 - self.kernel.u(t, inner)? / self.kernel.v(self.horizon)?)
    }

    /// Reduced tree observed up to level `until < T`.
    pub fn sample<R: Rng + ?Sized>(&self, until: f64, budget: usize, rng: &mut R) -> Result<ReducedTreeNode> {
        if !(0.0..self.horizon).contains(&until) {
            return Err(Error::domain(format!("sampling level {until} outside [0, T)")));
        }
        let mut nodes = 0usize;
        self.sample_from(0.0, until, budget, &mut nodes, rng)
    }

    fn sample_from<R: Rng + ?Sized>(
        &self,
        start: f64,
        until: f64,
        budget: usize,
        nodes: &mut usize,
        rng: &mut R,
    ) -> Result<ReducedTreeNode> {
        *nodes += 1;
        if *nodes > budget {
            return Err(Error::NodeBudgetExceeded { budget });
        }
        // Subtrees are independent copies with the remaining horizon.
        let sub = ReducedTreeLaw {
            kernel: self.kernel.clone(),
            horizon: self.horizon - start,
        };
        let u: f64 = 1.0 - rng.random::<f64>();
        let branch = start + sub.branch_quantile(u)?;
        if branch >= until {
            return Ok(ReducedTreeNode {
                start,
                end: until,
                children: Vec::new(),
            });
        }
        let k = sub.offspring_pmf(branch - start)?.sample(rng);
        let mut children = Vec::with_capacity(k as usize);
        for _ in 0..k {
            children.push(self.sample_from(branch, until, budget, nodes, rng)?);
        }
        Ok(ReducedTreeNode {
            start,
            end: branch,
            children,
        })
    }
}

/// Solves `ψ(y)/y = target` for `y > 0`.
fn psi_tilde_inverse(m: &BranchingMechanism, target: f64) -> Result<f64> {
    if target <= m.alpha() {
        return Ok(0.0);
    }
    if m.is_pure_stable() {
        let s = m.stable_term().expect("stable");
        return Ok((target / s.c).powf(1.0 / (s.index - 1.0)));
    }
    let mut hi = 1.0;
    while m.psi_tilde(hi) < target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Solver("psi_tilde inverse bracket overflow".into()));
        }
    }
    let lo = 0.0;
    numerics::safeguarded_newton(
        |y| {
            let f = m.psi_tilde(y) - target;
            // d/dy ψ(y)/y = θ(y)/y
            let df = if y > 0.0 { m.theta(y) / y } else { m.beta() };
            (f, df)
        },
        lo,
        hi,
        1e-15,
        400,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StableMarginalParams {
    pub tree_size: usize,
    pub leaves: usize,
    pub reps: usize,
    pub significance: f64,
}

impl Default for StableMarginalParams {
    fn default() -> Self {
        Self {
            tree_size: 2000,
            leaves: 3,
            reps: 20_000,
            significance: 1e-3,
        }
    }
}

/// Skeleton of `p` uniformly chosen vertices of a size-conditioned tree.
/// Minima of the contour between visit times are the exact branch heights.
pub fn sample_vertex_marginal<R: Rng + ?Sized>(
    d: &OffspringDistribution,
    size: usize,
    p: usize,
    rng: &mut R,
) -> Result<MarkedTree> {
    let tree = sample_conditioned_size(d, size, rng)?;
    let contour: Vec<f64> = contour_from_height(&tree.height()).iter().map(|&c| c as f64).collect();
    // Uniform contour times: the contour of the mirrored tree is the
    // time-reversed contour, so left and right shapes stay exchangeable.
    let mut times: Vec<usize> = (0..p).map(|_| rng.random_range(0..contour.len())).collect();
    times.sort_unstable();
    extract_marginal_tree(&contour, &times)
}

/// Skeleton frequencies of uniformly sampled vertices of size-conditioned
/// geometric trees against the quadratic skeleton law.
pub fn stable_marginal_experiment(params: &StableMarginalParams, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let d = OffspringDistribution::geometric_half();
    let shapes = enumerate_tstar(params.leaves);
    let binary: Vec<&OrderedTree> = shapes
        .iter()
        .filter(|t| t.child_counts().iter().all(|&k| k == 0 || k == 2))
        .collect();
    let samples: Vec<Result<MarkedTree>> = replicates(seed, params.reps, |_, rng| {
        sample_vertex_marginal(&d, params.tree_size, params.leaves, rng)
    });
    let mut observed = vec![0.0; binary.len()];
    let mut other = 0usize;
    for s in samples {
        let s = s?;
        match binary.iter().position(|&b| *b == s.skeleton) {
            Some(i) => observed[i] += 1.0,
            None => other += 1,
        }
    }
    let probs: Vec<f64> = binary
        .iter()
        .map(|t| stable_skeleton_pmf(2.0, t))
        .collect::<Result<_>>()?;
    let n_binary: f64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * n_binary).collect();
    let chi = chi_square(&observed, &expected)?;
    let mut r = ExperimentReport::new(
        "stable-marginals",
        "binary skeleton shapes at p uniform contour times follow p!/(2^(p-1) (1*3*...*(2p-3)))",
        seed,
    )
    .param("params", params)
    .param("observed_binary", &observed)
    .param("expected_binary", &expected);
    r.stat("chi_square", chi.stat);
    r.stat("dof", chi.dof as f64);
    r.stat("p_value", chi.p_value);
    r.stat("non_binary_fraction", other as f64 / params.reps as f64);
    // pass iff p_value ≥ significance
    r.check(Check::new("one_minus_p_value", 1.0 - chi.p_value, 1.0 - params.significance));
    Ok(r.timed(start))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonTreeParams {
    pub lambdas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for PoissonTreeParams {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 1.0, 4.0],
            tolerance: 1e-10,
        }
    }
}

/// Mechanism families checked by the Poisson-tree experiment.
pub fn reference_mechanisms() -> Vec<(&'static str, BranchingMechanism)> {
    vec![
        ("quadratic", BranchingMechanism::quadratic(1.0).expect("valid")),
        ("stable_1.5", BranchingMechanism::stable(1.0, 1.5).expect("valid")),
        (
            "atomic",
            BranchingMechanism::new(
                0.2,
                0.1,
                vec![crate::mechanism::LevyAtom { r: 1.0, w: 2.0 }],
                None,
            )
            .expect("valid"),
        ),
    ]
}

pub fn poisson_tree_experiment(params: &PoissonTreeParams) -> Result<ExperimentReport> {
    poisson_tree_experiment_with(params, None)
}

/// As [`poisson_tree_experiment`], with one more mechanism in the families.
pub fn poisson_tree_experiment_with(
    params: &PoissonTreeParams,
    extra: Option<&BranchingMechanism>,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut r = ExperimentReport::new(
        "poisson-tree",
        "offspring law of the Poisson-marked tree: lambda/(w psi'(w)) at 0, w^(k-1)|psi^(k)(w)|/(k! psi'(w)) for k >= 2",
        0,
    )
    .param("params", params);
    let quad = poisson_offspring_pmf(&BranchingMechanism::quadratic(1.0)?, 1.0)?;
    let binary_gap = (0..quad.pmf.len())
        .map(|k| {
            let target = if k == 0 || k == 2 { 0.5 } else { 0.0 };
            (quad.prob(k) - target).abs()
        })
        .fold(quad.tail_mass, f64::max);
    r.check(Check::new("quadratic_is_critical_binary", binary_gap, 1e-15));
    let mut families = reference_mechanisms();
    if let Some(m) = extra {
        families.push(("configured", m.clone()));
    }
    for (name, m) in families {
        for &lam in &params.lambdas {
            let law = poisson_offspring_pmf(&m, lam)?;
            let gap = (law.total() - 1.0).abs();
            r.stat(&format!("sum_gap_{name}_lambda{lam}"), gap);
            r.check(Check::new(format!("normalization_{name}_lambda{lam}"), gap, params.tolerance));
            let gf_gap = [0.0, 0.3, 0.7, 0.95]
                .iter()
                .map(|&x| {
                    let series: f64 = law.pmf.iter().rev().fold(0.0, |acc, &p| acc * x + p);
                    (series - poisson_offspring_gf(&m, lam, x).unwrap_or(f64::NAN)).abs()
                })
                .fold(0.0, f64::max);
            r.check(Check::new(format!("gf_{name}_lambda{lam}"), gf_gap, params.tolerance));
        }
    }
    Ok(r.timed(start))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReducedExactParams {
    pub horizon: f64,
    pub t: f64,
    pub lambda: f64,
    pub branch_samples: usize,
    pub branch_ks_tolerance: f64,
    pub pmf_tolerance: f64,
    pub laplace_reps: usize,
    pub stable_gamma: f64,
}

impl Default for ReducedExactParams {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            t: 0.5,
            lambda: 1.0,
            branch_samples: 100_000,
            branch_ks_tolerance: 0.015,
            pmf_tolerance: 1e-10,
            laplace_reps: 20_000,
            stable_gamma: 1.5,
        }
    }
}

/// `γ(2−γ)(3−γ)⋯(k−1−γ)/k!`.
pub fn stable_reduced_offspring(gamma: f64, k: usize) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let mut v = gamma;
    for j in 2..k {
        v *= j as f64 - gamma;
    }
    for j in 2..=k {
        v /= j as f64;
    }
    v
}

pub fn reduced_exact_experiment(params: &ReducedExactParams, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut r = ExperimentReport::new(
        "reduced-exact",
        "reduced tree: stable branch level uniform on [0,T], stable offspring law, marginal Laplace transform",
        seed,
    )
    .param("params", params);
    let stable = ReducedTreeLaw::new(
        CsbpKernel::new(BranchingMechanism::stable(1.0, params.stable_gamma)?),
        params.horizon,
    )?;
    let branch: Vec<Result<f64>> = replicates(seed, params.branch_samples, |_, rng| {
        stable.branch_quantile(1.0 - rng.random::<f64>())
    });
    let branch: Vec<f64> = branch.into_iter().collect::<Result<_>>()?;
    let ks = ks_statistic(&branch, |x| (x / params.horizon).clamp(0.0, 1.0));
    r.stat("branch_ks", ks);
    r.check(Check::new("stable_branch_level_uniform", ks, params.branch_ks_tolerance));

    let law = stable.offspring_pmf(params.t)?;
    let pmf_gap = (0..=10)
        .map(|k| (law.prob(k) - stable_reduced_offspring(params.stable_gamma, k)).abs())
        .fold(0.0, f64::max);
    r.stat("stable_pmf_gap", pmf_gap);
    r.check(Check::new("stable_offspring_pmf", pmf_gap, params.pmf_tolerance));

    let quad = ReducedTreeLaw::new(CsbpKernel::new(BranchingMechanism::quadratic(1.0)?), params.horizon)?;
    let target = quad.marginal_laplace(params.t, params.lambda)?;
    let draws: Vec<Result<f64>> = replicates(derive_seed(seed, 1), params.laplace_reps, |_, rng| {
        let tree = quad.sample(params.t, 10_000_000, rng)?;
        Ok((-params.lambda * tree.leaves() as f64).exp())
    });
    let draws: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
    let (mean, se) = mean_se(&draws);
    r.stat("laplace_estimate", mean);
    r.stat("laplace_target", target);
    r.stat("laplace_se", se);
    r.check(Check::new("quadratic_marginal_laplace", (mean - target).abs(), 3.0 * se));
    Ok(r.timed(start))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReducedDiscreteParams {
    pub p: u64,
    pub horizon: f64,
    pub t: f64,
    pub lambda: f64,
    pub samples: usize,
    pub bias: f64,
}

impl Default for ReducedDiscreteParams {
    fn default() -> Self {
        Self {
            p: 200,
            horizon: 1.0,
            t: 0.5,
            lambda: 1.0,
            samples: 10_000,
            bias: 0.03,
        }
    }
}

/// Number of subtrees above generation `[γ_p t]` reaching generation
/// `[γ_p T]`, in trees conditioned to reach `[γ_p T]`, against the reduced
/// tree marginal of the limit mechanism.
pub fn discrete_reduced_crosscheck(
    d: &OffspringDistribution,
    params: &ReducedDiscreteParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let plan = RescalingPlan::new(d, params.p)?;
    let n = plan.generation(params.horizon) as u32;
    let k = plan.generation(params.t) as u32;
    let law = ReducedTreeLaw::new(CsbpKernel::new(plan.mechanism.clone()), params.horizon)?;
    let target = law.marginal_laplace(params.t, params.lambda)?;
    let draws: Vec<Result<f64>> = replicates(seed, params.samples, |_, rng| {
        let tree = sample_conditioned_height_truncated(d, n, rng)?;
        let z = reduced_counts_from_height(&tree.height(), n).0[k as usize];
        Ok((-params.lambda * z as f64).exp())
    });
    let draws: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
    let (mean, se) = mean_se(&draws);
    let mut r = ExperimentReport::new(
        "reduced-discrete",
        "number of excursions of H above [gamma_p t] hitting [gamma_p T] converges to the reduced tree marginal",
        seed,
    )
    .param("params", params)
    .param("offspring", d.kind())
    .param("gamma_p", plan.gamma_p);
    r.stat("estimate", mean);
    r.stat("standard_error", se);
    r.stat("target", target);
    r.check(Check::new("laplace_gap", (mean - target).abs(), 3.0 * se + params.bias));
    Ok(r.timed(start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_peaks() {
        let e = [0.0, 1.0, 2.0, 1.0, 2.0, 1.0, 0.0];
        let m = extract_marginal_tree(&e, &[2, 4]).unwrap();
        assert_eq!(m.skeleton.to_string(), "2,0,0");
        assert_eq!(m.lifetimes, vec![1.0, 1.0, 1.0]);
        let single = extract_marginal_tree(&e, &[4]).unwrap();
        assert_eq!(single.skeleton, OrderedTree::root_only());
        assert_eq!(single.lifetimes, vec![2.0]);
    }

    #[test]
    fn equal_valleys_group() {
        let e = [0.0, 2.0, 1.0, 2.0, 1.0, 2.0, 0.0];
        let m = extract_marginal_tree(&e, &[1, 3, 5]).unwrap();
        assert_eq!(m.skeleton.to_string(), "3,0,0,0");
        assert_eq!(m.lifetimes, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(extract_marginal_tree(&e, &[3, 1]).is_err());
        assert!(extract_marginal_tree(&e, &[9]).is_err());
    }

    #[test]
    fn tstar_counts() {
        // Little Schröder numbers: 1, 1, 3, 11, 45, 197
        let counts: Vec<usize> = (1..=6).map(|p| enumerate_tstar(p).len()).collect();
        assert_eq!(counts, vec![1, 1, 3, 11, 45, 197]);
    }

    #[test]
    fn skeleton_pmf_spot_values() {
        let cherry: OrderedTree = "2,0,0".parse().unwrap();
        assert!((stable_skeleton_pmf(1.3, &cherry).unwrap() - 1.0).abs() < 1e-15);
        let left: OrderedTree = "2,2,0,0,0".parse().unwrap();
        let right: OrderedTree = "2,0,2,0,0".parse().unwrap();
        let star: OrderedTree = "3,0,0,0".parse().unwrap();
        assert!((stable_skeleton_pmf(1.5, &left).unwrap() - 0.375).abs() < 1e-15);
        assert!((stable_skeleton_pmf(1.5, &right).unwrap() - 0.375).abs() < 1e-15);
        assert!((stable_skeleton_pmf(1.5, &star).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(stable_skeleton_pmf(2.0, &star).unwrap(), 0.0);
        assert!(stable_skeleton_pmf(1.5, &"1,0".parse().unwrap()).is_err());
    }

    #[test]
    fn quadratic_density_p1() {
        let root = OrderedTree::root_only();
        let h = 0.7f64;
        let d = quadratic_lifetime_density(&root, &[h]).unwrap();
        assert!((d - 2.0 * h * (-h * h).exp()).abs() < 1e-15);
        assert_eq!(quadratic_lifetime_density(&root, &[0.0]).unwrap(), 0.0);
        assert!(quadratic_lifetime_density(&"3,0,0,0".parse().unwrap(), &[1.0; 4]).is_err());
    }

    #[test]
    fn quadratic_poisson_pmf_is_binary() {
        let law = poisson_offspring_pmf(&BranchingMechanism::quadratic(1.0).unwrap(), 2.0).unwrap();
        assert!((law.prob(0) - 0.5).abs() < 1e-15);
        assert!((law.prob(2) - 0.5).abs() < 1e-15);
        assert_eq!(law.prob(1), 0.0);
        assert_eq!(law.prob(3), 0.0);
    }

    #[test]
    fn stable_reduced_spot_values() {
        assert!((stable_reduced_offspring(1.5, 2) - 0.75).abs() < 1e-15);
        assert!((stable_reduced_offspring(1.5, 3) - 0.125).abs() < 1e-15);
        assert!((stable_reduced_offspring(1.5, 4) - 0.046875).abs() < 1e-15);
    }

    #[test]
    fn reduced_marginal_small_t() {
        let law = ReducedTreeLaw::new(CsbpKernel::new(BranchingMechanism::quadratic(1.0).unwrap()), 1.0).unwrap();
        assert!((law.marginal_laplace(0.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!(law.marginal_laplace(1.0, 1.0).is_err());
        // Quadratic: Z is geometric with mean 1/(1 − t).
        let t = 0.5;
        let q = 1.0 - t;
        let x = (-1.0f64).exp();
        let oracle = q * x / (1.0 - (1.0 - q) * x);
        assert!((law.marginal_laplace(t, 1.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn marked_tree_json() {
        let m = MarkedTree {
            skeleton: "2,0,0".parse().unwrap(),
            lifetimes: vec![0.5, 1.0, 2.0],
        };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"skeleton":"2,0,0","lifetimes":[0.5,1.0,2.0]}"#);
        let back: MarkedTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<MarkedTree>(r#"{"skeleton":"2,0,0","lifetimes":[1.0]}"#).is_err());
    }
}
