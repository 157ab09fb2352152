//! Rescaled Galton-Watson experiments and exact discrete identities.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codings::{contour_visit_times, height_from_walk, occupation_counts, Forest, HeightSeq, LukasiewiczWalk};
use crate::csbp::CsbpKernel;
use crate::error::Result;
use crate::gw::{sample_generations, sample_tree_with_budget, OffspringDistribution, RescalingPlan};
use crate::report::{Check, ExperimentReport};
use crate::rng::{derive_seed, replicates};
use crate::stats::{erf, ks_statistic, ks_statistic_with_atoms, mean_se, ols_slope, quantile};

/// `H_n` of the forest coded by an i.i.d. `ν`-walk, computed on the fly.
pub fn forest_height_at<R: Rng + ?Sized>(d: &OffspringDistribution, n: u64, rng: &mut R) -> u32 {
    let mut stack: Vec<i64> = Vec::new();
    let mut v = 0i64;
    for k in 0..=n {
        while stack.last().is_some_and(|&top| top > v) {
            stack.pop();
        }
        if k == n {
            return stack.len() as u32;
        }
        stack.push(v);
        v += d.sample(rng) as i64 - 1;
    }
    unreachable!()
}

/// `H_0, …, H_{len−1}` of a forest of i.i.d. trees.
pub fn forest_height_prefix<R: Rng + ?Sized>(d: &OffspringDistribution, len: usize, rng: &mut R) -> HeightSeq {
    let mut v = Vec::with_capacity(len + 1);
    let mut cur = 0i64;
    v.push(0);
    for _ in 0..len {
        cur += d.sample(rng) as i64 - 1;
        v.push(cur);
    }
    height_from_walk(&LukasiewiczWalk(v))
}

/// Contour value at integer time `s` of the forest with height sequence `h`,
/// provided the sequence extends past the vertex visited at `s`.
pub fn contour_at(h: &HeightSeq, s: u64) -> Option<u32> {
    let k = contour_visit_times(h);
    // last n with K_n ≤ s
    let n = k.partition_point(|&kn| kn <= s).checked_sub(1)?;
    if n + 1 >= h.len() {
        return None;
    }
    let (kn, kn1) = (k[n] as i64, k[n + 1] as i64);
    let s = s as i64;
    let val = if s >= kn1 - 1 {
        h[n + 1] as i64 - (kn1 - s)
    } else {
        h[n] as i64 - (s - kn)
    };
    Some(val.max(0) as u32)
}

/// Cdf of `|N(0, 2t)|`.
pub fn half_normal_cdf(x: f64, t: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if t == 0.0 {
        1.0
    } else {
        erf(x / (2.0 * t.sqrt()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FellerParams {
    pub p: u64,
    pub t: f64,
    pub samples: usize,
    pub tolerance: f64,
    /// Scales for the trend check, in increasing order.
    pub trend_p: Vec<u64>,
    pub trend_samples: usize,
}

impl Default for FellerParams {
    fn default() -> Self {
        Self {
            p: 200,
            t: 1.0,
            samples: 10_000,
            tolerance: 0.05,
            trend_p: vec![5, 10, 20, 40],
            trend_samples: 100_000,
        }
    }
}

/// KS distance between `γ_p^{−1} H_{[pγ_p t]}` for geometric offspring and
/// the cdf of `|N(0, 2t)|`.
pub fn feller_ks(p: u64, t: f64, samples: usize, seed: u64) -> f64 {
    let d = OffspringDistribution::geometric_half();
    let gamma_p = p;
    let n = (p as f64 * gamma_p as f64 * t).floor() as u64;
    let xs = replicates(seed, samples, |_, rng| forest_height_at(&d, n, rng) as f64 / gamma_p as f64);
    if t == 0.0 {
        let atom = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
        let atom_left = |x: f64| if x > 0.0 { 1.0 } else { 0.0 };
        ks_statistic_with_atoms(&xs, atom, atom_left)
    } else {
        ks_statistic(&xs, |x| half_normal_cdf(x, t))
    }
}

pub fn feller_height_marginal(params: &FellerParams, seed: u64) -> ExperimentReport {
    let start = Instant::now();
    let mut r = ExperimentReport::new(
        "feller-height",
        "rescaled height H_[p^2 t]/p of a critical geometric forest converges to |N(0,2t)|",
        seed,
    )
    .param("params", params);
    let ks = feller_ks(params.p, params.t, params.samples, seed);
    r.stat("ks", ks);
    r.check(Check::new("ks_distance", ks, params.tolerance));

    if params.trend_p.len() >= 2 {
        let trend: Vec<f64> = params
            .trend_p
            .iter()
            .enumerate()
            .map(|(i, &p)| feller_ks(p, params.t, params.trend_samples, derive_seed(seed, i as u64 + 1)))
            .collect();
        for (p, ks) in params.trend_p.iter().zip(&trend) {
            r.stat(&format!("trend_ks_p{p}"), *ks);
        }
        let violations = trend.windows(2).filter(|w| w[1] >= w[0]).count();
        r.check(Check::exact("ks_decreases_with_p", violations));
    }
    r.timed(start)
}

/// Occupation counts of `H` before `T_p` equal the generation sizes of the
/// `p` trees, at every level. Returns the number of mismatching levels.
pub fn ray_knight_mismatches(forest: &Forest) -> usize {
    // Height from the walk and generation sizes from parent links are
    // computed along independent paths.
    let h = height_from_walk(&forest.lukasiewicz());
    let sizes = forest.generation_sizes();
    let top = h.iter().copied().max().map_or(0, |m| m as usize + 1);
    let levels = top.max(sizes.len());
    (0..levels)
        .filter(|&k| occupation_counts(&h, k as u32, h.len()) != sizes.get(k).copied().unwrap_or(0))
        .count()
}

/// A forest of `p` trees with at most `budget` vertices, redrawing larger
/// ones. Returns the forest and the number of redraws.
pub fn sample_forest_capped<R: Rng + ?Sized>(
    d: &OffspringDistribution,
    p: usize,
    budget: usize,
    rng: &mut R,
) -> Result<(Forest, usize)> {
    let mut redraws = 0;
    'outer: loop {
        let mut counts = Vec::new();
        for _ in 0..p {
            let remaining = budget.saturating_sub(counts.len());
            match sample_tree_with_budget(d, remaining, rng) {
                Ok(t) => counts.extend_from_slice(t.child_counts()),
                Err(crate::Error::NodeBudgetExceeded { .. }) => {
                    redraws += 1;
                    if redraws > 10_000 {
                        return Err(crate::Error::Infeasible(format!(
                            "forest of {p} trees keeps exceeding {budget} vertices"
                        )));
                    }
                    continue 'outer;
                }
                Err(e) => return Err(e),
            }
        }
        return Ok((Forest::from_child_counts(counts)?, redraws));
    }
}

pub fn discrete_ray_knight_identity(forest: &Forest) -> bool {
    ray_knight_mismatches(forest) == 0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RayKnightParams {
    pub p: u64,
    pub a: f64,
    pub lambda: f64,
    pub reps: usize,
    pub bias: f64,
    /// Forests for the exact occupation identity.
    pub identity_forests: usize,
    pub identity_p: usize,
    /// Forests larger than this are redrawn; the identity is deterministic,
    /// so the cap only bounds the cost of the heavy-tailed forest size.
    pub identity_budget: usize,
}

impl Default for RayKnightParams {
    fn default() -> Self {
        Self {
            p: 500,
            a: 1.0,
            lambda: 1.0,
            reps: 10_000,
            bias: 0.02,
            identity_forests: 1000,
            identity_p: 50,
            identity_budget: 1_000_000,
        }
    }
}

/// Monte Carlo `E[exp(−λ p^{−1} Y_{[γ_p a]})]` against `exp(−u_a(λ))`.
pub fn ray_knight_laplace(d: &OffspringDistribution, params: &RayKnightParams, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let plan = RescalingPlan::new(d, params.p)?;
    let n = plan.generation(params.a);
    let kernel = CsbpKernel::new(plan.mechanism.clone());
    let target = (-kernel.u(params.a, params.lambda)?).exp();
    let draws: Vec<Result<f64>> = replicates(seed, params.reps, |_, rng| {
        let y = sample_generations(d, params.p, n, rng)?;
        Ok((-params.lambda * y[n as usize] as f64 / params.p as f64).exp())
    });
    let draws: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
    let (mean, se) = mean_se(&draws);
    let mut r = ExperimentReport::new(
        "ray-knight",
        "generation sizes p^-1 Y_[gamma_p a] have Laplace transform exp(-u_a(lambda)) in the limit",
        seed,
    )
    .param("params", params)
    .param("offspring", d.kind())
    .param("gamma_p", plan.gamma_p)
    .param("generation", n);
    r.stat("estimate", mean);
    r.stat("standard_error", se);
    r.stat("target", target);
    let gap = (mean - target).abs();
    r.check(Check::new("laplace_gap", gap, 3.0 * se + params.bias));

    if params.identity_forests > 0 {
        let outcomes: Vec<Result<(usize, usize)>> =
            replicates(derive_seed(seed, 1), params.identity_forests, |_, rng| {
                let (f, redraws) = sample_forest_capped(d, params.identity_p, params.identity_budget, rng)?;
                Ok((ray_knight_mismatches(&f), redraws))
            });
        let outcomes: Vec<(usize, usize)> = outcomes.into_iter().collect::<Result<_>>()?;
        let mismatches: usize = outcomes.iter().map(|o| o.0).sum();
        let redraws: usize = outcomes.iter().map(|o| o.1).sum();
        r.stat("identity_redraws_over_budget", redraws as f64);
        r.check(Check::exact("occupation_equals_generation_size", mismatches));
    }
    Ok(r.timed(start))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtinctionParams {
    pub p: u64,
    pub a: f64,
    pub tolerance: f64,
    /// Large level at which both sides must be close to 1.
    pub far_level: f64,
    /// Larger scales at which the gap must keep shrinking.
    pub convergence_p: Vec<u64>,
}

impl Default for ExtinctionParams {
    fn default() -> Self {
        Self {
            p: 500,
            a: 1.0,
            tolerance: 5e-3,
            far_level: 50.0,
            convergence_p: vec![5_000, 50_000, 500_000],
        }
    }
}

/// `g_{[γ_p a]}(0)^p` against `exp(−v(a))`. Deterministic.
pub fn extinction_gap(d: &OffspringDistribution, p: u64, a: f64) -> Result<(f64, f64)> {
    let plan = RescalingPlan::new(d, p)?;
    let n = plan.generation(a);
    let g = d.gf_iterate(n, 0.0)?;
    let discrete = (p as f64 * g.ln()).exp();
    let v = CsbpKernel::new(plan.mechanism.clone()).v(a)?;
    Ok((discrete, (-v).exp()))
}

pub fn extinction_law(d: &OffspringDistribution, params: &ExtinctionParams) -> Result<ExperimentReport> {
    let start = Instant::now();
    let plan = RescalingPlan::new(d, params.p)?;
    let mut r = ExperimentReport::new(
        "extinction",
        "probability that p trees die out by generation [gamma_p a] converges to exp(-v(a))",
        0,
    )
    .param("params", params)
    .param("offspring", d.kind())
    .param("gamma_p", plan.gamma_p);
    if !plan.mechanism.grey_condition() {
        r.note("Grey condition fails for the limit mechanism; skipped");
        return Ok(r.timed(start));
    }
    let (discrete, limit) = extinction_gap(d, params.p, params.a)?;
    r.stat("discrete", discrete);
    r.stat("limit", limit);
    r.check(Check::new("gap", (discrete - limit).abs(), params.tolerance));
    let (far_d, far_l) = extinction_gap(d, params.p, params.far_level)?;
    r.stat("far_discrete", far_d);
    r.stat("far_limit", far_l);
    r.check(Check::new("far_level_gap", (far_d - far_l).abs(), params.tolerance));
    if !params.convergence_p.is_empty() {
        let mut gaps = vec![(discrete - limit).abs()];
        for &p in &params.convergence_p {
            let (dd, ll) = extinction_gap(d, p, params.a)?;
            r.stat(&format!("gap_p{p}"), (dd - ll).abs());
            gaps.push((dd - ll).abs());
        }
        let violations = gaps.windows(2).filter(|w| w[1] >= w[0]).count();
        r.check(Check::exact("gap_decreases_with_p", violations));
    }
    Ok(r.timed(start))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HolderParams {
    /// Path length `2^log2_len`.
    pub log2_len: u32,
    pub min_log2_lag: u32,
    pub max_log2_lag: u32,
    pub reps: usize,
    pub tolerance: f64,
}

impl Default for HolderParams {
    fn default() -> Self {
        Self {
            log2_len: 20,
            min_log2_lag: 4,
            max_log2_lag: 14,
            reps: 16,
            tolerance: 0.15,
        }
    }
}

/// `max_i |H_{i+ℓ} − H_i|`.
pub fn max_increment(h: &[u32], lag: usize) -> u32 {
    if lag >= h.len() {
        return 0;
    }
    h.iter()
        .zip(&h[lag..])
        .map(|(&a, &b)| a.abs_diff(b))
        .max()
        .unwrap_or(0)
}

/// Slope of mean `log max-increment` against `log lag`, or `None` when the
/// lag range leaves fewer than two points.
pub fn holder_estimate(d: &OffspringDistribution, params: &HolderParams, seed: u64) -> Option<f64> {
    let len = 1usize << params.log2_len;
    let lags: Vec<usize> = (params.min_log2_lag..=params.max_log2_lag)
        .map(|j| 1usize << j)
        .filter(|&l| l < len)
        .collect();
    if lags.len() < 2 {
        return None;
    }
    let logs: Vec<Vec<f64>> = replicates(seed, params.reps, |_, rng| {
        let h = forest_height_prefix(d, len, rng);
        lags.iter().map(|&l| (max_increment(&h, l).max(1) as f64).ln()).collect()
    });
    let mean_log: Vec<f64> = (0..lags.len())
        .map(|j| logs.iter().map(|row| row[j]).sum::<f64>() / logs.len() as f64)
        .collect();
    let x: Vec<f64> = lags.iter().map(|&l| (l as f64).ln()).collect();
    ols_slope(&x, &mean_log)
}

/// Hölder exponent `1 − 1/γ` of the limit height process.
pub fn holder_target(d: &OffspringDistribution) -> f64 {
    match d.kind() {
        crate::gw::OffspringKind::Stable { gamma } => 1.0 - 1.0 / gamma,
        _ => 0.5,
    }
}

pub fn holder_exponent_estimate(d: &OffspringDistribution, params: &HolderParams, seed: u64) -> ExperimentReport {
    let start = Instant::now();
    let target = holder_target(d);
    let mut r = ExperimentReport::new(
        "holder",
        "height process increments scale with exponent 1 - 1/gamma",
        seed,
    )
    .param("params", params)
    .param("offspring", d.kind());
    r.stat("target", target);
    match holder_estimate(d, params, seed) {
        Some(slope) => {
            r.stat("estimate", slope);
            r.check(Check::new("exponent_gap", (slope - target).abs(), params.tolerance));
        }
        None => r.note("lag range has fewer than two points; regression skipped"),
    }
    r.timed(start)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ContourGapParams {
    pub p_values: Vec<u64>,
    pub t: f64,
    pub samples: usize,
    pub quantile: f64,
}

impl Default for ContourGapParams {
    fn default() -> Self {
        Self {
            p_values: vec![50, 200, 800],
            t: 1.0,
            samples: 500,
            quantile: 0.99,
        }
    }
}

/// Samples of `|γ_p^{−1} C_{2pγ_p t} − γ_p^{−1} H_{[pγ_p t]}|` for geometric offspring.
pub fn contour_gap_samples(p: u64, t: f64, samples: usize, seed: u64) -> Vec<f64> {
    let d = OffspringDistribution::geometric_half();
    let gamma_p = p as f64;
    let n = (p as f64 * gamma_p * t).floor() as usize;
    let s = (2.0 * p as f64 * gamma_p * t).floor() as u64;
    replicates(seed, samples, |_, rng| {
        // K_m ≥ m, so vertices up to s + 1 cover contour time s.
        let h = forest_height_prefix(&d, s as usize + 2, rng);
        let c = contour_at(&h, s).expect("prefix long enough");
        (c as f64 - h[n] as f64).abs() / gamma_p
    })
}

pub fn contour_height_agreement(params: &ContourGapParams, seed: u64) -> ExperimentReport {
    let start = Instant::now();
    let mut r = ExperimentReport::new(
        "contour-gap",
        "rescaled contour at time 2p gamma_p t and height at index p gamma_p t converge together",
        seed,
    )
    .param("params", params);
    let qs: Vec<f64> = params
        .p_values
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let gaps = contour_gap_samples(p, params.t, params.samples, derive_seed(seed, i as u64));
            quantile(&gaps, params.quantile)
        })
        .collect();
    for (p, q) in params.p_values.iter().zip(&qs) {
        r.stat(&format!("quantile_p{p}"), *q);
    }
    let violations = if params.t == 0.0 {
        qs.iter().filter(|&&q| q != 0.0).count()
    } else {
        qs.windows(2).filter(|w| w[1] >= w[0]).count()
    };
    r.check(Check::exact("quantile_decreases_with_p", violations));
    r.timed(start)
}
