//! Branching random walks over Galton-Watson genealogies as a discrete
//! superprocess, with exit measures from intervals and deterministic
//! reference solvers for the limiting equations.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::csbp::CsbpKernel;
use crate::error::{Error, Result};
use crate::gw::{OffspringDistribution, RescalingPlan, DEFAULT_NODE_BUDGET};
use crate::mechanism::BranchingMechanism;
use crate::numerics::solve_tridiagonal;
use crate::report::{Check, ExperimentReport};
use crate::rng::{derive_seed, replicates};
use crate::stats::mean_se;

type StepFn = dyn Fn(f64, f64, &mut dyn RngCore) -> f64 + Send + Sync;

/// Spatial motion: displacement over a time step `h` from position `x`.
#[derive(Clone)]
pub enum SpatialKernel {
    /// `N(0, h)`.
    Gaussian,
    /// `±√h` with probability 1/2 each.
    Lattice,
    /// `(x, h, rng) -> displacement`.
    Custom(Arc<StepFn>),
}

impl fmt::Debug for SpatialKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl SpatialKernel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Lattice => "lattice",
            Self::Custom(_) => "custom",
        }
    }

    pub fn step<R: Rng>(&self, x: f64, h: f64, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * h.sqrt()
            }
            Self::Lattice => {
                if rng.random::<bool>() {
                    h.sqrt()
                } else {
                    -h.sqrt()
                }
            }
            Self::Custom(f) => f(x, h, rng),
        }
    }
}

/// Particles of one generation, each with mass `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSample {
    pub generation: u64,
    /// Rescaled time `generation / γ_p`.
    pub time: f64,
    pub weight: f64,
    pub positions: Vec<f64>,
}

impl MeasureSample {
    pub fn total_mass(&self) -> f64 {
        self.weight * self.positions.len() as f64
    }

    /// `⟨Z, f⟩`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.weight * self.positions.iter().map(|&x| f(x)).sum::<f64>()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().map(move |&x| (x, self.weight))
    }
}

/// Runs the walk generation by generation up to `[γ_p horizon]`, handing
/// each generation to `visit`. Only the current generation is kept.
#[allow(clippy::too_many_arguments)]
pub fn branching_walk_visit<R: Rng, V: FnMut(&MeasureSample)>(
    plan: &RescalingPlan,
    d: &OffspringDistribution,
    kernel: &SpatialKernel,
    x: f64,
    horizon: f64,
    budget: usize,
    rng: &mut R,
    mut visit: V,
) -> Result<()> {
    let last = plan.generation(horizon);
    let h = 1.0 / plan.gamma_p as f64;
    let mut cur = MeasureSample {
        generation: 0,
        time: 0.0,
        weight: 1.0 / plan.p as f64,
        positions: vec![x; plan.p as usize],
    };
    let mut used = cur.positions.len();
    visit(&cur);
    for gen in 1..=last {
        let mut next = Vec::with_capacity(cur.positions.len() + 16);
        for &y in &cur.positions {
            let k = d.sample(rng) as usize;
            used += k;
            if used > budget {
                return Err(Error::NodeBudgetExceeded { budget });
            }
            for _ in 0..k {
                next.push(y + kernel.step(y, h, rng));
            }
        }
        cur = MeasureSample {
            generation: gen,
            time: gen as f64 * h,
            weight: cur.weight,
            positions: next,
        };
        visit(&cur);
        if cur.positions.is_empty() {
            // later generations are empty too
            for g in gen + 1..=last {
                cur.generation = g;
                cur.time = g as f64 * h;
                visit(&cur);
            }
            break;
        }
    }
    Ok(())
}

/// All generations `0..=[γ_p horizon]` of the walk started from `p`
/// particles at `x`.
pub fn branching_walk<R: Rng>(
    plan: &RescalingPlan,
    d: &OffspringDistribution,
    kernel: &SpatialKernel,
    x: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<MeasureSample>> {
    let mut out = Vec::new();
    branching_walk_visit(plan, d, kernel, x, horizon, DEFAULT_NODE_BUDGET, rng, |m| out.push(m.clone()))?;
    Ok(out)
}

/// Only the last generation.
pub fn branching_walk_final<R: Rng>(
    plan: &RescalingPlan,
    d: &OffspringDistribution,
    kernel: &SpatialKernel,
    x: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<MeasureSample> {
    let mut out = None;
    branching_walk_visit(plan, d, kernel, x, horizon, DEFAULT_NODE_BUDGET, rng, |m| out = Some(m.clone()))?;
    Ok(out.expect("generation 0 is always visited"))
}

/// Average of `exp(−⟨Z, f⟩)` over independent samples.
pub fn laplace_functional<F: Fn(f64) -> f64>(samples: &[MeasureSample], f: F) -> f64 {
    samples.iter().map(|m| (-m.integrate(&f)).exp()).sum::<f64>() / samples.len() as f64
}

/// Points where tree-indexed paths first leave `(lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitMeasure {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
    pub positions: Vec<f64>,
}

impl ExitMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weight * self.positions.len() as f64
    }

    /// `⟨Z^D, g⟩` for boundary data `g_lo` below `lo` and `g_hi` above `hi`.
    pub fn integrate_boundary(&self, g_lo: f64, g_hi: f64) -> f64 {
        self.weight
            * self
                .positions
                .iter()
                .map(|&y| if y <= self.lo { g_lo } else { g_hi })
                .sum::<f64>()
    }

    /// `position,weight` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("position,weight\n");
        for &y in &self.positions {
            s.push_str(&format!("{y},{}\n", self.weight));
        }
        s
    }
}

/// Exit measure of the walk from `x ∈ (lo, hi)`: a particle that lands
/// outside the open interval is recorded with weight `1/p` and stopped.
#[allow(clippy::too_many_arguments)]
pub fn exit_measure<R: Rng>(
    plan: &RescalingPlan,
    d: &OffspringDistribution,
    kernel: &SpatialKernel,
    lo: f64,
    hi: f64,
    x: f64,
    budget: usize,
    rng: &mut R,
) -> Result<ExitMeasure> {
    if !(lo < x && x < hi) {
        return Err(Error::domain(format!("start {x} outside ({lo}, {hi})")));
    }
    let h = 1.0 / plan.gamma_p as f64;
    let mut inside = vec![x; plan.p as usize];
    let mut exits = Vec::new();
    let mut used = inside.len();
    while !inside.is_empty() {
        let mut next = Vec::with_capacity(inside.len() + 16);
        for &y in &inside {
            let k = d.sample(rng) as usize;
            used += k;
            if used > budget {
                return Err(Error::NodeBudgetExceeded { budget });
            }
            for _ in 0..k {
                let z = y + kernel.step(y, h, rng);
                if z <= lo || z >= hi {
                    exits.push(z);
                } else {
                    next.push(z);
                }
            }
        }
        inside = next;
    }
    Ok(ExitMeasure {
        lo,
        hi,
        weight: 1.0 / plan.p as f64,
        positions: exits,
    })
}

/// Values on the uniform grid `lo + i·dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub lo: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn hi(&self) -> f64 {
        self.lo + self.dx * (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.dx * i as f64
    }

    /// Cubic Lagrange interpolation on the four nearest nodes.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = ((x - self.lo) / self.dx).clamp(0.0, (n - 1) as f64);
        let i = s.round() as usize;
        if (s - i as f64).abs() < 1e-9 || n < 4 {
            return self.values[i.min(n - 1)];
        }
        let base = (s.floor() as usize).saturating_sub(1).min(n - 4);
        let mut v = 0.0;
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (s - (base + b) as f64) / (a as f64 - b as f64);
                }
            }
            v += w * self.values[base + a];
        }
        v
    }
}

/// `ψ` continued to negative arguments by its slope at 0, which keeps it
/// nondecreasing on the whole line.
fn psi_ext(m: &BranchingMechanism, u: f64) -> f64 {
    if u >= 0.0 {
        m.psi(u)
    } else {
        m.psi_prime(0.0) * u
    }
}

fn psi_prime_ext(m: &BranchingMechanism, u: f64) -> f64 {
    m.psi_prime(u.max(0.0))
}

/// `∂u/∂t = ½ ∂²u/∂y² − ψ(u)`, `u_0 = f`, on `[−half_width, half_width]`
/// with reflecting ends. Strang splitting: Crank-Nicolson diffusion (with
/// implicit Euler start-up steps) and RK4 reaction. The grid is halved in
/// space and time until successive solutions agree to `tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactionDiffusion {
    pub half_width: f64,
    pub dx: f64,
    pub dt: f64,
    pub tolerance: f64,
    pub max_refinements: u32,
}

impl Default for ReactionDiffusion {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            dx: 0.05,
            dt: 0.025,
            tolerance: 1e-6,
            max_refinements: 9,
        }
    }
}

/// Solver output with the change between the last two refinements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedSolution {
    pub grid: GridFunction,
    pub defect: f64,
    /// Defects of successive refinements, coarsest first.
    pub defects: Vec<f64>,
}

impl ReactionDiffusion {
    /// One solve on a fixed grid.
    pub fn solve_fixed<F: Fn(f64) -> f64>(
        &self,
        m: &BranchingMechanism,
        f: F,
        t: f64,
        dx: f64,
        dt: f64,
    ) -> GridFunction {
        let cells = (2.0 * self.half_width / dx).round() as usize;
        let lo = -self.half_width;
        let n = cells + 1;
        // average over the node's neighbourhood so jumps sitting on a node
        // take their midpoint value
        let mut u: Vec<f64> = (0..n)
            .map(|i| {
                let y = lo + dx * i as f64;
                0.5 * (f(y - 0.25 * dx) + f(y + 0.25 * dx))
            })
            .collect();
        if t > 0.0 {
            let mut dt = dt;
            let top = u.iter().copied().fold(0.0, f64::max);
            while dt * psi_prime_ext(m, top) > 1.0 {
                dt *= 0.5;
            }
            let steps = (t / dt).ceil() as usize;
            let dt = t / steps as f64;
            let startup = steps.min(2);
            for s in 0..steps {
                if s < startup {
                    for _ in 0..2 {
                        self.strang(m, &mut u, dx, 0.5 * dt, true);
                    }
                } else {
                    self.strang(m, &mut u, dx, dt, false);
                }
            }
        }
        GridFunction { lo, dx, values: u }
    }

    fn strang(&self, m: &BranchingMechanism, u: &mut [f64], dx: f64, dt: f64, implicit: bool) {
        react(m, u, 0.5 * dt);
        diffuse(u, dx, dt, implicit);
        react(m, u, 0.5 * dt);
    }

    /// Refines until the sup-norm change on the coarse nodes drops below
    /// the tolerance.
    pub fn solve<F: Fn(f64) -> f64>(&self, m: &BranchingMechanism, f: F, t: f64) -> Result<RefinedSolution> {
        let mut prev = self.solve_fixed(m, &f, t, self.dx, self.dt);
        let mut defects = Vec::new();
        for level in 1..=self.max_refinements {
            let scale = (1u64 << level) as f64;
            let cur = self.solve_fixed(m, &f, t, self.dx / scale, self.dt / scale);
            let stride = 1usize << level;
            let coarse = self.solve_fixed_len(self.dx);
            let defect = (0..coarse)
                .map(|i| {
                    let a = cur.values[i * stride];
                    let b = prev.values[i * (stride / 2)];
                    (a - b).abs()
                })
                .fold(0.0, f64::max);
            defects.push(defect);
            prev = cur;
            if defect < self.tolerance {
                return Ok(RefinedSolution {
                    grid: prev,
                    defect,
                    defects,
                });
            }
        }
        Err(Error::Solver(format!(
            "reaction-diffusion refinement did not reach {} (last change {:e})",
            self.tolerance,
            defects.last().copied().unwrap_or(f64::NAN)
        )))
    }

    fn solve_fixed_len(&self, dx: f64) -> usize {
        (2.0 * self.half_width / dx).round() as usize + 1
    }
}

fn react(m: &BranchingMechanism, u: &mut [f64], dt: f64) {
    let rate = |v: f64| -psi_ext(m, v);
    for v in u.iter_mut() {
        let k1 = rate(*v);
        let k2 = rate(*v + 0.5 * dt * k1);
        let k3 = rate(*v + 0.5 * dt * k2);
        let k4 = rate(*v + dt * k3);
        *v = (*v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0);
    }
}

/// One step of `u_t = ½ u_yy` with reflecting ends, Crank-Nicolson or
/// implicit Euler.
fn diffuse(u: &mut [f64], dx: f64, dt: f64, implicit: bool) {
    let n = u.len();
    if n < 2 {
        return;
    }
    let r = 0.5 * dt / (dx * dx);
    let theta = if implicit { 1.0 } else { 0.5 };
    let a = theta * r;
    let b = (1.0 - theta) * r;
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let left = if i == 0 { u[1] } else { u[i - 1] };
        let right = if i == n - 1 { u[n - 2] } else { u[i + 1] };
        rhs[i] = u[i] + b * (left - 2.0 * u[i] + right);
    }
    let mut lower = vec![-a; n];
    let mut upper = vec![-a; n];
    let diag = vec![1.0 + 2.0 * a; n];
    upper[0] = -2.0 * a;
    lower[n - 1] = -2.0 * a;
    solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
    u.copy_from_slice(&rhs);
}

/// Reference `u_t` for the Laplace functional `exp(−u_t(x))` of the
/// superprocess with Brownian motion and mechanism `m`.
pub fn solve_super2<F: Fn(f64) -> f64>(
    m: &BranchingMechanism,
    solver: &ReactionDiffusion,
    f: F,
    t: f64,
) -> Result<RefinedSolution> {
    solver.solve(m, f, t)
}

/// `½u″ = ψ(u)` on `(lo, hi)` with `u(lo) = g_lo`, `u(hi) = g_hi`.
#[derive(Debug, Clone)]
pub struct ExitProblem {
    pub mechanism: BranchingMechanism,
    pub lo: f64,
    pub hi: f64,
    pub g_lo: f64,
    pub g_hi: f64,
}

impl ExitProblem {
    pub fn new(mechanism: BranchingMechanism, lo: f64, hi: f64, g_lo: f64, g_hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::domain(format!("empty interval ({lo}, {hi})")));
        }
        if !(g_lo >= 0.0 && g_hi >= 0.0 && g_lo.is_finite() && g_hi.is_finite()) {
            return Err(Error::domain("boundary data must be finite and nonnegative"));
        }
        Ok(Self {
            mechanism,
            lo,
            hi,
            g_lo,
            g_hi,
        })
    }

    /// RK4 for `u' = w, w' = 2ψ(u)` from `lo` with slope `s`. Returns the
    /// path on `steps + 1` nodes, or the sign of `u` once it blows up.
    fn integrate(&self, s: f64, steps: usize) -> std::result::Result<Vec<f64>, f64> {
        let h = (self.hi - self.lo) / steps as f64;
        let acc = |u: f64| 2.0 * psi_ext(&self.mechanism, u);
        let (mut u, mut w) = (self.g_lo, s);
        let mut path = Vec::with_capacity(steps + 1);
        path.push(u);
        for _ in 0..steps {
            let (k1u, k1w) = (w, acc(u));
            let (k2u, k2w) = (w + 0.5 * h * k1w, acc(u + 0.5 * h * k1u));
            let (k3u, k3w) = (w + 0.5 * h * k2w, acc(u + 0.5 * h * k2u));
            let (k4u, k4w) = (w + h * k3w, acc(u + h * k3u));
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            if !(u.abs() < 1e12 && w.abs() < 1e15) {
                return Err(if u.is_nan() { w.signum() } else { u.signum() });
            }
            path.push(u);
        }
        Ok(path)
    }

    /// Endpoint value, `+∞` on blow-up upwards, `−∞` downwards.
    fn endpoint(&self, s: f64, steps: usize) -> f64 {
        match self.integrate(s, steps) {
            Ok(p) => *p.last().expect("nonempty"),
            Err(sign) => sign * f64::INFINITY,
        }
    }

    /// Shooting on the initial slope: the endpoint is nondecreasing in the
    /// slope, so bisection on a doubled bracket converges.
    pub fn shooting(&self, steps: usize) -> Result<GridFunction> {
        if steps == 0 {
            return Err(Error::domain("need at least one step"));
        }
        let target = self.g_hi;
        let mut lo = -1.0;
        let mut hi = 1.0;
        let mut tries = 0;
        while self.endpoint(lo, steps) > target {
            lo *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Error::Solver("shooting bracket: no slope undershoots".into()));
            }
        }
        tries = 0;
        while self.endpoint(hi, steps) < target {
            hi *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Error::Solver("shooting bracket: no slope overshoots".into()));
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.endpoint(mid, steps) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let values = self
            .integrate(s, steps)
            .map_err(|_| Error::Solver("shooting path blew up at the final slope".into()))?;
        Ok(GridFunction {
            lo: self.lo,
            dx: (self.hi - self.lo) / steps as f64,
            values,
        })
    }

    /// Numerov collocation `u_{i−1} − 2u_i + u_{i+1} = h²/12 (F_{i−1} +
    /// 10F_i + F_{i+1})`, `F = 2ψ(u)`, solved by Newton with a tridiagonal
    /// Jacobian.
    pub fn collocation(&self, cells: usize) -> Result<GridFunction> {
        if cells < 2 {
            return Err(Error::domain("need at least two cells"));
        }
        let h = (self.hi - self.lo) / cells as f64;
        let c = h * h / 12.0;
        let f = |u: f64| 2.0 * psi_ext(&self.mechanism, u);
        let df = |u: f64| 2.0 * psi_prime_ext(&self.mechanism, u);
        let mut u: Vec<f64> = (0..=cells)
            .map(|i| self.g_lo + (self.g_hi - self.g_lo) * i as f64 / cells as f64)
            .collect();
        let m = cells - 1;
        for _ in 0..100 {
            let mut rhs = vec![0.0; m];
            let mut lower = vec![0.0; m];
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            for j in 0..m {
                let i = j + 1;
                rhs[j] = -(u[i - 1] - 2.0 * u[i] + u[i + 1] - c * (f(u[i - 1]) + 10.0 * f(u[i]) + f(u[i + 1])));
                diag[j] = -2.0 - 10.0 * c * df(u[i]);
                lower[j] = 1.0 - c * df(u[i - 1]);
                upper[j] = 1.0 - c * df(u[i + 1]);
            }
            solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
            let mut step = 0.0f64;
            for j in 0..m {
                u[j + 1] += rhs[j];
                step = step.max(rhs[j].abs());
            }
            let scale = u.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
            if step <= 1e-14 * scale {
                return Ok(GridFunction {
                    lo: self.lo,
                    dx: h,
                    values: u,
                });
            }
        }
        Err(Error::Solver("collocation Newton iteration did not converge".into()))
    }
}

/// Both reference solutions on the same grid and their largest gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitSolution {
    pub shooting: GridFunction,
    pub collocation: GridFunction,
    pub max_gap: f64,
}

pub fn solve_exit_ode(problem: &ExitProblem, cells: usize) -> Result<ExitSolution> {
    let shooting = problem.shooting(cells)?;
    let collocation = problem.collocation(cells)?;
    let max_gap = shooting
        .values
        .iter()
        .zip(&collocation.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ExitSolution {
        shooting,
        collocation,
        max_gap,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SnakeLaplaceParams {
    pub p: u64,
    pub t: f64,
    pub lambda: f64,
    /// `f = λ·1_{[−w, w]}`.
    pub indicator_half_width: f64,
    pub x: f64,
    pub reps: usize,
    pub bias: f64,
    pub homogeneous_p: u64,
    pub homogeneous_t: f64,
    pub homogeneous_reps: usize,
    pub solver: ReactionDiffusion,
    /// Solver against the CSBP kernel for constant `f`.
    pub constant_tolerance: f64,
}

impl Default for SnakeLaplaceParams {
    fn default() -> Self {
        Self {
            p: 2000,
            t: 0.5,
            lambda: 1.0,
            indicator_half_width: 1.0,
            x: 0.0,
            reps: 200,
            bias: 0.02,
            homogeneous_p: 500,
            homogeneous_t: 1.0,
            homogeneous_reps: 1000,
            solver: ReactionDiffusion::default(),
            constant_tolerance: 1e-6,
        }
    }
}

pub fn snake_laplace_experiment(
    d: &OffspringDistribution,
    kernel: &SpatialKernel,
    params: &SnakeLaplaceParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut r = ExperimentReport::new(
        "snake-laplace",
        "E exp(-<Z_t,f>) of the branching walk converges to exp(-u_t(x)) with u_t + Pi(int psi(u)) = Pi f(xi_t)",
        seed,
    )
    .param("params", params)
    .param("offspring", d.kind())
    .param("kernel", kernel.name());
    r.note("convergence rate of the branching walk is not quantified; bias allowances are empirical");

    // constant test function: total mass only
    let plan = RescalingPlan::new(d, params.homogeneous_p)?;
    let lam = params.lambda;
    let draws: Vec<Result<f64>> = replicates(derive_seed(seed, 1), params.homogeneous_reps, |_, rng| {
        let z = branching_walk_final(&plan, d, kernel, params.x, params.homogeneous_t, rng)?;
        Ok((-lam * z.total_mass()).exp())
    });
    let draws: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
    let (mean, se) = mean_se(&draws);
    let n = plan.generation(params.homogeneous_t);
    let exact_discrete = (plan.p as f64 * d.gf_iterate(n, (-lam / plan.p as f64).exp())?.ln()).exp();
    let kernel_csbp = CsbpKernel::new(plan.mechanism.clone());
    let limit = (-kernel_csbp.u(params.homogeneous_t, lam)?).exp();
    r.stat("homogeneous_estimate", mean);
    r.stat("homogeneous_se", se);
    r.stat("homogeneous_discrete_exact", exact_discrete);
    r.stat("homogeneous_limit", limit);
    r.check(Check::new("homogeneous_vs_discrete", (mean - exact_discrete).abs(), 3.0 * se));
    r.check(Check::new("homogeneous_vs_limit", (mean - limit).abs(), 3.0 * se));

    let constant = solve_super2(&plan.mechanism, &params.solver, |_| lam, params.homogeneous_t)?;
    let u_const = kernel_csbp.u(params.homogeneous_t, lam)?;
    let const_gap = constant.grid.values.iter().map(|v| (v - u_const).abs()).fold(0.0, f64::max);
    r.stat("solver_constant_gap", const_gap);
    r.check(Check::new("solver_constant_f", const_gap, params.constant_tolerance));

    // indicator test function
    let plan = RescalingPlan::new(d, params.p)?;
    let w = params.indicator_half_width;
    let f = move |y: f64| if y.abs() <= w { lam } else { 0.0 };
    let draws: Vec<Result<f64>> = replicates(derive_seed(seed, 2), params.reps, |_, rng| {
        let z = branching_walk_final(&plan, d, kernel, params.x, params.t, rng)?;
        Ok((-z.integrate(f)).exp())
    });
    let draws: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
    let (mean, se) = mean_se(&draws);
    let sol = solve_super2(&plan.mechanism, &params.solver, f, params.t)?;
    let target = (-sol.grid.eval(params.x)).exp();
    r.stat("estimate", mean);
    r.stat("standard_error", se);
    r.stat("solver_u", sol.grid.eval(params.x));
    r.stat("solver_refinement_defect", sol.defect);
    r.stat("target", target);
    r.check(Check::new("laplace_gap", (mean - target).abs(), 3.0 * se + params.bias));
    r.check(Check::new("solver_refinement", sol.defect, params.solver.tolerance));
    Ok(r.timed(start))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SnakeExitParams {
    pub p: u64,
    /// Domain `(−half_width, half_width)`.
    pub half_width: f64,
    pub g_lo: f64,
    pub g_hi: f64,
    pub x: f64,
    pub reps: usize,
    pub bias: f64,
    pub cells: usize,
    pub solver_tolerance: f64,
}

impl Default for SnakeExitParams {
    fn default() -> Self {
        Self {
            p: 1000,
            half_width: 1.0,
            g_lo: 4.0,
            g_hi: 4.0,
            x: 0.0,
            reps: 400,
            bias: 0.03,
            cells: 4000,
            solver_tolerance: 1e-6,
        }
    }
}

pub fn snake_exit_experiment(
    d: &OffspringDistribution,
    kernel: &SpatialKernel,
    params: &SnakeExitParams,
    seed: u64,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let plan = RescalingPlan::new(d, params.p)?;
    let mut r = ExperimentReport::new(
        "snake-exit",
        "E exp(-<Z^D,g>) of the exit measure equals exp(-u(x)) with u'' /2 = psi(u) in D, u = g on the boundary",
        seed,
    )
    .param("params", params)
    .param("offspring", d.kind())
    .param("kernel", kernel.name());
    r.note("convergence rate of the branching walk is not quantified; bias allowances are empirical");
    let (lo, hi) = (-params.half_width, params.half_width);
    let problem = ExitProblem::new(plan.mechanism.clone(), lo, hi, params.g_lo, params.g_hi)?;
    let sol = solve_exit_ode(&problem, params.cells)?;
    let u = sol.shooting.eval(params.x);
    r.stat("u_shooting", u);
    r.stat("u_collocation", sol.collocation.eval(params.x));
    r.stat("solver_gap", sol.max_gap);
    r.check(Check::new("shooting_vs_collocation", sol.max_gap, params.solver_tolerance));
    if params.g_lo == params.g_hi {
        let asym = sol
            .shooting
            .values
            .iter()
            .zip(sol.shooting.values.iter().rev())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.stat("symmetry_defect", asym);
        r.check(Check::new("symmetric_solution", asym, params.solver_tolerance));
    }

    let draws: Vec<Result<f64>> = replicates(seed, params.reps, |_, rng| {
        let z = exit_measure(&plan, d, kernel, lo, hi, params.x, DEFAULT_NODE_BUDGET, rng)?;
        Ok((-z.integrate_boundary(params.g_lo, params.g_hi)).exp())
    });
    let draws: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
    let (mean, se) = mean_se(&draws);
    let target = (-u).exp();
    r.stat("estimate", mean);
    r.stat("standard_error", se);
    r.stat("target", target);
    r.check(Check::new("exit_functional_gap", (mean - target).abs(), 3.0 * se + params.bias));
    Ok(r.timed(start))
}
