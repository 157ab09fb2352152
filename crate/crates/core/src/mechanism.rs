//! Branching mechanisms
//!
//! A branching mechanism is the Laplace exponent of a spectrally positive
//! Lévy process,
//!
//! ```text
//! ψ(λ) = αλ + βλ² + Σᵢ wᵢ (e^{−λ rᵢ} − 1 + λ rᵢ) + c λ^γ
//! ```
//!
//! restricted here to a finite atomic Lévy measure plus an optional exact
//! stable term `c λ^γ` with `γ ∈ (1, 2)`. Every derivative is available in
//! closed form, which is what the reduced-tree and Poisson-tree offspring
//! laws need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Exact stable contribution `c λ^index` to ψ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableTerm {
    pub c: f64,
    pub index: f64,
}

/// One atom `w δ_r` of the Lévy measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyAtom {
    pub r: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingMechanism {
    alpha: f64,
    beta: f64,
    atoms: Vec<LevyAtom>,
    stable: Option<StableTerm>,
}

/// `e^{-x} - 1 + x` without cancellation for small `x`.
fn compensated_exp(x: f64) -> f64 {
    if x < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0)
    } else {
        (-x).exp_m1() + x
    }
}

/// Falling factorial `γ(γ−1)⋯(γ−k+1)`.
pub fn falling_factorial(gamma: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (gamma - j as f64))
}

impl BranchingMechanism {
    pub fn new(alpha: f64, beta: f64, atoms: Vec<LevyAtom>, stable: Option<StableTerm>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidMechanism(msg));
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return bad(format!("alpha must be a finite nonnegative number, got {alpha}"));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return bad(format!("beta must be a finite nonnegative number, got {beta}"));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.r > 0.0 && a.r.is_finite() && a.w > 0.0 && a.w.is_finite()) {
                return bad(format!("atom {i} needs r > 0 and w > 0, got r={} w={}", a.r, a.w));
            }
        }
        if let Some(s) = stable {
            if !(s.c > 0.0 && s.c.is_finite()) {
                return bad(format!("stable coefficient must be positive, got {}", s.c));
            }
            if !(s.index > 1.0 && s.index < 2.0) {
                return bad(format!("stable index must lie in (1, 2), got {}", s.index));
            }
        }
        if beta == 0.0 && atoms.is_empty() && stable.is_none() {
            return bad("mechanism is linear: need beta > 0, atoms or a stable term".into());
        }
        Ok(Self { alpha, beta, atoms, stable })
    }

    /// `ψ(λ) = βλ²`.
    pub fn quadratic(beta: f64) -> Result<Self> {
        Self::new(0.0, beta, Vec::new(), None)
    }

    /// `ψ(λ) = c λ^γ` for `γ ∈ (1, 2)`; `γ = 2` is mapped to the quadratic case.
    pub fn stable(c: f64, gamma: f64) -> Result<Self> {
        if gamma == 2.0 {
            return Self::quadratic(c);
        }
        Self::new(0.0, 0.0, Vec::new(), Some(StableTerm { c, index: gamma }))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn atoms(&self) -> &[LevyAtom] {
        &self.atoms
    }

    pub fn stable_term(&self) -> Option<StableTerm> {
        self.stable
    }

    /// True for `ψ(λ) = αλ + βλ²` with `β > 0`.
    pub fn is_drift_quadratic(&self) -> bool {
        self.beta > 0.0 && self.atoms.is_empty() && self.stable.is_none()
    }

    /// True for `ψ(λ) = c λ^γ` exactly.
    pub fn is_pure_stable(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0 && self.atoms.is_empty() && self.stable.is_some()
    }

    /// Evaluates ψ. `lam` must be nonnegative; see [`checked_psi`](Self::checked_psi).
    pub fn psi(&self, lam: f64) -> f64 {
        debug_assert!(lam >= 0.0, "psi evaluated at negative lambda {lam}");
        let mut v = self.alpha * lam + self.beta * lam * lam;
        for a in &self.atoms {
            v += a.w * compensated_exp(lam * a.r);
        }
        if let Some(s) = self.stable {
            v += s.c * lam.powf(s.index);
        }
        v
    }

    pub fn checked_psi(&self, lam: f64) -> Result<f64> {
        if !(lam >= 0.0) {
            return Err(Error::domain(format!("psi needs lambda >= 0, got {lam}")));
        }
        Ok(self.psi(lam))
    }

    /// `ψ'(λ)` for `λ ≥ 0`.
    pub fn psi_prime(&self, lam: f64) -> f64 {
        let mut v = self.alpha + 2.0 * self.beta * lam;
        for a in &self.atoms {
            v -= a.w * a.r * (-lam * a.r).exp_m1();
        }
        if let Some(s) = self.stable {
            if lam > 0.0 {
                v += s.c * s.index * lam.powf(s.index - 1.0);
            }
        }
        v
    }

    /// Closed-form `k`-th derivative of ψ.
    pub fn psi_deriv(&self, k: u32, lam: f64) -> Result<f64> {
        if k == 0 {
            return Err(Error::domain("derivative order must be at least 1"));
        }
        if !(lam >= 0.0) {
            return Err(Error::domain(format!("psi_deriv needs lambda >= 0, got {lam}")));
        }
        if k == 1 {
            return Ok(self.psi_prime(lam));
        }
        if self.stable.is_some() && lam == 0.0 {
            return Err(Error::domain("derivatives of order >= 2 of the stable term are singular at 0"));
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut v = if k == 2 { 2.0 * self.beta } else { 0.0 };
        for a in &self.atoms {
            v += sign * a.w * a.r.powi(k as i32) * (-lam * a.r).exp();
        }
        if let Some(s) = self.stable {
            v += s.c * falling_factorial(s.index, k) * lam.powf(s.index - k as f64);
        }
        Ok(v)
    }

    /// Unique `x ≥ 0` with `ψ(x) = y`.
    pub fn psi_inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::domain(format!("psi_inverse needs y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.psi(hi) < y {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Solver(format!("psi_inverse: no bracket for y={y}")));
            }
        }
        numerics::safeguarded_newton(|x| (self.psi(x) - y, self.psi_prime(x)), 0.0, hi, 1e-15, 500)
    }

    /// `ψ̃(λ) = ψ(λ)/λ`, with `ψ̃(0) = α`.
    pub fn psi_tilde(&self, lam: f64) -> f64 {
        if lam == 0.0 {
            self.alpha
        } else {
            self.psi(lam) / lam
        }
    }

    /// Difference quotient `(ψ(a) − ψ(b))/(a − b)`, equal to `ψ'(a)` on the diagonal.
    pub fn gamma_quotient(&self, a: f64, b: f64) -> f64 {
        if a == b {
            self.psi_prime(a)
        } else {
            (self.psi(a) - self.psi(b)) / (a - b)
        }
    }

    /// `θ(r) = ψ'(r) − ψ̃(r)`, nonnegative by convexity.
    pub fn theta(&self, r: f64) -> f64 {
        self.psi_prime(r) - self.psi_tilde(r)
    }

    /// Whether `∫_1^∞ du/ψ(u) < ∞`.
    ///
    /// Within this parametric family that holds exactly when ψ grows faster
    /// than linearly, i.e. a quadratic or stable term is present.
    pub fn grey_condition(&self) -> bool {
        self.beta > 0.0 || self.stable.is_some()
    }

    /// Whether `∫_1^∞ (∫_0^t ψ(u) du)^{−1/2} dt < ∞`; here equivalent to a
    /// growth exponent above one.
    pub fn sheu_condition(&self) -> bool {
        self.gamma_exponent() > 1.0
    }

    /// `sup{r ≥ 0 : λ^{−r} ψ(λ) → ∞}`.
    pub fn gamma_exponent(&self) -> f64 {
        if self.beta > 0.0 {
            2.0
        } else if let Some(s) = self.stable {
            s.index
        } else {
            1.0
        }
    }

    /// Term dominating ψ at infinity, as `(coefficient, exponent)`; `None`
    /// when ψ grows linearly.
    pub(crate) fn dominant_power(&self) -> Option<(f64, f64)> {
        if self.beta > 0.0 {
            Some((self.beta, 2.0))
        } else {
            self.stable.map(|s| (s.c, s.index))
        }
    }
}
