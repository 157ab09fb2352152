//! Laplace functional of a ψ-continuous-state branching process.
//!
//! `u_t(λ)` is the unique solution of `u_t(λ) + ∫_0^t ψ(u_s(λ)) ds = λ`, i.e.
//! `∂u/∂t = −ψ(u)`, `u_0 = λ`. Rather than stepping that (possibly stiff)
//! ODE forward, it is obtained by inverting the monotone time integral
//! `∫_{u_t(λ)}^λ dv/ψ(v) = t`. The extinction function `v(t) = u_t(∞)` solves
//! `∫_{v(t)}^∞ du/ψ(u) = t`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;
use crate::numerics;

#[derive(Debug, Clone)]
pub struct CsbpKernel {
    mechanism: BranchingMechanism,
    quad_tol: f64,
    quadrature_only: bool,
}

/// Values reported by `csbp eval`.
#[derive(Debug, Clone, Serialize)]
pub struct CsbpEvaluation {
    pub t: f64,
    pub lambda: f64,
    pub u: f64,
    /// `None` when the Grey condition fails.
    pub v: Option<f64>,
    pub semigroup_defect: f64,
    pub derivative_defect: Option<f64>,
    pub integral_residual: f64,
}

impl CsbpKernel {
    pub fn new(mechanism: BranchingMechanism) -> Self {
        Self {
            mechanism,
            quad_tol: 1e-10,
            quadrature_only: false,
        }
    }

    pub fn with_tolerance(mut self, quad_tol: f64) -> Self {
        self.quad_tol = quad_tol;
        self
    }

    /// Disables the closed-form fast paths so every value goes through quadrature.
    pub fn quadrature_only(mut self) -> Self {
        self.quadrature_only = true;
        self
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mechanism
    }

    /// `∫_a^b du/ψ(u)` for `0 < a ≤ b < ∞`, integrated in `s = ln u`.
    fn reciprocal_integral(&self, a: f64, b: f64) -> Result<f64> {
        let m = &self.mechanism;
        numerics::integrate(
            |s: f64| {
                let x = s.exp();
                let p = m.psi(x);
                if p > 0.0 && p.is_finite() {
                    x / p
                } else {
                    0.0
                }
            },
            a.ln(),
            b.ln(),
            1e-300,
            self.quad_tol * 1e-2,
        )
    }

    /// `∫_x^∞ du/ψ(u)`; the far tail beyond a cut `U` uses the closed-form
    /// integral of the dominant power term.
    pub fn tail_integral(&self, x: f64) -> Result<f64> {
        let (coef, exponent) = self.mechanism.dominant_power().ok_or(Error::GreyConditionFails)?;
        let dominant = |u: f64| coef * u.powf(exponent);
        let mut cut = x.max(1.0);
        loop {
            let psi = self.mechanism.psi(cut);
            if (psi - dominant(cut)) / psi < 1e-14 || cut.ln() > 600.0 {
                break;
            }
            cut *= 10.0;
        }
        let far = cut.powf(1.0 - exponent) / (coef * (exponent - 1.0));
        Ok(self.reciprocal_integral(x, cut)? + far)
    }

    /// Solves `Φ(x) = target` for the decreasing function `Φ` whose increments
    /// are `Φ(a) − Φ(b) = ∫_a^b du/ψ(u)`, starting from a known `(x0, Φ(x0))`.
    fn invert_reciprocal_integral(&self, x0: f64, phi0: f64, target: f64, allow_up: bool) -> Result<f64> {
        // Bracket: phi(lo) >= target >= phi(hi), lo < hi.
        let (mut lo, mut phi_lo, mut hi, mut phi_hi);
        if phi0 >= target {
            if !allow_up && phi0 > target {
                return Err(Error::Solver("target below starting value".into()));
            }
            lo = x0;
            phi_lo = phi0;
            hi = x0;
            phi_hi = phi0;
            while phi_hi > target {
                let next = hi * 2.0;
                let phi_next = phi_hi - self.reciprocal_integral(hi, next)?;
                lo = hi;
                phi_lo = phi_hi;
                hi = next;
                phi_hi = phi_next;
            }
        } else {
            hi = x0;
            phi_hi = phi0;
            lo = x0;
            phi_lo = phi0;
            while phi_lo < target {
                let next = lo * 0.5;
                if next < 1e-300 {
                    return Ok(0.0);
                }
                let phi_next = phi_lo + self.reciprocal_integral(next, lo)?;
                hi = lo;
                phi_hi = phi_lo;
                lo = next;
                phi_lo = phi_next;
            }
        }
        if phi_lo == target {
            return Ok(lo);
        }
        if phi_hi == target {
            return Ok(hi);
        }
        // Newton in y = ln x, where dΦ/dy = −x/ψ(x); increments are integrated
        // from the current iterate.
        let (mut x, mut phi) = if target - phi_hi < phi_lo - target {
            (hi, phi_hi)
        } else {
            (lo, phi_lo)
        };
        for _ in 0..200 {
            let residual = phi - target;
            if residual > 0.0 {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
            let slope = -x / self.mechanism.psi(x);
            let mut y_next = x.ln() - residual / slope;
            if !(y_next > lo.ln() && y_next < hi.ln()) {
                y_next = 0.5 * (lo.ln() + hi.ln());
            }
            let x_next = y_next.exp();
            let step = (x_next / x).ln().abs();
            phi += self.reciprocal_integral(x_next, x)?;
            x = x_next;
            if step < 1e-14 || (hi / lo).ln() < 1e-14 {
                return Ok(x);
            }
        }
        Err(Error::Solver("CSBP inversion did not converge".into()))
    }

    /// `u_t(λ)`.
    pub fn u(&self, t: f64, lam: f64) -> Result<f64> {
        if !(t >= 0.0) || !(lam >= 0.0) {
            return Err(Error::domain(format!("u needs t >= 0 and lambda >= 0, got t={t} lambda={lam}")));
        }
        if t == 0.0 || lam == 0.0 {
            return Ok(lam);
        }
        if lam.is_infinite() {
            return self.v(t);
        }
        if !self.quadrature_only {
            if let Some(v) = self.closed_form_u(t, lam) {
                return Ok(v);
            }
        }
        self.invert_reciprocal_integral(lam, 0.0, t, false)
    }

    /// `v(t) = u_t(∞)`, finite iff the Grey condition holds.
    pub fn v(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("v needs t > 0, got {t}")));
        }
        if !self.mechanism.grey_condition() {
            return Err(Error::GreyConditionFails);
        }
        if !self.quadrature_only {
            if let Some(v) = self.closed_form_v(t) {
                return Ok(v);
            }
        }
        let phi1 = self.tail_integral(1.0)?;
        self.invert_reciprocal_integral(1.0, phi1, t, true)
    }

    fn closed_form_u(&self, t: f64, lam: f64) -> Option<f64> {
        let m = &self.mechanism;
        if m.is_drift_quadratic() {
            let (a, b) = (m.alpha(), m.beta());
            if a == 0.0 {
                return Some(lam / (1.0 + b * t * lam));
            }
            let decay = (-a * t).exp();
            return Some(a * lam * decay / (a - b * lam * (-a * t).exp_m1()));
        }
        if m.is_pure_stable() {
            let s = m.stable_term()?;
            let e = s.index - 1.0;
            return Some((lam.powf(-e) + s.c * e * t).powf(-1.0 / e));
        }
        None
    }

    fn closed_form_v(&self, t: f64) -> Option<f64> {
        let m = &self.mechanism;
        if m.is_drift_quadratic() {
            let (a, b) = (m.alpha(), m.beta());
            if a == 0.0 {
                return Some(1.0 / (b * t));
            }
            return Some(a / (b * (a * t).exp_m1()));
        }
        if m.is_pure_stable() {
            let s = m.stable_term()?;
            let e = s.index - 1.0;
            return Some((s.c * e * t).powf(-1.0 / e));
        }
        None
    }

    /// `|u_t(u_s(λ)) − u_{t+s}(λ)|`.
    pub fn semigroup_defect(&self, t: f64, s: f64, lam: f64) -> Result<f64> {
        let inner = self.u(s, lam)?;
        Ok((self.u(t, inner)? - self.u(t + s, lam)?).abs())
    }

    /// Compares a central finite difference of `λ ↦ u_t(λ)` (step `1e-5`)
    /// with `ψ(u_t(λ))/ψ(λ)`.
    pub fn derivative_defect(&self, t: f64, lam: f64) -> Result<f64> {
        let h = 1e-5;
        if !(lam > h) {
            return Err(Error::domain(format!("derivative check needs lambda > {h}, got {lam}")));
        }
        let fd = (self.u(t, lam + h)? - self.u(t, lam - h)?) / (2.0 * h);
        let m = &self.mechanism;
        let exact = m.psi(self.u(t, lam)?) / m.psi(lam);
        Ok((fd - exact).abs())
    }

    /// `|u_t(λ) + ∫_0^t ψ(u_s(λ)) ds − λ|`, with the time integral computed by
    /// quadrature over `s`.
    pub fn integral_equation_residual(&self, t: f64, lam: f64) -> Result<f64> {
        let ut = self.u(t, lam)?;
        let m = &self.mechanism;
        let failure = std::cell::Cell::new(None);
        let integral = numerics::integrate(
            |s| match self.u(s, lam) {
                Ok(us) => m.psi(us),
                Err(e) => {
                    failure.set(Some(e.to_string()));
                    0.0
                }
            },
            0.0,
            t,
            1e-13,
            1e-12,
        )?;
        if let Some(msg) = failure.take() {
            return Err(Error::Solver(msg));
        }
        Ok((ut + integral - lam).abs())
    }

    pub fn evaluate(&self, t: f64, lam: f64) -> Result<CsbpEvaluation> {
        let v = if t > 0.0 && self.mechanism.grey_condition() {
            Some(self.v(t)?)
        } else {
            None
        };
        let derivative_defect = if lam > 1e-5 {
            Some(self.derivative_defect(t, lam)?)
        } else {
            None
        };
        Ok(CsbpEvaluation {
            t,
            lambda: lam,
            u: self.u(t, lam)?,
            v,
            semigroup_defect: self.semigroup_defect(0.5 * t, 0.5 * t, lam)?,
            derivative_defect,
            integral_residual: self.integral_equation_residual(t, lam)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::LevyAtom;

    fn quadratic() -> CsbpKernel {
        CsbpKernel::new(BranchingMechanism::quadratic(1.0).unwrap())
    }

    fn stable() -> CsbpKernel {
        CsbpKernel::new(BranchingMechanism::stable(1.0, 1.5).unwrap())
    }

    #[test]
    fn initial_condition_and_zero() {
        for k in [quadratic(), stable(), quadratic().quadrature_only()] {
            assert_eq!(k.u(0.0, 3.0).unwrap(), 3.0);
            assert_eq!(k.u(2.0, 0.0).unwrap(), 0.0);
            assert_eq!(k.semigroup_defect(1.0, 1.0, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn quadrature_path_matches_quadratic_solution() {
        let k = quadratic().quadrature_only();
        let u = k.u(1.0, 2.0).unwrap();
        assert!((u - 2.0 / 3.0).abs() < 1e-9, "{u}");
        let v = k.v(1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn quadrature_path_matches_stable_solution() {
        let k = stable().quadrature_only();
        for (t, lam) in [(0.3f64, 2.0f64), (1.0, 0.5), (2.5, 10.0)] {
            let oracle = (lam.powf(-0.5) + 0.5 * t).powf(-2.0);
            assert!((k.u(t, lam).unwrap() - oracle).abs() < 1e-9);
        }
        let oracle_v = (0.5f64 * 2.0).powf(-2.0);
        assert!((k.v(2.0).unwrap() - oracle_v).abs() < 1e-9);
    }

    #[test]
    fn grey_failure_is_reported() {
        let m = BranchingMechanism::new(0.0, 0.0, vec![LevyAtom { r: 1.0, w: 1.0 }], None).unwrap();
        let k = CsbpKernel::new(m);
        assert!(matches!(k.v(1.0), Err(Error::GreyConditionFails)));
        // u is still well-defined.
        let u = k.u(1.0, 1.0).unwrap();
        assert!(u > 0.0 && u < 1.0);
    }

    #[test]
    fn composition_with_extinction_function() {
        for k in [quadratic(), stable(), quadratic().quadrature_only(), stable().quadrature_only()] {
            for t in [0.5, 1.0] {
                for r in [0.5, 1.0] {
                    let lhs = k.u(t, k.v(r).unwrap()).unwrap();
                    let rhs = k.v(t + r).unwrap();
                    assert!((lhs - rhs).abs() < 1e-9 * rhs.max(1.0), "{lhs} {rhs}");
                }
            }
        }
    }

    #[test]
    fn derivative_defect_examples() {
        assert!(quadratic().derivative_defect(1.0, 1.0).unwrap() < 1e-8);
        assert!(quadratic().derivative_defect(0.0, 1.0).unwrap() < 1e-8);
        assert!(stable().quadrature_only().derivative_defect(0.5, 2.0).unwrap() < 1e-5);
    }

    #[test]
    fn drift_quadratic_closed_form_agrees_with_quadrature() {
        let m = BranchingMechanism::new(0.4, 1.5, vec![], None).unwrap();
        let fast = CsbpKernel::new(m.clone());
        let slow = CsbpKernel::new(m).quadrature_only();
        for (t, lam) in [(0.2, 1.0), (1.0, 5.0), (3.0, 0.1)] {
            let a = fast.u(t, lam).unwrap();
            let b = slow.u(t, lam).unwrap();
            assert!((a - b).abs() < 1e-9 * a.max(1e-3), "{a} {b}");
        }
        let a = fast.v(0.7).unwrap();
        let b = slow.v(0.7).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn mixed_mechanism_u_approaches_v() {
        let m = BranchingMechanism::new(
            0.2,
            0.5,
            vec![LevyAtom { r: 1.0, w: 0.3 }],
            Some(crate::mechanism::StableTerm { c: 0.4, index: 1.3 }),
        )
        .unwrap();
        let k = CsbpKernel::new(m);
        let v = k.v(1.0).unwrap();
        let u = k.u(1.0, 1e6).unwrap();
        assert!(u <= v * (1.0 + 1e-12));
        assert!((u - v).abs() / v < 1e-3);
        assert!(k.integral_equation_residual(1.0, 2.0).unwrap() < 1e-8);
    }
}
