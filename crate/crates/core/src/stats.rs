//! Test statistics used by the experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Kolmogorov-Smirnov distance `sup_x |F_n(x) − F(x)|` against a continuous cdf.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    ks_statistic_with_atoms(samples, &cdf, &cdf)
}

/// KS distance against a cdf that may have atoms; `cdf_left(x)` is `F(x−)`.
///
/// Between consecutive distinct sample values `F_n` is constant, so the
/// supremum is attained at `F(x)` or `F(x−)` of some sample value.
pub fn ks_statistic_with_atoms<F, G>(samples: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return 0.0;
    }
    let mut x: Vec<f64> = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < x.len() {
        let v = x[i];
        let mut j = i;
        while j < x.len() && x[j] == v {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d.max((upto - cdf(v)).abs()).max((below - cdf_left(v)).abs());
        i = j;
    }
    d.min(1.0)
}

/// Asymptotic Kolmogorov p-value `P[√n D > √n d]`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lam = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lam < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lam * lam).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub stat: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of observed counts against expected counts with the
/// same total. Bins with zero expectation must be empty.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() {
        return Err(Error::domain("observed and expected have different lengths"));
    }
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            if o > 0.0 {
                return Err(Error::domain("observation in a bin with zero expectation"));
            }
            continue;
        }
        stat += (o - e) * (o - e) / e;
        bins += 1;
    }
    if bins < 2 {
        return Err(Error::domain("chi-square needs at least two bins"));
    }
    let dof = bins - 1;
    let p_value = if stat == 0.0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat)
    };
    Ok(ChiSquare { stat, dof, p_value })
}

/// Merges adjacent bins (in the given order) until every merged bin has
/// expectation at least `min_expected`, then applies [`chi_square`].
pub fn chi_square_pooled(observed: &[f64], expected: &[f64], min_expected: f64) -> Result<ChiSquare> {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(o), Some(e)) => {
                *o += o_acc;
                *e += e_acc;
            }
            _ => {
                obs.push(o_acc);
                exp.push(e_acc);
            }
        }
    }
    chi_square(&obs, &exp)
}

/// Two-sample chi-square homogeneity test on count vectors.
pub fn chi_square_two_sample(a: &[f64], b: &[f64]) -> Result<ChiSquare> {
    if a.len() != b.len() {
        return Err(Error::domain("count vectors have different lengths"));
    }
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let total = na + nb;
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = x + y;
        if col == 0.0 {
            continue;
        }
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
        bins += 1;
    }
    if bins < 2 {
        return Err(Error::domain("chi-square needs at least two bins"));
    }
    let dof = bins - 1;
    let p_value = if stat == 0.0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat)
    };
    Ok(ChiSquare { stat, dof, p_value })
}

/// Sample mean and its CLT standard error.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `max_λ |n^{-1} Σ e^{−λ X_i} − L(λ)|` over the grid.
pub fn laplace_gap<F: Fn(f64) -> f64>(samples: &[f64], lam_grid: &[f64], reference: F) -> f64 {
    lam_grid
        .iter()
        .map(|&lam| {
            let emp = samples.iter().map(|&x| (-lam * x).exp()).sum::<f64>() / samples.len() as f64;
            (emp - reference(lam)).abs()
        })
        .fold(0.0, f64::max)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    if x.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    x[lo] + (pos - lo as f64) * (x[hi] - x[lo])
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// `erf` from statrs.
pub fn erf(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}
