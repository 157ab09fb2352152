mod common;

use branchtree::codings::{contour_visit_times, Forest, OrderedTree};
use branchtree::gw::{OffspringDistribution, RescalingPlan};
use branchtree::rng::stream_rng;
use branchtree::scaling::*;
use common::*;

fn geometric() -> OffspringDistribution {
    OffspringDistribution::geometric_half()
}

fn stable() -> OffspringDistribution {
    OffspringDistribution::stable(1.5).unwrap()
}

#[test]
fn ray_knight_identity_examples() {
    let small = OrderedTree::from_labels(&[vec![], vec![1u32], vec![2]]).unwrap();
    assert_eq!(small.generation_sizes(), vec![1, 2]);
    assert!(discrete_ray_knight_identity(&small.as_forest()));
    assert!(discrete_ray_knight_identity(&figure_one().as_forest()));
    assert_eq!(figure_one().generation_sizes(), vec![1, 2, 3, 2]);
    for n in 1..=7 {
        let trees = all_trees(n);
        assert!(discrete_ray_knight_identity(&Forest::from_trees(&trees)));
    }
}

#[test]
fn ray_knight_identity_on_random_forests() {
    let mut rng = stream_rng(2, 0);
    for _ in 0..200 {
        let (f, _) = sample_forest_capped(&geometric(), 50, 1_000_000, &mut rng).unwrap();
        assert_eq!(ray_knight_mismatches(&f), 0);
        assert_eq!(f.num_trees(), 50);
    }
    let (f, _) = sample_forest_capped(&stable(), 20, 100_000, &mut rng).unwrap();
    assert!(f.size() <= 100_000);
    assert!(discrete_ray_knight_identity(&f));
}

#[test]
fn ray_knight_laplace_targets() {
    let g = geometric();
    let params = RayKnightParams {
        p: 100,
        reps: 2000,
        identity_forests: 20,
        ..Default::default()
    };
    let r = ray_knight_laplace(&g, &params, 3).unwrap();
    assert!((r.statistics["target"] - (-0.5f64).exp()).abs() < 1e-12);
    assert!(r.pass, "{}", r.summary());

    let zero = RayKnightParams {
        lambda: 0.0,
        reps: 100,
        identity_forests: 0,
        ..params
    };
    let r = ray_knight_laplace(&g, &zero, 3).unwrap();
    assert_eq!(r.statistics["target"], 1.0);
    assert_eq!(r.statistics["estimate"], 1.0);
}

#[test]
fn ray_knight_laplace_stable() {
    let s = stable();
    let params = RayKnightParams {
        p: 400,
        a: 0.5,
        lambda: 2.0,
        reps: 4000,
        identity_forests: 0,
        ..Default::default()
    };
    let r = ray_knight_laplace(&s, &params, 4).unwrap();
    // limit ψ(u) = u^{3/2}/1.5
    let c = 1.0 / 1.5;
    let u = (2f64.powf(-0.5) + 0.5 * c * 0.5).powf(-2.0);
    assert!((r.statistics["target"] - (-u).exp()).abs() < 1e-9);
    assert!(r.pass, "{}", r.summary());
}

#[test]
fn stable_limit_constant_from_tail_sums() {
    // p γ_p (g(1 − λ/p) − (1 − λ/p)) → ψ(λ) = c λ^γ
    let d = stable();
    let plan = RescalingPlan::new(&d, 10_000).unwrap();
    assert_eq!(plan.gamma_p, 100);
    let gp = plan.gamma_p as f64;
    let p = 10_000f64;
    for lam in [0.5, 1.0, 2.0] {
        let x = 1.0 - lam / p;
        let psi_p = p * gp * (d.gf(x).unwrap() - x);
        let limit = plan.mechanism.psi(lam);
        assert!((psi_p - limit).abs() < 1e-6 * limit.max(1.0), "{psi_p} vs {limit}");
    }
}

#[test]
fn extinction_examples() {
    let g = geometric();
    let (disc, lim) = extinction_gap(&g, 500, 1.0).unwrap();
    assert!((disc - (1.0 - 1.0 / 501.0f64).powi(500)).abs() < 1e-12);
    assert!((lim - (-1.0f64).exp()).abs() < 1e-12);
    assert!((disc - lim).abs() < 2e-3);
    for d in [geometric(), stable()] {
        let (disc, lim) = extinction_gap(&d, 500, 50.0).unwrap();
        assert!(disc > 0.9 && lim > 0.9);
        assert!((disc - lim).abs() < 5e-3);
    }
    // stable: v(1) = (c(γ−1))^{−2} = 9
    let (_, lim) = extinction_gap(&stable(), 500, 1.0).unwrap();
    assert!((lim - (-9.0f64).exp()).abs() < 1e-12);
    // deterministic
    assert_eq!(extinction_gap(&stable(), 777, 1.0).unwrap(), extinction_gap(&stable(), 777, 1.0).unwrap());
}

#[test]
fn extinction_gap_shrinks_with_p() {
    for d in [geometric(), stable()] {
        let gaps: Vec<f64> = [500u64, 5_000, 50_000]
            .iter()
            .map(|&p| {
                let (a, b) = extinction_gap(&d, p, 1.0).unwrap();
                (a - b).abs()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }
}

#[test]
fn feller_degenerate_time() {
    assert_eq!(feller_ks(50, 0.0, 200, 1), 0.0);
    assert_eq!(half_normal_cdf(-1.0, 1.0), 0.0);
    assert!((half_normal_cdf(2f64.sqrt() * 1.959963984540054, 1.0) - 0.95).abs() < 1e-9);
}

#[test]
fn holder_guard_for_degenerate_lags() {
    let params = HolderParams {
        log2_len: 6,
        min_log2_lag: 6,
        max_log2_lag: 8,
        reps: 2,
        ..Default::default()
    };
    assert!(holder_estimate(&geometric(), &params, 1).is_none());
    let r = holder_exponent_estimate(&geometric(), &params, 1);
    assert!(r.checks.is_empty());
    assert!(!r.notes.is_empty());
    assert_eq!(max_increment(&[0, 1, 2, 1], 4), 0);
    assert_eq!(max_increment(&[0, 1, 3, 1], 1), 2);
    assert_eq!(holder_target(&stable()), 1.0 - 1.0 / 1.5);
}

#[test]
fn contour_gap_examples() {
    assert!(contour_gap_samples(50, 0.0, 100, 1).iter().all(|&x| x == 0.0));
    // a deterministic tree: the contour reaches vertex n at K_n = 2n − H_n
    let t = figure_one();
    let h = t.height();
    let c = t.contour();
    let k = contour_visit_times(&h);
    for (n, &kn) in k.iter().enumerate() {
        assert_eq!(c[kn as usize], h[n]);
    }
    // contour_at needs the vertex after the one visited at s
    let last = *k.last().unwrap();
    for s in 0..last {
        assert_eq!(contour_at(&h, s), Some(c[s as usize]));
    }
    assert_eq!(contour_at(&h, last), None);
}

#[test]
fn forest_height_prefix_matches_sampled_forest_law() {
    // H_n of the infinite forest has the law of the height at index n
    let d = geometric();
    let mut rng = stream_rng(8, 0);
    let n = 30;
    let a: Vec<f64> = (0..20_000).map(|_| forest_height_at(&d, n, &mut rng) as f64).collect();
    let b: Vec<f64> = (0..20_000).map(|_| forest_height_prefix(&d, n as usize + 1, &mut rng)[n as usize] as f64).collect();
    let top = 12usize;
    let hist = |xs: &[f64]| {
        let mut h = vec![0.0; top + 1];
        for &x in xs {
            h[(x as usize).min(top)] += 1.0;
        }
        h
    };
    let p = branchtree::stats::chi_square_two_sample(&hist(&a), &hist(&b)).unwrap().p_value;
    assert!(p > 1e-3, "p-value {p}");
}
