mod common;

use std::collections::HashMap;

use branchtree::codings::OrderedTree;
use branchtree::gw::*;
use branchtree::rng::{stream_rng, StreamRng};
use branchtree::stats::{chi_square, chi_square_pooled, chi_square_two_sample};
use common::*;

const ALPHA: f64 = 1e-3;

fn geometric() -> OffspringDistribution {
    OffspringDistribution::geometric_half()
}

fn stable() -> OffspringDistribution {
    OffspringDistribution::stable(1.5).unwrap()
}

#[test]
fn stable_pmf_values() {
    let d = stable();
    assert!((d.pmf(0) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(d.pmf(1), 0.0);
    assert!((d.pmf(2) - 0.25).abs() < 1e-15);
    assert!((d.pmf(3) - 1.0 / 24.0).abs() < 1e-15);
    // γ = 2 degenerates to critical binary branching
    let b = OffspringDistribution::stable(2.0).unwrap();
    assert!((b.pmf(0) - 0.5).abs() < 1e-15);
    assert!((b.pmf(2) - 0.5).abs() < 1e-15);
    assert!(b.pmf(3).abs() < 1e-15);
}

#[test]
fn pmfs_sum_to_one_and_are_critical() {
    for d in [geometric(), stable(), OffspringDistribution::stable(1.2).unwrap()] {
        let table: f64 = d.pmf_table().iter().sum();
        assert!((table + d.tail_mass() - 1.0).abs() < 1e-12);
        assert!((d.mean() - 1.0).abs() < 1e-9, "mean {}", d.mean());
    }
    assert!(OffspringDistribution::stable(1.0).is_err());
    assert!(OffspringDistribution::stable(2.5).is_err());
    assert!(OffspringDistribution::custom(vec![0.2, 0.5, 0.3]).is_err());
    assert!(OffspringDistribution::custom(vec![0.0, 1.0]).is_err());
}

#[test]
fn geometric_gf_iterates_closed_form() {
    let d = geometric();
    for n in [1u64, 2, 5, 10, 100, 1000] {
        let exact = n as f64 / (n as f64 + 1.0);
        assert!((d.gf_iterate(n, 0.0).unwrap() - exact).abs() < 1e-14, "n = {n}");
        for r in [0.1, 0.5, 0.9] {
            let nf = n as f64;
            let exact = (nf - (nf - 1.0) * r) / (nf + 1.0 - nf * r);
            assert!((d.gf_iterate(n, r).unwrap() - exact).abs() < 1e-13);
        }
    }
    assert_eq!(d.gf_iterate(0, 0.3).unwrap(), 0.3);
}

#[test]
fn stable_gf_closed_form_and_iterates() {
    let d = stable();
    for r in [0.0f64, 0.2, 0.7, 1.0] {
        let exact = r + (1.0 - r).powf(1.5) / 1.5;
        assert!((d.gf(r).unwrap() - exact).abs() < 1e-14);
    }
    let mut x = 0.0;
    for n in 1..=50u64 {
        x = x + (1.0f64 - x).powf(1.5) / 1.5;
        assert!((d.gf_iterate(n, 0.0).unwrap() - x).abs() < 1e-13);
    }
    assert!(d.gf(1.5).is_err());
}

fn shape_law(d: &OffspringDistribution, max_size: usize) -> (Vec<String>, Vec<f64>) {
    let mut keys = Vec::new();
    let mut probs = Vec::new();
    for n in 1..=max_size {
        for t in all_trees(n) {
            let p = tree_probability(t.child_counts(), |k| d.pmf(k));
            if p > 0.0 {
                keys.push(t.to_string());
                probs.push(p);
            }
        }
    }
    (keys, probs)
}

fn shape_chi_square(d: &OffspringDistribution, sampler: impl Fn(&mut StreamRng) -> Option<OrderedTree>, seed: u64) -> f64 {
    let (keys, probs) = shape_law(d, 6);
    let reps = 100_000;
    let mut rng = stream_rng(seed, 0);
    let mut counts: HashMap<String, f64> = HashMap::new();
    for _ in 0..reps {
        let key = match sampler(&mut rng) {
            Some(t) if t.size() <= 6 => t.to_string(),
            _ => "big".into(),
        };
        *counts.entry(key).or_default() += 1.0;
    }
    let mut obs: Vec<f64> = keys.iter().map(|k| counts.get(k).copied().unwrap_or(0.0)).collect();
    let mut exp: Vec<f64> = probs.iter().map(|p| p * reps as f64).collect();
    obs.push(counts.get("big").copied().unwrap_or(0.0));
    exp.push(reps as f64 * (1.0 - probs.iter().sum::<f64>()));
    chi_square_pooled(&obs, &exp, 5.0).unwrap().p_value
}

#[test]
fn walk_sampler_matches_enumeration() {
    for (i, d) in [geometric(), stable()].iter().enumerate() {
        let p = shape_chi_square(d, |rng| sample_tree_with_budget(d, 64, rng).ok(), 11 + i as u64);
        assert!(p > ALPHA, "p-value {p}");
    }
}

#[test]
fn generation_sampler_matches_enumeration() {
    for (i, d) in [geometric(), stable()].iter().enumerate() {
        let p = shape_chi_square(d, |rng| sample_tree_by_generations(d, 64, rng).ok(), 21 + i as u64);
        assert!(p > ALPHA, "p-value {p}");
    }
}

#[test]
fn size_conditioned_matches_enumeration() {
    for (i, d) in [geometric(), stable()].iter().enumerate() {
        let n = 5;
        let trees: Vec<OrderedTree> = all_trees(n)
            .into_iter()
            .filter(|t| tree_probability(t.child_counts(), |k| d.pmf(k)) > 0.0)
            .collect();
        let weights: Vec<f64> = trees.iter().map(|t| tree_probability(t.child_counts(), |k| d.pmf(k))).collect();
        let z: f64 = weights.iter().sum();
        if i == 0 {
            assert_eq!(trees.len(), 14);
        }
        let reps = 50_000;
        let mut rng = stream_rng(31 + i as u64, 0);
        let mut counts: HashMap<OrderedTree, f64> = HashMap::new();
        for _ in 0..reps {
            let t = sample_conditioned_size(d, n, &mut rng).unwrap();
            assert_eq!(t.size(), n);
            *counts.entry(t).or_default() += 1.0;
        }
        assert!(counts.keys().all(|t| trees.contains(t)));
        let obs: Vec<f64> = trees.iter().map(|t| counts.get(t).copied().unwrap_or(0.0)).collect();
        let exp: Vec<f64> = weights.iter().map(|w| w / z * reps as f64).collect();
        let p = chi_square(&obs, &exp).unwrap().p_value;
        assert!(p > ALPHA, "p-value {p}");
    }
}

#[test]
fn size_conditioning_rejects_impossible_sizes() {
    let binary = OffspringDistribution::stable(2.0).unwrap();
    let mut rng = stream_rng(1, 0);
    assert!(sample_conditioned_size(&binary, 4, &mut rng).is_err());
    assert_eq!(sample_conditioned_size(&binary, 5, &mut rng).unwrap().size(), 5);
    assert!(sample_conditioned_size(&binary, 0, &mut rng).is_err());
}

#[test]
fn cycle_lemma_gives_unique_valid_rotation() {
    for n in 1..=7 {
        for t in all_trees(n) {
            let c = t.child_counts().to_vec();
            for s in 0..n {
                let rotated: Vec<u32> = c[s..].iter().chain(&c[..s]).copied().collect();
                assert_eq!(cycle_lemma_rotation(&rotated).unwrap(), c);
            }
        }
    }
    assert!(cycle_lemma_rotation(&[1, 1]).is_err());
}

#[test]
fn height_conditioning_acceptance_is_one_over_eleven() {
    let d = geometric();
    let reps = 200_000;
    let mut rng = stream_rng(41, 0);
    let hits = (0..reps)
        .filter(|_| sample_generations(&d, 1, 10, &mut rng).unwrap()[10] > 0)
        .count() as f64;
    let p = 1.0 / 11.0;
    let z = (hits - reps as f64 * p) / (reps as f64 * p * (1.0 - p)).sqrt();
    assert!(z.abs() < 4.0, "z = {z}");
}

#[test]
fn height_conditioned_height_law() {
    // P(H ≥ m | H ≥ 10) = 11 / (m + 1) for geometric offspring
    let d = geometric();
    // conditioned trees have infinite mean size, keep reps modest
    let reps = 2_000;
    let mut rng = stream_rng(43, 0);
    let edges = [10u32, 12, 15, 20, 30, 60];
    let mut obs = vec![0.0; edges.len()];
    for _ in 0..reps {
        let h = sample_conditioned_height_truncated(&d, 10, &mut rng).unwrap().max_height();
        assert_eq!(h, 10);
        let full = loop {
            if let Ok(t) = sample_conditioned_height(&d, 10, &mut rng) {
                break t;
            }
        };
        let h = full.max_height();
        assert!(h >= 10);
        let bin = edges.iter().rposition(|&e| h >= e).unwrap();
        obs[bin] += 1.0;
    }
    let surv = |m: u32| 11.0 / (m as f64 + 1.0);
    let exp: Vec<f64> = (0..edges.len())
        .map(|i| {
            let hi = edges.get(i + 1).map(|&e| surv(e)).unwrap_or(0.0);
            (surv(edges[i]) - hi) * reps as f64
        })
        .collect();
    let p = chi_square(&obs, &exp).unwrap().p_value;
    assert!(p > ALPHA, "p-value {p}");
}

#[test]
fn tree_size_equals_walk_hitting_time_in_law() {
    let d = stable();
    let mut rng = stream_rng(47, 0);
    let reps = 50_000;
    let bins = |n: Option<u64>| match n {
        Some(1) => 0,
        Some(3) => 1,
        Some(4) => 2,
        Some(k) if k < 10 => 3,
        Some(k) if k < 100 => 4,
        Some(_) => 5,
        None => 6,
    };
    let mut a = vec![0.0; 7];
    let mut b = vec![0.0; 7];
    let cap = 10_000;
    for _ in 0..reps {
        let size = sample_tree_by_generations(&d, cap as usize, &mut rng).ok().map(|t| t.size() as u64);
        a[bins(size)] += 1.0;
        // hitting time of −1 for the walk with steps k − 1
        let mut s = 0i64;
        let mut n = 0u64;
        let hit = loop {
            if n >= cap {
                break None;
            }
            s += d.sample(&mut rng) as i64 - 1;
            n += 1;
            if s == -1 {
                break Some(n);
            }
        };
        b[bins(hit)] += 1.0;
    }
    let keep: Vec<usize> = (0..7).filter(|&i| a[i] + b[i] > 0.0).collect();
    let a: Vec<f64> = keep.iter().map(|&i| a[i]).collect();
    let b: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
    let p = chi_square_two_sample(&a, &b).unwrap().p_value;
    assert!(p > ALPHA, "p-value {p}");
}

#[test]
fn truncated_size_grows_like_square_root() {
    // P(#T > n) ~ c n^{−1/2} so E[#T ∧ B] ~ 2c √B
    let d = geometric();
    let mut rng = stream_rng(53, 0);
    let mean = |cap: u64, reps: usize, rng: &mut StreamRng| {
        (0..reps).map(|_| sample_size_capped(&d, cap, rng).unwrap_or(cap) as f64).sum::<f64>() / reps as f64
    };
    let small = mean(100, 200_000, &mut rng);
    let large = mean(10_000, 20_000, &mut rng);
    let ratio = large / small;
    assert!((ratio - 10.0).abs() < 1.2, "ratio {ratio}");
}

#[test]
fn generation_sizes_are_martingale_with_exact_extinction() {
    for (i, d) in [geometric(), stable()].iter().enumerate() {
        let p = 5;
        let n = 8;
        let reps = 40_000;
        let mut rng = stream_rng(59 + i as u64, 0);
        let mut dead = 0.0;
        let mut total = 0.0;
        for _ in 0..reps {
            let y = sample_generations(d, p, n, &mut rng).unwrap();
            assert_eq!(y.len(), n as usize + 1);
            total += y[n as usize] as f64;
            if y[n as usize] == 0 {
                dead += 1.0;
            }
        }
        let q = d.gf_iterate(n, 0.0).unwrap().powi(p as i32);
        let z = (dead - reps as f64 * q) / (reps as f64 * q * (1.0 - q)).sqrt();
        assert!(z.abs() < 4.0, "extinction z = {z}");
        // heavy tails for the stable law: only a loose check of the mean
        let mean = total / reps as f64;
        assert!((mean - p as f64).abs() < 0.5, "mean {mean}");
    }
}

#[test]
fn rescaling_plan_generations() {
    let g = RescalingPlan::new(&geometric(), 100).unwrap();
    assert_eq!(g.generation(0.5), 50);
    assert!(RescalingPlan::new(&geometric(), 0).is_err());
}

#[test]
fn custom_pmf_from_csv() {
    let d = OffspringDistribution::custom_from_csv("k,p\n0,0.5\n2,0.5\n").unwrap();
    assert!((d.pmf(2) - 0.5).abs() < 1e-15);
    assert!((d.mean() - 1.0).abs() < 1e-15);
    assert_eq!(d.max_offspring(), Some(2));
    assert!(OffspringDistribution::custom_from_csv("0,0.5\n3,0.5\n").is_err());
}
