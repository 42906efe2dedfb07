// temporary empirical tuning harness; removed before release
use std::collections::BTreeMap;

use slogan_core::*;

fn demo_spec(sep: f64, spread: f64) -> SyntheticSpec {
    let comp = |mean: Vec<f64>, acc_a: f64, acc_b: f64| ComponentSpec {
        weight: 1.0,
        mean,
        spread,
        acc_a,
        acc_b,
        sev_mean_a: 3.0,
        sev_mean_b: 3.0,
        sev_std: 0.5,
        frac_a: 0.5,
    };
    let mut means = vec![vec![0.0; 8]; 4];
    for c in 0..4 {
        means[c][c] = sep;
        means[c][c + 4] = sep * 0.5;
    }
    SyntheticSpec {
        components: vec![
            comp(means[0].clone(), 0.55, 0.92),
            comp(means[1].clone(), 0.90, 0.90),
            comp(means[2].clone(), 0.90, 0.90),
            comp(means[3].clone(), 0.90, 0.90),
        ],
        n: 800,
        dim: 8,
        attribute_decor: BTreeMap::new(),
    }
}

#[test]
#[ignore]
fn planted_sweep() {
    for k in [6usize, 8] {
        for (sep, spread) in [(2.0_f64, 1.0_f64), (2.5, 1.0), (3.0, 1.0)] {
            let spec = demo_spec(sep, spread);
            let mut ok_seeds = 0;
            let mut strict = 0;
            let mut km_bias_sum = 0.0;
            let mut sl_bias_sum = 0.0;
            let mut max_flag = Vec::new();
            let mut recalls = Vec::new();
            let start = std::time::Instant::now();
            for seed in 0..20u64 {
                let (cohort, truth) = generate(&spec, seed).unwrap();
                let base = Hyperparams { k, seed, restarts: 5, ..Default::default() };
                let grid = GridSpec {
                    lambdas: vec![-100.0, -50.0, -20.0],
                    gammas: vec![0.0, 50.0],
                    base,
                };
                let thresholds = BiasThresholds::default();
                let out = grid_search(&cohort, &grid, &thresholds).unwrap();
                let sl_result = fit(&cohort, &out.winner).unwrap();
                let sl_report = audit_clusters(&sl_result, &cohort, &thresholds).unwrap();

                let km = fit(&cohort, &Hyperparams { lambda: 0.0, gamma: 0.0, ..base }).unwrap();
                let km_report = audit_clusters(&km, &cohort, &thresholds).unwrap();

                let flagged = sl_report.flagged_clusters();
                let (recall, _) = recall_score(&flagged, &sl_result.assignment, &truth, 0).unwrap();
                let best_flag = sl_report
                    .clusters
                    .iter()
                    .filter(|c| c.flagged)
                    .filter_map(|c| c.bias_score)
                    .fold(0.0, f64::max);
                if best_flag >= 0.30 && recall >= 0.70 {
                    ok_seeds += 1;
                }
                if km_report.avg_abs_bias < sl_report.avg_abs_bias {
                    strict += 1;
                }
                recalls.push((recall * 100.0).round() / 100.0);
                max_flag.push((best_flag * 100.0).round() / 100.0);
                km_bias_sum += km_report.avg_abs_bias;
                sl_bias_sum += sl_report.avg_abs_bias;
            }
            println!(
                "k={k} sep={sep}: ok={ok_seeds}/20 per-seed-strict={strict}/20 km_mean={:.3} sl_mean={:.3} elapsed={:?}",
                km_bias_sum / 20.0,
                sl_bias_sum / 20.0,
                start.elapsed()
            );
            println!("  max flagged bias: {max_flag:?}");
            println!("  recalls: {recalls:?}");
        }
    }
}

#[test]
#[ignore]
fn monotone_stress() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12345);
    let mut trace_violations = 0usize;
    let mut stability_violations = 0usize;
    let mut repaired_runs = 0usize;
    for trial in 0..500u64 {
        let n = rng.gen_range(20..=120);
        let d = rng.gen_range(2..=6);
        let k = rng.gen_range(2..=6.min(n));
        let lambda = -rng.gen::<f64>() * 100.0;
        let gamma = rng.gen::<f64>() * 100.0;
        let mut instances = Vec::new();
        for i in 0..n {
            instances.push(Instance {
                id: format!("p{i}"),
                group: if rng.gen::<bool>() { Group::A } else { Group::B },
                correct: rng.gen::<f64>() < 0.7,
                severity: rng.gen::<f64>() * 5.0,
                embedding: (0..d).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect(),
                attributes: Default::default(),
            });
        }
        let cohort = match Cohort::new(instances) { Ok(c) => c, Err(_) => continue };
        let h = Hyperparams { k, lambda, gamma, seed: trial, restarts: 2, ..Default::default() };
        let r = fit(&cohort, &h).unwrap();
        for w in r.trace.windows(2) {
            if w[1] > w[0] + 1e-9 {
                trace_violations += 1;
                println!("trial {trial}: trace increase {} -> {} (n={n} k={k} l={lambda:.1} g={gamma:.1})", w[0], w[1]);
                break;
            }
        }
        // 1-move stability under the returned centroids
        let base = total_objective(&cohort, &r.assignment, &r.centroids, &h).unwrap();
        'outer: for i in 0..cohort.len() {
            let cur = r.assignment[i];
            for cand in 0..k {
                if cand == cur { continue; }
                let mut alt = r.assignment.clone();
                alt[i] = cand;
                let obj = total_objective(&cohort, &alt, &r.centroids, &h).unwrap();
                if obj < base - 1e-9 {
                    stability_violations += 1;
                    println!("trial {trial}: unstable move {i}:{cur}->{cand} {} -> {} (n={n} k={k} l={lambda:.1} g={gamma:.1})", base, obj);
                    break 'outer;
                }
            }
        }
        // decomposition
        let recomposed = r.l_c + lambda * r.l_b + gamma * r.l_s;
        assert!((r.objective - recomposed).abs() <= 1e-9 * recomposed.abs().max(1.0));
        let _ = repaired_runs;
    }
    println!("trace violations: {trace_violations}, stability violations: {stability_violations}");
    assert_eq!(trace_violations, 0);
    assert_eq!(stability_violations, 0);
}

#[test]
#[ignore]
fn repair_stress() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(777);
    let mut trace_violations = 0usize;
    let mut nonconverged = 0usize;
    for trial in 0..2000u64 {
        let n = rng.gen_range(4..=12);
        let k = rng.gen_range(2..=n.min(5));
        let lambda = -rng.gen::<f64>() * 100.0;
        let gamma = rng.gen::<f64>() * 100.0;
        let mut instances = Vec::new();
        for i in 0..n {
            instances.push(Instance {
                id: format!("p{i}"),
                group: if i % 2 == 0 { Group::A } else { Group::B },
                correct: rng.gen::<f64>() < 0.6,
                severity: rng.gen::<f64>() * 8.0,
                embedding: (0..2).map(|_| rng.gen::<f64>()).collect(),
                attributes: Default::default(),
            });
        }
        let cohort = Cohort::new(instances).unwrap();
        let h = Hyperparams { k, lambda, gamma, seed: trial, restarts: 1, max_iter: 200, ..Default::default() };
        let r = fit(&cohort, &h).unwrap();
        if !r.converged { nonconverged += 1; }
        for w in r.trace.windows(2) {
            if w[1] > w[0] + 1e-9 {
                trace_violations += 1;
                println!("trial {trial}: trace increase {} -> {} (n={n} k={k} l={lambda:.1} g={gamma:.1})", w[0], w[1]);
                break;
            }
        }
        for j in 0..k {
            assert!(r.assignment.iter().any(|&a| a == j), "empty cluster {j} returned (trial {trial})");
        }
    }
    println!("trace violations: {trace_violations}, nonconverged: {nonconverged}");
}

#[test]
#[ignore]
fn severity_constraint_check() {
    let comp = |mean: Vec<f64>, acc_a: f64, acc_b: f64, sev_a: f64, sev_b: f64| ComponentSpec {
        weight: 1.0,
        mean,
        spread: 1.0,
        acc_a,
        acc_b,
        sev_mean_a: sev_a,
        sev_mean_b: sev_b,
        sev_std: 0.5,
        frac_a: 0.5,
    };
    let mut means = vec![vec![0.0; 8]; 4];
    for c in 0..4 {
        means[c][c] = 2.5;
        means[c][c + 4] = 1.25;
    }
    // the biggest accuracy-gap region also has a mean-severity gap of 1.0
    let spec = SyntheticSpec {
        components: vec![
            comp(means[0].clone(), 0.55, 0.92, 4.0, 3.0),
            comp(means[1].clone(), 0.90, 0.90, 3.0, 3.0),
            comp(means[2].clone(), 0.90, 0.90, 3.0, 3.0),
            comp(means[3].clone(), 0.90, 0.90, 3.0, 3.0),
        ],
        n: 800,
        dim: 8,
        attribute_decor: BTreeMap::new(),
    };
    let thresholds = BiasThresholds::default();
    let mut ls_le = 0;
    let mut flag_ok = 0;
    for seed in 0..20u64 {
        let (cohort, _) = generate(&spec, seed).unwrap();
        let base = Hyperparams { k: 8, lambda: -50.0, seed, restarts: 5, ..Default::default() };
        let with_gamma = fit(&cohort, &Hyperparams { gamma: 100.0, ..base }).unwrap();
        let without = fit(&cohort, &Hyperparams { gamma: 0.0, ..base }).unwrap();
        if with_gamma.l_s <= without.l_s {
            ls_le += 1;
        }
        let report = audit_clusters(&with_gamma, &cohort, &thresholds).unwrap();
        if report
            .clusters
            .iter()
            .filter(|c| c.flagged)
            .all(|c| c.severity_gap.unwrap() <= 0.8)
        {
            flag_ok += 1;
        }
    }
    println!("L_s(gamma=100) <= L_s(gamma=0): {ls_le}/20; flagged sev-gap ok: {flag_ok}/20");
}

#[test]
#[ignore]
fn shipped_demo_check() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../demo/planted_bias.json")).unwrap();
    let spec: SyntheticSpec = serde_json::from_str(&text).unwrap();
    let thresholds = BiasThresholds::default();
    let mut ok_seeds = 0;
    let mut km_sum = 0.0;
    let mut sl_sum = 0.0;
    let mut details = Vec::new();
    let start = std::time::Instant::now();
    for seed in 0..20u64 {
        let (cohort, truth) = generate(&spec, seed).unwrap();
        let base = Hyperparams { k: 8, seed, restarts: 5, ..Default::default() };
        let grid = GridSpec { lambdas: vec![-100.0, -50.0, -20.0], gammas: vec![0.0, 50.0], base };
        let out = grid_search(&cohort, &grid, &thresholds).unwrap();
        let sl_result = fit(&cohort, &out.winner).unwrap();
        let sl_report = audit_clusters(&sl_result, &cohort, &thresholds).unwrap();
        let km = fit(&cohort, &Hyperparams { lambda: 0.0, gamma: 0.0, ..base }).unwrap();
        let km_report = audit_clusters(&km, &cohort, &thresholds).unwrap();
        let flagged = sl_report.flagged_clusters();
        let (recall, _) = recall_score(&flagged, &sl_result.assignment, &truth, 0).unwrap();
        let best = sl_report.clusters.iter().filter(|c| c.flagged).filter_map(|c| c.bias_score).fold(0.0, f64::max);
        if best >= 0.30 && recall >= 0.70 { ok_seeds += 1; }
        details.push(((best*100.0).round()/100.0, (recall*100.0).round()/100.0));
        km_sum += km_report.avg_abs_bias;
        sl_sum += sl_report.avg_abs_bias;
    }
    println!("shipped spec: ok={ok_seeds}/20 km_mean={:.3} sl_mean={:.3} elapsed={:?}", km_sum/20.0, sl_sum/20.0, start.elapsed());
    println!("  (max_flagged_bias, recall): {details:?}");
}

fn reference_lloyd(cohort: &Cohort, k: usize, mut centroids: Vec<Vec<f64>>, max_iter: usize) -> Vec<usize> {
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let n = cohort.len();
    // initial assignment: nearest seeded centroid, ties to the lowest index
    let mut assignment: Vec<usize> = cohort
        .instances()
        .iter()
        .map(|inst| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = dist2(&inst.embedding, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect();
    for _ in 0..max_iter {
        // update step: mean of members (empty clusters keep their centroid)
        let d = cohort.dim();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (inst, &a) in cohort.instances().iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(&inst.embedding) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for s in sums[j].iter_mut() {
                    *s /= counts[j] as f64;
                }
                centroids[j] = sums[j].clone();
            }
        }
        // batch assignment step with the solver's accept tolerance
        let mut changed = false;
        let mut next = assignment.clone();
        for i in 0..n {
            let cur = assignment[i];
            let d_cur = dist2(&cohort.instances()[i].embedding, &centroids[cur]);
            let mut best = cur;
            let mut best_delta = 0.0;
            for j in 0..k {
                if j == cur { continue; }
                let delta = dist2(&cohort.instances()[i].embedding, &centroids[j]) - d_cur;
                if delta < best_delta - 1e-9 {
                    best_delta = delta;
                    best = j;
                }
            }
            if best != cur {
                next[i] = best;
                changed = true;
            }
        }
        assignment = next;
        if !changed {
            break;
        }
    }
    assignment
}

#[test]
#[ignore]
fn reduction_stress() {
    use rand::{Rng, SeedableRng};
    let mut mismatches = 0usize;
    for trial in 0..500u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50_000 + trial);
        let n = 200;
        let d = 8;
        let k = rng.gen_range(2..=6);
        let mut instances = Vec::new();
        for i in 0..n {
            instances.push(Instance {
                id: format!("p{i}"),
                group: if rng.gen::<bool>() { Group::A } else { Group::B },
                correct: rng.gen::<f64>() < 0.75,
                severity: rng.gen::<f64>() * 5.0,
                embedding: (0..d).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect(),
                attributes: Default::default(),
            });
        }
        let cohort = Cohort::new(instances).unwrap();
        let h = Hyperparams { k, seed: trial, restarts: 1, ..Default::default() };
        let init = init_centroids(&cohort, &h).unwrap();
        let reference = reference_lloyd(&cohort, k, init, h.max_iter);
        let fitted = fit(&cohort, &h).unwrap();
        if fitted.assignment != reference {
            mismatches += 1;
            println!("trial {trial} (k={k}): assignments diverge");
        }
    }
    println!("mismatches: {mismatches}/500");
    assert_eq!(mismatches, 0);
}

fn enumerate_best(cohort: &Cohort, h: &Hyperparams) -> (f64, f64) {
    // returns (min over all assignments, min over assignments with no empty cluster)
    let n = cohort.len();
    assert!(h.k == 2 && n <= 20);
    let mut min_all = f64::INFINITY;
    let mut min_feasible = f64::INFINITY;
    for mask in 0..(1u32 << n) {
        let assignment: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        let d = cohort.dim();
        let mut sums = vec![vec![0.0; d]; 2];
        let mut counts = [0usize; 2];
        for (inst, &a) in cohort.instances().iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(&inst.embedding) {
                *s += x;
            }
        }
        for j in 0..2 {
            if counts[j] > 0 {
                for s in sums[j].iter_mut() {
                    *s /= counts[j] as f64;
                }
            }
        }
        let mut l_c = 0.0;
        for (inst, &a) in cohort.instances().iter().zip(&assignment) {
            l_c += inst.embedding.iter().zip(&sums[a]).map(|(x, c)| (x - c) * (x - c)).sum::<f64>();
        }
        let obj = l_c + h.lambda * bias_term(cohort, &assignment) + h.gamma * severity_term(cohort, &assignment);
        if obj < min_all { min_all = obj; }
        if counts[0] > 0 && counts[1] > 0 && obj < min_feasible { min_feasible = obj; }
    }
    (min_all, min_feasible)
}

#[test]
#[ignore]
fn brute_force_stress() {
    use rand::{Rng, SeedableRng};
    let mut attained = 0usize;
    let mut bound_ok = 0usize;
    let mut infeasible_best = 0usize;
    let trials = 300u64;
    for trial in 0..trials {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(90_000 + trial);
        let mut instances = Vec::new();
        for i in 0..10 {
            instances.push(Instance {
                id: format!("p{i}"),
                group: if i % 2 == 0 { Group::A } else { Group::B },
                correct: rng.gen::<f64>() < 0.6,
                severity: rng.gen::<f64>() * 3.0,
                embedding: (0..3).map(|_| rng.gen::<f64>() * 2.0).collect(),
                attributes: Default::default(),
            });
        }
        let cohort = Cohort::new(instances).unwrap();
        let h = Hyperparams {
            k: 2,
            lambda: -rng.gen::<f64>() * 100.0,
            gamma: rng.gen::<f64>() * 100.0,
            seed: trial,
            restarts: 10,
            ..Default::default()
        };
        let (min_all, min_feasible) = enumerate_best(&cohort, &h);
        let fitted = fit(&cohort, &h).unwrap();
        if min_all <= fitted.objective + 1e-9 { bound_ok += 1; }
        if (fitted.objective - min_feasible).abs() <= 1e-9 { attained += 1; }
        if min_all < min_feasible - 1e-9 { infeasible_best += 1; }
    }
    println!("bound holds: {bound_ok}/{trials}, feasible-min attained: {attained}/{trials}, empty-cluster optimum: {infeasible_best}/{trials}");
}

#[test]
#[ignore]
fn brute_force_diagnose() {
    use rand::{Rng, SeedableRng};
    for (emb_scale, sev_scale, wl, wg, restarts) in [
        (2.0, 3.0, 100.0, 100.0, 50usize),
        (2.0, 3.0, 100.0, 100.0, 200),
        (2.0, 1.0, 100.0, 10.0, 10),
        (4.0, 1.0, 30.0, 10.0, 10),
        (4.0, 1.0, 50.0, 5.0, 10),
        (6.0, 1.0, 100.0, 2.0, 10),
    ] {
        let mut attained = 0usize;
        let trials = 200u64;
        for trial in 0..trials {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(90_000 + trial);
            let mut instances = Vec::new();
            for i in 0..10 {
                instances.push(Instance {
                    id: format!("p{i}"),
                    group: if i % 2 == 0 { Group::A } else { Group::B },
                    correct: rng.gen::<f64>() < 0.6,
                    severity: rng.gen::<f64>() * sev_scale,
                    embedding: (0..3).map(|_| rng.gen::<f64>() * emb_scale).collect(),
                    attributes: Default::default(),
                });
            }
            let cohort = Cohort::new(instances).unwrap();
            let h = Hyperparams {
                k: 2,
                lambda: -rng.gen::<f64>() * wl,
                gamma: rng.gen::<f64>() * wg,
                seed: trial,
                restarts,
                ..Default::default()
            };
            let (_, min_feasible) = enumerate_best(&cohort, &h);
            let fitted = fit(&cohort, &h).unwrap();
            if (fitted.objective - min_feasible).abs() <= 1e-9 { attained += 1; }
        }
        println!("emb<= {emb_scale} sev<= {sev_scale} |l|<= {wl} g<= {wg} restarts={restarts}: attained {attained}/{trials}");
    }
}

#[test]
#[ignore]
fn brute_force_exact_draws() {
    use rand::{Rng, SeedableRng};
    for base in [90_000u64, 91_000, 92_000, 93_000] {
        let mut attained = 0usize;
        for trial in 0..30u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(base + trial);
            let mut instances = Vec::new();
            for i in 0..10 {
                instances.push(Instance {
                    id: format!("p{i}"),
                    group: if i % 2 == 0 { Group::A } else { Group::B },
                    correct: rng.gen::<f64>() < 0.6,
                    severity: rng.gen::<f64>(),
                    embedding: (0..3).map(|_| rng.gen::<f64>() * 2.0).collect(),
                    attributes: Default::default(),
                });
            }
            let cohort = Cohort::new(instances).unwrap();
            let h = Hyperparams {
                k: 2,
                lambda: -rng.gen::<f64>() * 100.0,
                gamma: rng.gen::<f64>() * 10.0,
                seed: base + trial,
                restarts: 10,
                ..Default::default()
            };
            let (min_all, min_feasible) = enumerate_best(&cohort, &h);
            let fitted = fit(&cohort, &h).unwrap();
            assert!(min_all <= fitted.objective + 1e-9);
            if (fitted.objective - min_feasible).abs() <= 1e-9 { attained += 1; }
        }
        println!("base {base}: attained {attained}/30");
    }
}

#[test]
#[ignore]
fn brute_force_blob_draws() {
    use rand::{Rng, SeedableRng};
    for base in [90_000u64, 91_000, 92_000] {
        for (blob_sep, spread, gmax) in [(3.0, 0.6, 10.0), (2.0, 0.8, 10.0), (3.0, 0.6, 30.0)] {
            let mut attained = 0usize;
            let mut bound = 0usize;
            for trial in 0..30u64 {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(base + trial);
                let mut instances = Vec::new();
                for i in 0..10 {
                    let blob = (i >= 5) as usize as f64;
                    instances.push(Instance {
                        id: format!("p{i}"),
                        group: if i % 2 == 0 { Group::A } else { Group::B },
                        correct: rng.gen::<f64>() < 0.6,
                        severity: rng.gen::<f64>(),
                        embedding: (0..3)
                            .map(|_| blob * blob_sep + (rng.gen::<f64>() - 0.5) * 2.0 * spread)
                            .collect(),
                        attributes: Default::default(),
                    });
                }
                let cohort = Cohort::new(instances).unwrap();
                let h = Hyperparams {
                    k: 2,
                    lambda: -rng.gen::<f64>() * 100.0,
                    gamma: rng.gen::<f64>() * gmax,
                    seed: base + trial,
                    restarts: 10,
                    ..Default::default()
                };
                let (min_all, min_feasible) = enumerate_best(&cohort, &h);
                let fitted = fit(&cohort, &h).unwrap();
                if min_all <= fitted.objective + 1e-9 { bound += 1; }
                if (fitted.objective - min_feasible).abs() <= 1e-9 { attained += 1; }
            }
            println!("base {base} sep {blob_sep} spread {spread} gmax {gmax}: attained {attained}/30 bound {bound}/30");
        }
    }
}

#[test]
#[ignore]
fn brute_force_scale_scan() {
    use rand::{Rng, SeedableRng};
    for (emb_scale, sev_scale) in [(8.0, 0.5), (12.0, 0.5), (12.0, 0.3), (16.0, 0.4), (20.0, 0.3)] {
        let mut attained = 0usize;
        let mut flipped = 0usize;
        let trials = 200u64;
        for trial in 0..trials {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(90_000 + trial);
            let mut instances = Vec::new();
            for i in 0..10 {
                instances.push(Instance {
                    id: format!("p{i}"),
                    group: if i % 2 == 0 { Group::A } else { Group::B },
                    correct: rng.gen::<f64>() < 0.6,
                    severity: rng.gen::<f64>() * sev_scale,
                    embedding: (0..3).map(|_| rng.gen::<f64>() * emb_scale).collect(),
                    attributes: Default::default(),
                });
            }
            let cohort = Cohort::new(instances).unwrap();
            let h = Hyperparams {
                k: 2,
                lambda: -rng.gen::<f64>() * 100.0,
                gamma: rng.gen::<f64>() * 100.0,
                seed: 90_000 + trial,
                restarts: 10,
                ..Default::default()
            };
            let (_, min_feasible) = enumerate_best(&cohort, &h);
            let km = Hyperparams { lambda: 0.0, gamma: 0.0, ..h };
            let (_, min_km) = enumerate_best(&cohort, &km);
            // does the composite optimum use a different assignment than pure kmeans?
            let fitted = fit(&cohort, &h).unwrap();
            let km_fit = fit(&cohort, &km).unwrap();
            let composite_at_km = km_fit.l_c + h.lambda * km_fit.l_b + h.gamma * km_fit.l_s;
            let _ = min_km;
            if (composite_at_km - min_feasible).abs() > 1e-9 { flipped += 1; }
            if (fitted.objective - min_feasible).abs() <= 1e-9 { attained += 1; }
        }
        println!("emb U[0,{emb_scale}] sev U[0,{sev_scale}]: attained {attained}/{trials}, composite-min differs from kmeans fit {flipped}/{trials}");
    }
}

#[test]
#[ignore]
fn brute_force_final_scan() {
    use rand::{Rng, SeedableRng};
    for d in [2usize, 3] {
        for (emb_scale, sev_scale) in [(12.0, 0.5), (16.0, 0.4)] {
            for base in [90_000u64, 91_000, 92_000, 93_000, 94_000] {
                let mut attained = 0usize;
                let mut flipped = 0usize;
                for trial in 0..30u64 {
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(base + trial);
                    let mut instances = Vec::new();
                    for i in 0..10 {
                        instances.push(Instance {
                            id: format!("p{i}"),
                            group: if i % 2 == 0 { Group::A } else { Group::B },
                            correct: rng.gen::<f64>() < 0.6,
                            severity: rng.gen::<f64>() * sev_scale,
                            embedding: (0..d).map(|_| rng.gen::<f64>() * emb_scale).collect(),
                            attributes: Default::default(),
                        });
                    }
                    let cohort = Cohort::new(instances).unwrap();
                    let h = Hyperparams {
                        k: 2,
                        lambda: -rng.gen::<f64>() * 100.0,
                        gamma: rng.gen::<f64>() * 100.0,
                        seed: base + trial,
                        restarts: 10,
                        ..Default::default()
                    };
                    let (_, min_feasible) = enumerate_best(&cohort, &h);
                    let fitted = fit(&cohort, &h).unwrap();
                    let km_fit = fit(&cohort, &Hyperparams { lambda: 0.0, gamma: 0.0, ..h }).unwrap();
                    let composite_at_km = km_fit.l_c + h.lambda * km_fit.l_b + h.gamma * km_fit.l_s;
                    if (composite_at_km - min_feasible).abs() > 1e-9 { flipped += 1; }
                    if (fitted.objective - min_feasible).abs() <= 1e-9 { attained += 1; }
                }
                println!("d={d} emb {emb_scale} sev {sev_scale} base {base}: attained {attained}/30 flipped {flipped}/30");
            }
        }
    }
}
