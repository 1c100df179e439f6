//! Property tests for the spec-level invariants of the core algorithms.
#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use loadcast_core::dwt::{decompose, WaveletFamily, LEVELS};
use loadcast_core::grouping::{cluster_appliances, DistanceMatrix};
use loadcast_core::neural::{mse_loss, AdamConfig, AdamState, GateActivation, LstmFcNet};
use loadcast_core::rng::Rng;
use loadcast_core::series::{
    context_features, make_windows, minmax_normalize, resample_hourly, InputUnit, LoadSeries,
    TimeIndex,
};

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

proptest! {
    #[test]
    fn minmax_output_in_unit_interval(values in prop::collection::vec(-1e6f64..1e6, 1..100)) {
        let out = minmax_normalize(&values).unwrap();
        for &v in &out {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // Extreme positions survive normalization when not degenerate.
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            prop_assert_eq!(argmax(&out), argmax(&values));
            prop_assert_eq!(argmin(&out), argmin(&values));
            prop_assert_eq!(out[argmax(&values)], 1.0);
            prop_assert_eq!(out[argmin(&values)], 0.0);
        }
    }

    #[test]
    fn context_has_exactly_two_ones(ts in -2_000_000_000i64..4_000_000_000) {
        let v = context_features(ts);
        prop_assert_eq!(v.len(), 31);
        prop_assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 2);
        prop_assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 29);
        prop_assert!(v[..7].iter().sum::<f64>() == 1.0);
        prop_assert!(v[7..].iter().sum::<f64>() == 1.0);
    }

    #[test]
    fn windows_never_leak_the_target(
        len in 8usize..40,
        tau in 1usize..6,
        holes in prop::collection::vec(0usize..40, 0..4),
    ) {
        prop_assume!(tau < len);
        let values: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let mut mask = vec![true; len];
        for h in holes {
            if h < len {
                mask[h] = false;
            }
        }
        prop_assume!(mask.iter().any(|&m| m));
        let s = LoadSeries::new(TimeIndex::hourly(0, len), values, mask.clone()).unwrap();
        if let Ok(ds) = make_windows(&[&s], context_features, tau) {
            // Enumeration oracle over valid positions.
            let oracle: Vec<usize> = (tau..len)
                .filter(|&t| (t - tau..=t).all(|i| mask[i]))
                .collect();
            prop_assert_eq!(ds.positions(), oracle.as_slice());
            for k in 0..ds.num_samples() {
                let t = ds.position(k);
                // Inputs stop strictly before the target.
                for (r, &v) in ds.input(k).iter().enumerate() {
                    prop_assert_eq!(v, (t - tau + r) as f64);
                }
                prop_assert_eq!(ds.target(k), t as f64);
            }
        }
    }

    #[test]
    fn resample_idempotent_on_hourly_data(values in prop::collection::vec(0.0f64..50.0, 2..80)) {
        let raw: Vec<(i64, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as i64 * 3600, v))
            .collect();
        let once = resample_hourly(&raw, InputUnit::Kilowatts).unwrap();
        let back: Vec<(i64, f64)> = (0..once.len())
            .map(|i| (once.index().timestamp(i), once.values()[i]))
            .collect();
        let twice = resample_hourly(&back, InputUnit::Kilowatts).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dwt_reconstructs_random_signals(
        seed in 0u64..1000,
        len in 16usize..300,
        family_db4 in any::<bool>(),
    ) {
        let family = if family_db4 { WaveletFamily::Db4 } else { WaveletFamily::Haar };
        let mut rng = Rng::new(seed);
        let signal: Vec<f64> = (0..len).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let stack = decompose(&signal, family, LEVELS).unwrap();
        let rec = stack.reconstruct();
        let scale = 1.0 + signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (r, s) in rec.iter().zip(&signal) {
            prop_assert!((r - s).abs() / scale < 1e-9);
        }
    }
}

/// Brute-force connected components over the epsilon-threshold graph.
fn brute_components(dist: &DistanceMatrix, epsilon: f64) -> Vec<Vec<u32>> {
    let n = dist.len();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0usize;
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        labels[start] = next;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if labels[j] == usize::MAX && dist.get(i, j) <= epsilon {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); next];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i as u32);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

fn random_distance_matrix(rng: &mut Rng, n: usize) -> DistanceMatrix {
    let mut entries = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = rng.next_f64();
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    DistanceMatrix::from_entries(n, entries, 6).unwrap()
}

#[test]
fn clustering_equals_union_find_on_random_matrices() {
    let mut rng = Rng::new(987);
    for trial in 0..500 {
        let n = 1 + rng.next_below(8);
        let dist = random_distance_matrix(&mut rng, n);
        let ids: Vec<u32> = (0..n as u32).collect();
        let eps = (rng.next_f64()).clamp(0.01, 1.0);
        let got = cluster_appliances(&dist, &ids, eps).unwrap();
        let want = brute_components(&dist, eps);
        assert_eq!(got.groups, want, "trial {trial} n={n} eps={eps}");
    }
}

#[test]
fn group_count_is_monotone_in_epsilon() {
    let mut rng = Rng::new(654);
    for _ in 0..200 {
        let n = 2 + rng.next_below(7);
        let dist = random_distance_matrix(&mut rng, n);
        let ids: Vec<u32> = (0..n as u32).collect();
        let mut last = usize::MAX;
        for k in 1..=10 {
            let eps = k as f64 / 10.0;
            let g = cluster_appliances(&dist, &ids, eps).unwrap().group_count();
            assert!(g <= last, "g grew from {last} to {g} at eps={eps}");
            last = g;
        }
        // Epsilon covering every distance collapses everything into one group.
        assert_eq!(last, 1);
    }
}

#[test]
fn one_small_step_does_not_increase_the_loss() {
    // A full-batch gradient step with a tiny learning rate must not make
    // the batch MSE worse; checked over 20 random trials.
    for trial in 0..20u64 {
        let mut rng = Rng::new(5000 + trial);
        let mut net = LstmFcNet::new(2, 4, &[6], 3, GateActivation::Sigmoid, &mut rng);
        let n = 8;
        let tau = 4;
        let samples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..tau * 2).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let c: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, 1.0)).collect();
                let y = rng.uniform(-1.0, 1.0);
                (x, c, y)
            })
            .collect();

        let batch_mse = |net: &LstmFcNet| -> f64 {
            let preds: Vec<f64> = samples
                .iter()
                .map(|(x, c, _)| net.forward(x, c).unwrap().0)
                .collect();
            let targets: Vec<f64> = samples.iter().map(|&(_, _, y)| y).collect();
            mse_loss(&preds, &targets).0
        };

        let before = batch_mse(&net);
        let mut grads = net.zero_grads();
        for (x, c, y) in &samples {
            let (pred, cache) = net.forward(x, c).unwrap();
            net.backward_into(&cache, 2.0 * (pred - y) / n as f64, &mut grads);
        }
        let mut adam = AdamState::new(net.param_count(), AdamConfig::with_lr(1e-4));
        let g_owned: Vec<(&'static str, Vec<f64>)> = net
            .grad_blocks(&grads)
            .iter()
            .map(|(n, g)| (*n, g.to_vec()))
            .collect();
        let g_refs: Vec<(&'static str, &[f64])> =
            g_owned.iter().map(|(n, g)| (*n, g.as_slice())).collect();
        adam.update(&mut net.blocks_mut(), &g_refs);
        let after = batch_mse(&net);

        assert!(
            after <= before + 1e-12,
            "trial {trial}: loss rose from {before} to {after}"
        );
    }
}
