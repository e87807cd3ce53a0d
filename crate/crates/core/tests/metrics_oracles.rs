use std::collections::BTreeMap;

use forgepulse_core::metrics::{contribution_tail, diversity, spearman};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook closed form for distinct values: ρ = 1 − 6Σd² / (n(n²−1)),
/// with ranks taken by sorting.
fn closed_form(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = (pos + 1) as f64;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    let n = x.len() as f64;
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn distinct_ints(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: i64 = rng.gen_range(-10_000..10_000);
        if seen.insert(v) {
            out.push(v as f64);
        }
    }
    out
}

proptest! {
    #[test]
    fn matches_closed_form_without_ties(seed in any::<u64>(), n in 2usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = distinct_ints(&mut rng, n);
        let y = distinct_ints(&mut rng, n);
        let r = spearman(&x, &y).unwrap();
        prop_assert!(!r.used_tie_correction);
        prop_assert!((r.rho - closed_form(&x, &y)).abs() < 1e-12);
        let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) + 7.0).collect();
        let exp_y: Vec<f64> = y.iter().map(|v| (v / 5000.0).exp()).collect();
        prop_assert_eq!(r.rho, spearman(&cubed, &exp_y).unwrap().rho);
    }

    #[test]
    fn merging_units_never_raises_diversity(weights in prop::collection::vec(0.01f64..1.0, 2..40), i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>()) {
        let total: f64 = weights.iter().sum();
        let shares: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let a = i.index(shares.len());
        let mut b = j.index(shares.len());
        if a == b {
            b = (b + 1) % shares.len();
        }
        let as_map = |v: &[f64]| -> BTreeMap<String, f64> { v.iter().enumerate().map(|(k, &p)| (k.to_string(), p)).collect() };
        let before = diversity(&as_map(&shares)).unwrap();
        let mut merged: Vec<f64> = shares.iter().enumerate().filter(|(k, _)| *k != a && *k != b).map(|(_, &p)| p).collect();
        merged.push(shares[a] + shares[b]);
        let after = diversity(&as_map(&merged)).unwrap();
        let expected_gain = 2.0 * shares[a] * shares[b];
        prop_assert!((after.simpson - before.simpson - expected_gain).abs() < 1e-12);
        prop_assert!(after.diversity <= before.diversity);
    }
}

/// Inverse-CDF sampler for the discrete power law p(k) ∝ k^−α on k ≥ k_min.
/// The pmf is tabulated up to `cap`; the remainder is folded into the last
/// cell using the integral tail.
fn discrete_power_law(rng: &mut ChaCha8Rng, alpha: f64, k_min: u64, n: usize) -> Vec<u64> {
    let cap = 2_000_000u64;
    let mut cdf = Vec::with_capacity((cap - k_min + 1) as usize);
    let mut acc = 0.0;
    for k in k_min..=cap {
        acc += (k as f64).powf(-alpha);
        cdf.push(acc);
    }
    let tail = (cap as f64 + 0.5).powf(1.0 - alpha) / (alpha - 1.0);
    let norm = acc + tail;
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * norm;
            let idx = cdf.partition_point(|&c| c < u);
            k_min + idx.min(cdf.len() - 1) as u64
        })
        .collect()
}

#[test]
fn tail_exponent_recovered_from_power_law_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(2015);
    for _ in 0..3 {
        let sample = discrete_power_law(&mut rng, 2.5, 10, 5000);
        let t = contribution_tail(&sample, None).unwrap();
        assert!((2.3..=2.7).contains(&t.alpha_hat), "{t:?}");
        assert!(t.n_tail >= 2000);
    }
}

#[test]
fn uniform_and_single_unit_bounds() {
    for n in 2..=1000usize {
        let shares: BTreeMap<String, f64> = (0..n).map(|i| (i.to_string(), 1.0 / n as f64)).collect();
        let d = diversity(&shares).unwrap();
        assert!(
            (d.diversity - (n as f64).sqrt()).abs() < 1e-12,
            "n={n}: {}",
            d.diversity
        );
    }
}
