//! Pair statistics of long simulated roads against the analytic pair
//! correlation.

use headway::process::{pcf, sample_configuration};
use headway::TrafficModel;

/// Ordered-pair counts per separation bin of width `width` up to `max_d`.
fn pair_counts(x: &[f64], width: f64, max_d: f64) -> Vec<f64> {
    let bins = (max_d / width).ceil() as usize;
    let mut h = vec![0.0; bins];
    for (i, &a) in x.iter().enumerate() {
        for &b in &x[i + 1..] {
            let d = b - a;
            if d >= max_d {
                break;
            }
            h[(d / width) as usize] += 1.0;
        }
    }
    h
}

fn bin_average(traffic: &TrafficModel, lo: f64, hi: f64) -> f64 {
    let n = 64;
    (0..n)
        .map(|i| pcf(traffic, lo + (hi - lo) * (i as f64 + 0.5) / n as f64))
        .sum::<f64>()
        / n as f64
}

#[test]
fn far_pairs_are_uncorrelated() {
    let tr = TrafficModel::new(0.1, 4.0).unwrap();
    let len = 1e7;
    let cfg = sample_configuration(&tr, (0.0, len), 5);
    let c = tr.hardcore();
    let h = pair_counts(&cfg.positions, c, 41.0 * c);
    let d = 40.0 * c;
    let rho = h[40] / (c * (len - d - 0.5 * c));
    let lambda2 = tr.lambda() * tr.lambda();
    assert!(
        (rho / lambda2 - 1.0).abs() < 0.01,
        "rho2(40c) / lambda^2 = {}",
        rho / lambda2
    );
}

#[test]
fn near_pairs_follow_the_renewal_density() {
    let tr = TrafficModel::new(0.1, 4.0).unwrap();
    let len = 1e7;
    let cfg = sample_configuration(&tr, (0.0, len), 6);
    let w = 1.0;
    let h = pair_counts(&cfg.positions, w, 20.0);
    let lambda2 = tr.lambda() * tr.lambda();
    for (i, &count) in h.iter().enumerate() {
        let (lo, hi) = (i as f64 * w, (i + 1) as f64 * w);
        let expected = bin_average(&tr, lo, hi);
        let est = count / (w * (len - 0.5 * (lo + hi)));
        if expected == 0.0 {
            assert_eq!(count, 0.0, "pair closer than c in bin {i}");
        } else if expected > 0.2 * lambda2 {
            assert!((est / expected - 1.0).abs() < 0.03, "bin {i}: {est} vs {expected}");
        }
    }
}
