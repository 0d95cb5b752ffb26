use aidr_core::isoforest::{fit_iforest, Decision, IsoParams};
use aidr_core::matrix::Matrix;
use aidr_core::rng::seeded;
use rand_distr::{Distribution, Normal};

fn benign(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| (0..3).map(|_| z.sample(&mut rng)).collect()).collect()
}

fn flagged(rows: &[Vec<f64>], contamination: f64) -> usize {
    let x = Matrix::from_rows(rows).unwrap();
    let m = fit_iforest(
        &x,
        &IsoParams {
            contamination,
            ..IsoParams::default()
        },
    )
    .unwrap();
    rows.iter()
        .filter(|r| m.decide(r).unwrap() == Decision::Anomaly)
        .count()
}

#[test]
fn contamination_sets_flag_rate() {
    let rows = benign(1, 1000);
    let n = flagged(&rows, 0.01);
    assert!((5..=15).contains(&n), "flagged {n}");
}

#[test]
fn contamination_sweep_is_monotone() {
    let rows = benign(2, 1000);
    let counts: Vec<usize> = [0.001, 0.01, 0.1].iter().map(|&c| flagged(&rows, c)).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(counts[2] > counts[0]);
}

#[test]
fn planted_outliers_outrank_inliers() {
    let mut hits = 0;
    for trial in 0..100u64 {
        let mut rows = benign(100 + trial, 300);
        let far = vec![8.0 + trial as f64 * 0.01, -8.0, 8.0];
        rows.push(far.clone());
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit_iforest(
            &x,
            &IsoParams {
                seed: trial,
                num_samples: 256,
                ..IsoParams::default()
            },
        )
        .unwrap();
        let mut inlier: Vec<f64> = rows[..300].iter().map(|r| m.score(r).unwrap()).collect();
        inlier.sort_by(f64::total_cmp);
        let p95 = inlier[(0.95 * inlier.len() as f64) as usize];
        hits += usize::from(m.score(&far).unwrap() > p95);
    }
    assert!(hits >= 95, "{hits}/100");
}
