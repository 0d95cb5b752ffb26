use aidr_core::forest::{best_split, fit_forest, fit_tree, midpoint, ForestParams};
use aidr_core::matrix::Matrix;
use aidr_core::rng::seeded;
use aidr_core::tabular::Dataset;
use rand::Rng;
use std::cmp::Ordering;
use std::collections::BTreeMap;

/// Weighted Gini as an exact fraction `num / den` (lower is better).
fn weighted_gini(y: &[usize], left: &[bool]) -> (i128, i128) {
    let n = y.len() as i128;
    // G = sum_child (n_c / n) * (1 - sum_k (c_k / n_c)^2)
    //   = (n - sum_child sum_k c_k^2 / n_c) / n
    let mut num = 0i128;
    let mut den = 1i128;
    for side in [true, false] {
        let mut counts: BTreeMap<usize, i128> = BTreeMap::new();
        let mut nc = 0i128;
        for (i, &c) in y.iter().enumerate() {
            if left[i] == side {
                *counts.entry(c).or_default() += 1;
                nc += 1;
            }
        }
        let sq: i128 = counts.values().map(|c| c * c).sum();
        // num/den += sq/nc
        num = num * nc + sq * den;
        den *= nc;
    }
    (n * den - num, n * den)
}

fn cmp_frac(a: (i128, i128), b: (i128, i128)) -> Ordering {
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

/// Exhaustive search: every feature, every threshold between consecutive
/// distinct values; lowest Gini, then lowest feature, then lowest threshold.
fn oracle(rows: &[Vec<f64>], y: &[usize]) -> Option<(usize, f64)> {
    let d = rows[0].len();
    let mut best: Option<((i128, i128), usize, f64)> = None;
    for f in 0..d {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = midpoint(w[0], w[1]);
            let left: Vec<bool> = rows.iter().map(|r| r[f] <= t).collect();
            let g = weighted_gini(y, &left);
            let better = match &best {
                None => true,
                Some((bg, bf, bt)) => match cmp_frac(g, *bg) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => (f, t) < (*bf, *bt),
                },
            };
            if better {
                best = Some((g, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn random_case(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seeded(seed);
    let n = rng.random_range(2..=12);
    let d = rng.random_range(1..=3);
    let k = rng.random_range(2..=3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| f64::from(rng.random_range(0..5u8)) * 0.5).collect())
        .collect();
    let y = (0..n).map(|_| rng.random_range(0..k)).collect();
    (rows, y)
}

#[test]
fn best_split_matches_exhaustive_enumeration() {
    let mut compared = 0;
    for seed in 0..100 {
        let (rows, y) = random_case(seed);
        let x = Matrix::from_rows(&rows).unwrap();
        let features: Vec<usize> = (0..x.cols()).collect();
        let got = best_split(&x, &y, &features).map(|s| (s.feature, s.threshold));
        assert_eq!(got, oracle(&rows, &y), "seed {seed}: rows {rows:?} labels {y:?}");
        compared += usize::from(got.is_some());
    }
    assert!(compared > 80);
}

#[test]
fn single_tree_fits_consistent_training_data() {
    for seed in 0..100 {
        let (rows, mut y) = random_case(1000 + seed);
        // Make duplicate feature vectors agree on their label.
        let mut first: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for (r, label) in rows.iter().zip(y.iter_mut()) {
            let key: Vec<u64> = r.iter().map(|v| v.to_bits()).collect();
            *label = *first.entry(key).or_insert(*label);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let params = ForestParams {
            n_estimators: 1,
            min_samples_split: 2,
            max_samples: None,
            seed,
            features_per_split: Some(x.cols()),
        };
        let tree = fit_tree(&x, &y, 3, &params, seed).unwrap();
        for (r, &label) in rows.iter().zip(&y) {
            let p = tree.predict_proba(r);
            let pred = (0..p.len())
                .max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
                .unwrap();
            assert_eq!(pred, label, "seed {seed}");
        }
    }
}

#[test]
fn forest_is_deterministic_for_a_seed() {
    let mut rng = seeded(9);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| vec![rng.random(), rng.random(), rng.random()])
        .collect();
    let y: Vec<usize> = rows.iter().map(|r| usize::from(r[0] > r[2])).collect();
    let ds = Dataset::new(
        Matrix::from_rows(&rows).unwrap(),
        y,
        vec!["a".into(), "b".into()],
        vec!["x".into(), "y".into(), "z".into()],
    )
    .unwrap();
    let params = ForestParams {
        n_estimators: 10,
        ..ForestParams::default()
    };
    let a = fit_forest(&ds, &params).unwrap();
    let b = fit_forest(&ds, &params).unwrap();
    assert_eq!(a, b);
    let c = fit_forest(
        &ds,
        &ForestParams {
            seed: params.seed + 1,
            ..params
        },
    )
    .unwrap();
    assert_ne!(a, c);
}
