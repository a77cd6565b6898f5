//! Model-free reference scorers.

use crate::data::SeriesFrame;
use crate::detect::ScoreSeries;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::window::{make_windows, Window, Windowing};

/// Masked per-feature training means.
pub fn feature_means(train: &SeriesFrame) -> Result<Vec<f64>> {
    (0..train.n_features())
        .map(|i| {
            let (sum, n) = (0..train.len())
                .filter(|&t| train.mask.get(i, t))
                .fold((0.0, 0usize), |(s, n), t| (s + train.values.at2(i, t), n + 1));
            if n == 0 {
                Err(Error::Data(format!("feature {i} has no observed training values")))
            } else {
                Ok(sum / n as f64)
            }
        })
        .collect()
}

/// `s_t = mean_i |y_it - mu_i|` over observed features.
pub fn baseline_mean_deviation(train: &SeriesFrame, test: &SeriesFrame) -> Result<ScoreSeries> {
    if train.n_features() != test.n_features() {
        return Err(Error::shape(
            "mean-deviation baseline",
            &[train.n_features()],
            &[test.n_features()],
        ));
    }
    let mu = feature_means(train)?;
    let abs = Tensor::from_fn(&[test.n_features(), test.len()], |k| {
        let (i, t) = (k / test.len(), k % test.len());
        (test.values.at2(i, t) - mu[i]).abs()
    });
    Ok(ScoreSeries::from_squared_residuals(
        &abs,
        |i, t| test.mask.get(i, t),
        vec![1; test.len()],
    ))
}

fn masked_values(w: &Window) -> Vec<f64> {
    w.values
        .data()
        .iter()
        .zip(w.mask.as_slice())
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Mean Euclidean distance from one flattened window to its `k` nearest
/// rows of `train`.
pub fn knn_distance(query: &[f64], train: &[Vec<f64>], k: usize) -> Result<f64> {
    if k == 0 || k > train.len() {
        return Err(Error::Validation(format!("k = {k} must lie in [1, {}]", train.len())));
    }
    let mut d: Vec<f64> = train.iter().map(|t| sq_dist(query, t).sqrt()).collect();
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    let mut nearest = d[..k].to_vec();
    nearest.sort_by(f64::total_cmp);
    Ok(nearest.iter().sum::<f64>() / k as f64)
}

/// Window-level kNN distance, spread over each window's real timestamps and
/// averaged where windows overlap. Unobserved cells count as zero.
pub fn baseline_knn(train: &SeriesFrame, test: &SeriesFrame, windowing: Windowing, k: usize) -> Result<ScoreSeries> {
    if train.n_features() != test.n_features() {
        return Err(Error::shape(
            "kNN baseline",
            &[train.n_features()],
            &[test.n_features()],
        ));
    }
    let train_rows: Vec<Vec<f64>> = make_windows(train, windowing)?.iter().map(masked_values).collect();
    let windows = make_windows(test, windowing)?;
    let t_len = test.len();
    let mut sum = vec![0.0; t_len];
    let mut coverage = vec![0usize; t_len];
    for w in &windows {
        let d = knn_distance(&masked_values(w), &train_rows, k)?;
        let (s, e) = w.span();
        for t in s..e {
            sum[t] += d;
            coverage[t] += 1;
        }
    }
    let scores: Vec<f64> = sum.iter().zip(&coverage).map(|(s, &c)| s / c.max(1) as f64).collect();
    let per_feature = Tensor::new(&[1, t_len], scores.clone())?;
    Ok(ScoreSeries {
        scores,
        per_feature,
        coverage,
        scored_features: vec![1; t_len],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn frame(m: usize, data: Vec<f64>) -> SeriesFrame {
        let t = data.len() / m;
        SeriesFrame::from_values("e", Tensor::new(&[m, t], data).unwrap()).unwrap()
    }

    #[test]
    fn mean_deviation_cases() {
        let train = frame(2, vec![1.0, 3.0, -2.0, 2.0]);
        let at_mean = frame(2, vec![2.0, 2.0, 0.0, 0.0]);
        assert!(baseline_mean_deviation(&train, &at_mean)
            .unwrap()
            .scores
            .iter()
            .all(|&s| s == 0.0));
        let zero = frame(2, vec![1.0, -1.0, 1.0, -1.0]);
        let s = baseline_mean_deviation(&zero, &frame(2, vec![3.0, -3.0])).unwrap();
        assert_eq!(s.scores, vec![3.0]);
    }

    #[test]
    fn mean_deviation_hand_computed() {
        // means of the rows: 2, 0, 10
        let train = frame(
            3,
            vec![1.0, 3.0, 1.0, 3.0, -1.0, 1.0, -1.0, 1.0, 10.0, 10.0, 10.0, 10.0],
        );
        let test = frame(3, vec![2.0, 4.0, 0.0, 5.0, 3.0, 0.0, -6.0, 1.0, 10.0, 7.0, 16.0, 10.0]);
        let s = baseline_mean_deviation(&train, &test).unwrap();
        let expect = [3.0 / 3.0, 5.0 / 3.0, 14.0 / 3.0, 4.0 / 3.0];
        for (a, b) in s.scores.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn knn_identical_window_scores_zero() {
        let train = frame(1, (0..16).map(|i| i as f64).collect());
        let test = frame(1, (4..8).map(|i| i as f64).collect());
        let s = baseline_knn(&train, &test, Windowing { window_len: 4, step: 4 }, 1).unwrap();
        assert!(s.scores.iter().all(|&x| x == 0.0));
        assert!(baseline_knn(&train, &test, Windowing { window_len: 4, step: 4 }, 5).is_err());
    }

    #[test]
    fn knn_matches_pairwise_oracle() {
        let mut rng = crate::rng::seeded(8);
        let train: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        for k in [1, 3, 20] {
            for _ in 0..10 {
                let q: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
                let mut all: Vec<f64> = train
                    .iter()
                    .map(|t| q.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .collect();
                all.sort_by(f64::total_cmp);
                let oracle = all[..k].iter().sum::<f64>() / k as f64;
                assert!((knn_distance(&q, &train, k).unwrap() - oracle).abs() < 1e-12);
            }
        }
    }
}
