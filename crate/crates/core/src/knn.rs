//! Brute-force k-nearest-neighbour search and regression under a Minkowski metric.
//!
//! Distance ties are broken by the lower training index.

use crate::error::{Error, Result};

/// `sum |a_i - b_i|^p`. Monotone in the Minkowski distance, so it ranks
/// neighbours identically without the final root.
pub fn minkowski_pow(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    } else if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum()
    }
}

pub fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    minkowski_pow(a, b, p).powf(1.0 / p)
}

/// Indices of the `k` nearest rows of `xs` to `query`, nearest first, skipping `exclude`.
pub fn nearest(xs: &[Vec<f64>], query: &[f64], k: usize, p: f64, exclude: Option<usize>) -> Vec<(f64, usize)> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, x) in xs.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let d = minkowski_pow(x, query, p);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        // Stable insertion: equal distances keep the earlier (lower) index first.
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        if best.len() > k {
            best.pop();
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnRegressor {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub k: usize,
    pub p: f64,
}

impl KnnRegressor {
    pub fn fit(xs: Vec<Vec<f64>>, ys: Vec<f64>, k: usize, p: f64) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyLabeledSet);
        }
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch(xs.len(), ys.len()));
        }
        if k == 0 || !(p >= 1.0) {
            return Err(Error::InvalidConfig(format!("k = {k}, p = {p}: need k >= 1 and p >= 1")));
        }
        let d = xs[0].len();
        if let Some(x) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(KnnRegressor { xs, ys, k, p })
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn neighbors(&self, query: &[f64], exclude: Option<usize>) -> Vec<(f64, usize)> {
        nearest(&self.xs, query, self.k, self.p, exclude)
    }

    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: query.len() });
        }
        Ok(self.mean_target(&self.neighbors(query, None)))
    }

    pub fn mean_target(&self, nb: &[(f64, usize)]) -> f64 {
        nb.iter().map(|&(_, i)| self.ys[i]).sum::<f64>() / nb.len() as f64
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.xs.push(x);
        self.ys.push(y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lower_index() {
        let xs = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let nb = nearest(&xs, &[0.0], 2, 2.0, None);
        assert_eq!(nb.iter().map(|n| n.1).collect::<Vec<_>>(), vec![0, 1]);
        let nb = nearest(&xs, &[0.0], 2, 2.0, Some(0));
        assert_eq!(nb.iter().map(|n| n.1).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn brute_force_agreement() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![((i * 7) % 13) as f64, ((i * 5) % 11) as f64]).collect();
        for p in [1.0, 2.0, 5.0] {
            let q = [4.3, 6.1];
            let mut all: Vec<(f64, usize)> = xs.iter().enumerate().map(|(i, x)| (minkowski(x, &q, p), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got: Vec<usize> = nearest(&xs, &q, 5, p, None).iter().map(|n| n.1).collect();
            let want: Vec<usize> = all[..5].iter().map(|n| n.1).collect();
            assert_eq!(got, want, "p={p}");
        }
    }

    #[test]
    fn dimension_checked() {
        let m = KnnRegressor::fit(vec![vec![0.0, 1.0]], vec![0.5], 1, 2.0).unwrap();
        assert!(matches!(m.predict(&[0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(KnnRegressor::fit(vec![], vec![], 1, 2.0).is_err());
    }
}
