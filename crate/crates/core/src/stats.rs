//! Sample moments and rank correlation.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize_in_place, SymMatrix};
use crate::panel::ReturnsPanel;

/// Normalization of the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Denominator {
    /// Divide by T (the Gaussian maximum-likelihood convention).
    #[serde(rename = "T")]
    T,
    /// Divide by T − 1 (the unbiased convention).
    #[serde(rename = "T-1")]
    TMinusOne,
}

impl Denominator {
    pub fn as_str(self) -> &'static str {
        match self {
            Denominator::T => "T",
            Denominator::TMinusOne => "T-1",
        }
    }
}

/// A symmetric matrix with unit diagonal and entries in [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix(SymMatrix);

impl CorrelationMatrix {
    pub fn new(m: SymMatrix) -> Result<Self> {
        let n = m.dim();
        for i in 0..n {
            if m[[i, i]] != 1.0 {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                if m[[i, j]].abs() > 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "correlation ({i}, {j}) = {} outside [-1, 1]",
                        m[[i, j]]
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }
}

impl std::ops::Deref for CorrelationMatrix {
    type Target = Array2<f64>;
    fn deref(&self) -> &Array2<f64> {
        &self.0
    }
}

pub fn sample_mean(panel: &ReturnsPanel) -> Result<Array1<f64>> {
    column_means(&panel.returns)
}

fn column_means(x: &Array2<f64>) -> Result<Array1<f64>> {
    x.mean_axis(Axis(0)).ok_or(Error::EmptyPanel)
}

/// Covariance of the columns of a T×N data matrix.
pub fn covariance_of(x: &Array2<f64>, denominator: Denominator) -> Result<SymMatrix> {
    let t = x.nrows();
    if t == 0 || x.ncols() == 0 {
        return Err(Error::EmptyPanel);
    }
    let den = match denominator {
        Denominator::T => t as f64,
        Denominator::TMinusOne => {
            if t < 2 {
                return Err(Error::DegenerateDenominator { t });
            }
            (t - 1) as f64
        }
    };
    let mean = column_means(x)?;
    let centered = x - &mean.insert_axis(Axis(0));
    let mut s = centered.t().dot(&centered) / den;
    symmetrize_in_place(&mut s);
    SymMatrix::new(s)
}

pub fn sample_covariance(panel: &ReturnsPanel, denominator: Denominator) -> Result<SymMatrix> {
    covariance_of(&panel.returns, denominator)
}

/// Divides a covariance by the outer product of its standard deviations.
pub fn covariance_to_correlation(s: &SymMatrix, assets: &[String]) -> Result<CorrelationMatrix> {
    let n = s.dim();
    let sd: Vec<f64> = (0..n).map(|i| s[[i, i]].sqrt()).collect();
    if let Some(i) = sd.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroVarianceColumn {
            asset: assets.get(i).cloned().unwrap_or_else(|| i.to_string()),
        });
    }
    let mut r = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            r[[i, j]] = if i == j {
                1.0
            } else {
                (s[[i, j]] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            };
        }
    }
    symmetrize_in_place(&mut r);
    CorrelationMatrix::new(SymMatrix::new(r)?)
}

/// Pearson correlation matrix of the panel columns.
pub fn sample_correlation(panel: &ReturnsPanel) -> Result<CorrelationMatrix> {
    let s = sample_covariance(panel, Denominator::T)?;
    covariance_to_correlation(&s, &panel.assets)
}

#[inline]
fn sign(d: f64) -> i64 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// `Σ_{t<t'} sign(x_t − x_t')·sign(y_t − y_t')` by direct enumeration.
pub fn kendall_concordance_naive(x: ArrayView1<f64>, y: ArrayView1<f64>) -> i64 {
    let n = x.len();
    let mut s = 0;
    for t in 0..n {
        for u in (t + 1)..n {
            s += sign(x[t] - x[u]) * sign(y[t] - y[u]);
        }
    }
    s
}

fn tie_pairs<T: PartialEq>(sorted: &[T]) -> i64 {
    let mut total = 0;
    let mut run = 1i64;
    for k in 1..sorted.len() {
        if sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts strict inversions while merge-sorting `v` in place.
fn merge_sort_inversions(v: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (lo, hi) = v.split_at_mut(mid);
        merge_sort_inversions(lo, &mut buf[..mid]) + merge_sort_inversions(hi, &mut buf[mid..])
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Same quantity as [`kendall_concordance_naive`] in O(T log T) (Knight's
/// algorithm). Integer arithmetic, so the two agree exactly.
pub fn kendall_concordance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> i64 {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap_or(Ordering::Equal)
            .then(y[a].partial_cmp(&y[b]).unwrap_or(Ordering::Equal))
    });
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let xy: Vec<(f64, f64)> = idx.iter().map(|&i| (x[i], y[i])).collect();
    let n1 = tie_pairs(&xs);
    let n3 = tie_pairs(&xy);
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_sort_inversions(&mut ys, &mut buf);
    let n2 = tie_pairs(&ys);
    let n0 = (n as i64) * (n as i64 - 1) / 2;
    n0 - n1 - n2 + n3 - 2 * swaps
}

/// Kendall's tau-a: concordance divided by `T choose 2`; ties contribute 0.
pub fn kendall_tau(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.len() as i64;
    kendall_concordance(x, y) as f64 / ((n * (n - 1) / 2) as f64)
}

/// Matrix of `sin(π/2 · τ̂_ij)` with an exact unit diagonal.
pub fn kendall_tau_matrix(panel: &ReturnsPanel) -> Result<CorrelationMatrix> {
    let t = panel.n_periods();
    if t < 2 {
        return Err(Error::EmptyPanel);
    }
    let n = panel.n_assets();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let denom = ((t as i64) * (t as i64 - 1) / 2) as f64;
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let tau = kendall_concordance(panel.column(i), panel.column(j)) as f64 / denom;
            (FRAC_PI_2 * tau).sin()
        })
        .collect();
    let mut m = Array2::<f64>::eye(n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[[i, j]] = v;
        m[[j, i]] = v;
    }
    CorrelationMatrix::new(SymMatrix::new(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn panel(rows: Array2<f64>) -> ReturnsPanel {
        ReturnsPanel::from_matrix(rows).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            sample_mean(&panel(array![[0.1, 0.2]])).unwrap(),
            array![0.1, 0.2]
        );
        assert_eq!(
            sample_mean(&panel(array![[1.0, 0.0], [3.0, 0.0]])).unwrap(),
            array![2.0, 0.0]
        );
        let m = sample_mean(&panel(array![[0.01, 0.02], [0.03, -0.02], [0.02, 0.03]])).unwrap();
        assert_abs_diff_eq!(m[0], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn covariance_examples() {
        let s = sample_covariance(&panel(array![[1.0, 2.0], [1.0, 2.0]]), Denominator::T).unwrap();
        assert_eq!(*s, Array2::<f64>::zeros((2, 2)));
        let s = sample_covariance(&panel(array![[0.0, 0.0], [2.0, 2.0]]), Denominator::T).unwrap();
        assert_eq!(*s, array![[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(
            sample_covariance(&panel(array![[1.0]]), Denominator::TMinusOne),
            Err(Error::DegenerateDenominator { t: 1 })
        ));
    }

    #[test]
    fn covariance_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((10_000, 2), |_| StandardNormal.sample(&mut rng));
        let s = sample_covariance(&panel(x), Denominator::TMinusOne).unwrap();
        let eye = Array2::<f64>::eye(2);
        for (a, b) in s.iter().zip(eye.iter()) {
            assert!((a - b).abs() < 0.05);
        }
    }

    #[test]
    fn covariance_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Array2<f64> = Array2::from_shape_fn((37, 6), |_| StandardNormal.sample(&mut rng));
        let s = sample_covariance(&panel(x.clone()), Denominator::T).unwrap();
        let (t, n) = x.dim();
        for i in 0..n {
            for j in 0..n {
                let mi: f64 = (0..t).map(|k| x[[k, i]]).sum::<f64>() / t as f64;
                let mj: f64 = (0..t).map(|k| x[[k, j]]).sum::<f64>() / t as f64;
                let mut acc = 0.0;
                for k in 0..t {
                    acc += (x[[k, i]] - mi) * (x[[k, j]] - mj);
                }
                assert_abs_diff_eq!(s[[i, j]], acc / t as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn correlation_examples() {
        let r = sample_correlation(&panel(array![[1.0, 2.0], [2.0, 4.0], [3.0, 5.0]])).unwrap();
        assert_eq!(r[[0, 0]], 1.0);
        assert_eq!(r[[1, 1]], 1.0);
        assert!((r[[0, 1]] - 0.981).abs() <= 0.001);
        let r = sample_correlation(&panel(array![[1.0, 3.0], [2.0, 5.0], [4.0, 9.0]])).unwrap();
        assert_abs_diff_eq!(r[[0, 1]], 1.0, epsilon = 1e-12);
        match sample_correlation(&panel(array![[1.0, 1.0], [2.0, 1.0]])) {
            Err(Error::ZeroVarianceColumn { asset }) => assert_eq!(asset, "A0001"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kendall_examples() {
        let k = kendall_tau_matrix(&panel(array![[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]])).unwrap();
        assert_eq!(k[[0, 1]], 1.0);
        let k = kendall_tau_matrix(&panel(array![[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]])).unwrap();
        assert_eq!(k[[0, 1]], -1.0);
        let k = kendall_tau_matrix(&panel(array![[1.0, 1.0], [2.0, 3.0], [3.0, 2.0]])).unwrap();
        assert_abs_diff_eq!(k[[0, 1]], 0.5, epsilon = 1e-15);
        assert_eq!(k[[0, 0]], 1.0);
        assert!(matches!(
            kendall_tau_matrix(&panel(array![[1.0, 2.0]])),
            Err(Error::EmptyPanel)
        ));
    }

    #[test]
    fn kendall_handles_ties() {
        let x = array![1.0, 1.0, 2.0, 2.0, 3.0];
        let y = array![5.0, 4.0, 4.0, 4.0, 1.0];
        assert_eq!(
            kendall_concordance(x.view(), y.view()),
            kendall_concordance_naive(x.view(), y.view())
        );
    }

    proptest! {
        #[test]
        fn fast_kendall_matches_naive(
            data in prop::collection::vec((-3i32..3, -3i32..3), 2..60)
        ) {
            // Small integer grids force plenty of ties.
            let x: Array1<f64> = data.iter().map(|p| p.0 as f64).collect();
            let y: Array1<f64> = data.iter().map(|p| p.1 as f64 * 0.5).collect();
            prop_assert_eq!(
                kendall_concordance(x.view(), y.view()),
                kendall_concordance_naive(x.view(), y.view())
            );
        }
    }
}
