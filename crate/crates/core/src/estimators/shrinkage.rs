use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix};
use crate::panel::ReturnsPanel;

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::RhoOutOfRange(rho));
    }
    Ok(())
}

fn mean_eigenvalue(s: &SymMatrix) -> f64 {
    s.diag().sum() / s.dim() as f64
}

/// `ρS + (1 − ρ)·λ̄·I` with `λ̄ = tr(S)/N`.
pub fn linear_shrinkage(s: &SymMatrix, rho: f64) -> Result<SymMatrix> {
    check_rho(rho)?;
    let target = mean_eigenvalue(s);
    let n = s.dim();
    let mut out = s.as_array() * rho;
    for i in 0..n {
        out[[i, i]] += (1.0 - rho) * target;
    }
    SymMatrix::symmetrize(out)
}

/// The same estimator computed on the eigenbasis of `S`: each eigenvalue
/// `λ_i` is replaced by `ρλ_i + (1 − ρ)λ̄`.
pub fn linear_shrinkage_eigen(s: &SymMatrix, rho: f64) -> Result<SymMatrix> {
    check_rho(rho)?;
    let target = mean_eigenvalue(s);
    let eig = sym_eigen(s)?;
    SymMatrix::symmetrize(eig.reconstruct_with(|l| rho * l + (1.0 - rho) * target))
}

/// Data-driven shrinkage weight on the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageIntensity {
    pub rho: f64,
    /// Set when `S` already equals its target, in which case `rho = 0`.
    pub degenerate: bool,
}

/// Ledoit–Wolf plug-in intensity for the panel's returns.
pub fn lw_optimal_rho(panel: &ReturnsPanel) -> Result<ShrinkageIntensity> {
    lw_optimal_rho_of(&panel.returns)
}

/// Ledoit–Wolf plug-in intensity for the columns of a T×N data matrix:
/// `ρ = 1 − min(b̄², d²)/d²` with `d² = ‖S − λ̄I‖²_F` and
/// `b̄² = T⁻² Σ_t ‖x_t x_tᵀ − S‖²_F` over centered rows.
pub fn lw_optimal_rho_of(x: &Array2<f64>) -> Result<ShrinkageIntensity> {
    let (t, n) = x.dim();
    if t < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: t,
        });
    }
    if n == 0 {
        return Err(Error::EmptyPanel);
    }
    let mean = x.mean_axis(Axis(0)).ok_or(Error::EmptyPanel)?;
    let centered = x - &mean.insert_axis(Axis(0));
    let s = centered.t().dot(&centered) / t as f64;
    let target = s.diag().sum() / n as f64;

    let mut d2 = 0.0;
    for ((i, j), v) in s.indexed_iter() {
        let e = if i == j { v - target } else { *v };
        d2 += e * e;
    }
    if !(d2 > 0.0) {
        return Ok(ShrinkageIntensity {
            rho: 0.0,
            degenerate: true,
        });
    }

    // ‖xxᵀ − S‖² = ‖x‖⁴ − 2xᵀSx + ‖S‖²
    let s_norm2: f64 = s.iter().map(|v| v * v).sum();
    let sx = centered.dot(&s);
    let mut b2 = 0.0;
    for (row, srow) in centered.rows().into_iter().zip(sx.rows()) {
        let xx = row.dot(&row);
        b2 += xx * xx - 2.0 * row.dot(&srow) + s_norm2;
    }
    b2 /= (t * t) as f64;
    let rho = (1.0 - b2.min(d2) / d2).clamp(0.0, 1.0);
    Ok(ShrinkageIntensity {
        rho,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sym(a: Array2<f64>) -> SymMatrix {
        SymMatrix::new(a).unwrap()
    }

    #[test]
    fn endpoints_and_hand_example() {
        let s = sym(array![[1.0, 0.3], [0.3, 3.0]]);
        assert_eq!(linear_shrinkage(&s, 1.0).unwrap().as_array(), s.as_array());
        assert_eq!(
            linear_shrinkage(&s, 0.0).unwrap().as_array(),
            &array![[2.0, 0.0], [0.0, 2.0]]
        );
        let d = sym(array![[1.0, 0.0], [0.0, 3.0]]);
        assert_eq!(
            linear_shrinkage(&d, 0.5).unwrap().as_array(),
            &array![[1.5, 0.0], [0.0, 2.5]]
        );
        assert!(matches!(
            linear_shrinkage(&s, 1.5),
            Err(Error::RhoOutOfRange(_))
        ));
        assert!(matches!(
            linear_shrinkage(&s, -0.1),
            Err(Error::RhoOutOfRange(_))
        ));
    }

    #[test]
    fn degenerate_intensity() {
        // Two columns with equal variance and zero covariance: S = λ̄I.
        let x = array![[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]];
        let r = lw_optimal_rho_of(&x).unwrap();
        assert_eq!(r.rho, 0.0);
        assert!(r.degenerate);
        let single = array![[0.1], [0.3], [-0.2]];
        let r = lw_optimal_rho_of(&single).unwrap();
        assert_eq!(r.rho, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn intensity_grows_with_sample_size() {
        let sd = [0.5, 1.0, 1.5, 2.0, 2.5];
        let draw = |t: usize, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Array2::from_shape_fn((t, sd.len()), |(_, j)| {
                sd[j] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
        };
        let small = lw_optimal_rho_of(&draw(50, 1)).unwrap().rho;
        let large = lw_optimal_rho_of(&draw(2000, 1)).unwrap().rho;
        assert!(large > small, "{large} vs {small}");
        assert!(large > 0.9);
    }

    #[test]
    fn intensity_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((30, 4), |_| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let t = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).unwrap();
        let c = &x - &mean;
        let s = c.t().dot(&c) / t;
        let lbar = s.diag().sum() / 4.0;
        let d2: f64 = (&s - &(Array2::<f64>::eye(4) * lbar))
            .iter()
            .map(|v| v * v)
            .sum();
        let mut b2 = 0.0;
        for row in c.rows() {
            let outer = Array2::from_shape_fn((4, 4), |(i, j)| row[i] * row[j]);
            b2 += (&outer - &s).iter().map(|v| v * v).sum::<f64>();
        }
        b2 /= t * t;
        let expected = 1.0 - b2.min(d2) / d2;
        let got = lw_optimal_rho_of(&x).unwrap().rho;
        assert!((got - expected).abs() < 1e-12);
    }
}
