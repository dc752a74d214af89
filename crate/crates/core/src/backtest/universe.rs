use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{MarketCaps, ReturnsPanel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniverseParams {
    /// Portfolio size.
    pub n: usize,
    /// Trailing days checked for completeness and correlation.
    pub history_days: usize,
    /// Minimum fraction of observed returns over the trailing window.
    pub completeness: f64,
    pub correlation_cut: f64,
    /// Days after the investment date that must be fully observed.
    pub holding_days: usize,
}

/// Outcome of the universe filter for one investment date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseSelection {
    /// Selected asset indices, ascending.
    pub assets: Vec<usize>,
    /// Survivors of the completeness and correlation filters, before the top-N cut; ascending.
    pub candidates: Vec<usize>,
    /// Assets removed by the correlation filter, in removal order.
    pub dropped_for_correlation: Vec<usize>,
}

fn correlations(
    panel: &ReturnsPanel,
    rows: std::ops::Range<usize>,
    idx: &[usize],
) -> Vec<Vec<f64>> {
    let len = rows.len() as f64;
    let cols: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| {
            let c = panel.returns.slice(ndarray::s![rows.clone(), i]);
            let m = c.sum() / len;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let k = idx.len();
    let mut out = vec![vec![0.0; k]; k];
    for a in 0..k {
        out[a][a] = 1.0;
        for b in (a + 1)..k {
            let r = if norms[a] > 0.0 && norms[b] > 0.0 {
                cols[a]
                    .iter()
                    .zip(&cols[b])
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    / (norms[a] * norms[b])
            } else {
                0.0
            };
            out[a][b] = r;
            out[b][a] = r;
        }
    }
    out
}

/// Assets eligible at investment row `start`: almost-complete trailing
/// history, complete holding window, no pair correlated above the cut, and
/// the `n` largest by market cap on row `start − 1`.
pub fn build_universe(
    panel: &ReturnsPanel,
    caps: &MarketCaps,
    start: usize,
    params: &UniverseParams,
) -> Result<UniverseSelection> {
    let t = panel.n_periods();
    if start == 0 || start + params.holding_days > t {
        return Err(Error::InvalidInput(format!(
            "investment row {start} needs history before it and {} rows after it",
            params.holding_days
        )));
    }
    let lookback = params.history_days.min(start);
    let past = start - lookback..start;
    let future = start..start + params.holding_days;
    let cap_row = caps.values.row(start - 1);

    let mut eligible = Vec::new();
    for i in 0..panel.n_assets() {
        if !cap_row[i].is_finite() || cap_row[i] <= 0.0 {
            continue;
        }
        let seen = past.clone().filter(|&s| panel.is_observed(s, i)).count();
        if (seen as f64) < params.completeness * lookback as f64 {
            continue;
        }
        if future.clone().all(|s| panel.is_observed(s, i)) {
            eligible.push(i);
        }
    }

    let corr = correlations(panel, past, &eligible);
    let mut pairs = Vec::new();
    for (a, row) in corr.iter().enumerate() {
        for (b, &c) in row.iter().enumerate().skip(a + 1) {
            if c > params.correlation_cut {
                pairs.push((c, a, b));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    // Larger cap first; ties go to the smaller asset id.
    let rank = |a: usize, b: usize| -> Ordering {
        cap_row[b]
            .total_cmp(&cap_row[a])
            .then_with(|| panel.assets[a].cmp(&panel.assets[b]))
    };
    let mut alive = vec![true; eligible.len()];
    let mut dropped = Vec::new();
    for (_, a, b) in pairs {
        if !(alive[a] && alive[b]) {
            continue;
        }
        let loser = if rank(eligible[a], eligible[b]) == Ordering::Less {
            b
        } else {
            a
        };
        alive[loser] = false;
        dropped.push(eligible[loser]);
    }
    let candidates: Vec<usize> = eligible
        .iter()
        .zip(&alive)
        .filter(|(_, ok)| **ok)
        .map(|(i, _)| *i)
        .collect();
    if candidates.len() < params.n {
        return Err(Error::UniverseTooSmall {
            required: params.n,
            available: candidates.len(),
        });
    }
    let mut ranked = candidates.clone();
    ranked.sort_by(|&a, &b| rank(a, b));
    let mut assets = ranked[..params.n].to_vec();
    assets.sort_unstable();
    Ok(UniverseSelection {
        assets,
        candidates,
        dropped_for_correlation: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{default_assets, default_dates};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn caps_for(panel: &ReturnsPanel, caps: &[f64]) -> MarketCaps {
        MarketCaps {
            dates: panel.dates.clone(),
            assets: panel.assets.clone(),
            values: Array2::from_shape_fn(panel.returns.dim(), |(_, i)| caps[i]),
        }
    }

    fn params(n: usize) -> UniverseParams {
        UniverseParams {
            n,
            history_days: 1260,
            completeness: 0.95,
            correlation_cut: 0.95,
            holding_days: 21,
        }
    }

    fn noise(seed: u64, t: usize, n: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, n), |_| 0.01 * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn top_n_by_cap() {
        let panel = ReturnsPanel::from_matrix(noise(1, 121, 5)).unwrap();
        let caps = caps_for(&panel, &[3.0, 5.0, 1.0, 4.0, 2.0]);
        let u = build_universe(&panel, &caps, 100, &params(3)).unwrap();
        assert_eq!(u.assets, vec![0, 1, 3]);
        assert!(matches!(
            build_universe(&panel, &caps, 100, &params(6)),
            Err(Error::UniverseTooSmall {
                required: 6,
                available: 5
            })
        ));
    }

    #[test]
    fn duplicated_assets_keep_the_larger_cap() {
        let mut r = noise(2, 121, 3);
        let copy = r.column(0).to_owned();
        r.column_mut(2).assign(&copy);
        let panel = ReturnsPanel::from_matrix(r).unwrap();
        let caps = caps_for(&panel, &[1.0, 2.0, 3.0]);
        let u = build_universe(&panel, &caps, 100, &params(2)).unwrap();
        assert_eq!(u.assets, vec![1, 2]);
        assert_eq!(u.dropped_for_correlation, vec![0]);
    }

    #[test]
    fn asset_without_future_returns_is_excluded() {
        let r = noise(3, 121, 3);
        let mut mask = Array2::from_elem((121, 3), true);
        for s in 100..121 {
            mask[[s, 2]] = false;
        }
        let panel =
            ReturnsPanel::with_mask(default_dates(121), default_assets(3), r, Some(mask)).unwrap();
        let caps = caps_for(&panel, &[1.0, 2.0, 100.0]);
        let u = build_universe(&panel, &caps, 100, &params(2)).unwrap();
        assert_eq!(u.assets, vec![0, 1]);
    }

    #[test]
    fn sparse_history_is_excluded() {
        let r = noise(4, 121, 3);
        let mut mask = Array2::from_elem((121, 3), true);
        for s in 0..10 {
            mask[[s, 0]] = false;
        }
        let panel =
            ReturnsPanel::with_mask(default_dates(121), default_assets(3), r, Some(mask)).unwrap();
        let caps = caps_for(&panel, &[10.0, 2.0, 1.0]);
        // 90/100 observed is below the 95% bar.
        let u = build_universe(&panel, &caps, 100, &params(2)).unwrap();
        assert_eq!(u.assets, vec![1, 2]);
    }
}
