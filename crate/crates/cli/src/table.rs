//! Comparison tables: one block per metric, one row per (N, T), one column per
//! method, with the best cell of each row marked by an asterisk.

use mtp2_core::backtest::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Annualized standard deviation, in percent.
    AnnualizedStd,
    Sharpe,
    InformationRatio,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [Self::AnnualizedStd, Self::Sharpe, Self::InformationRatio];

    pub fn name(self) -> &'static str {
        match self {
            Self::AnnualizedStd => "annualized_std_x100",
            Self::Sharpe => "sharpe",
            Self::InformationRatio => "information_ratio",
        }
    }

    fn lower_is_better(self) -> bool {
        self == Self::AnnualizedStd
    }

    /// `NaN` when the method failed or the metric is undefined.
    pub fn value(self, metrics: Option<&Metrics>) -> f64 {
        let Some(m) = metrics else { return f64::NAN };
        match self {
            Self::AnnualizedStd => 100.0 * m.annualized_std,
            Self::Sharpe => m.sharpe.map_or(f64::NAN, |r| r.annualized),
            Self::InformationRatio => m.information_ratio.annualized,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TableRow {
    pub n: usize,
    pub t: usize,
    /// One entry per method; `None` when the backtest failed.
    pub cells: Vec<Option<Metrics>>,
}

#[derive(Debug, Clone)]
pub struct CompareTable {
    pub labels: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Index of the best non-NaN value; the first one wins ties.
pub fn best_index(values: &[f64], lower_is_better: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) if lower_is_better => *v < values[b],
            Some(b) => *v > values[b],
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.3}")
    }
}

impl CompareTable {
    /// Formatted cells of one metric block: `(N, T, cells)`.
    fn block(&self, metric: MetricKind) -> Vec<(usize, usize, Vec<String>)> {
        self.rows
            .iter()
            .map(|row| {
                let values: Vec<f64> = row.cells.iter().map(|c| metric.value(c.as_ref())).collect();
                let best = best_index(&values, metric.lower_is_better());
                let cells = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let mut s = format_value(*v);
                        if Some(i) == best {
                            s.push('*');
                        }
                        s
                    })
                    .collect();
                (row.n, row.t, cells)
            })
            .collect()
    }

    /// CSV records: header `metric,N,T,<labels>` then one record per metric and row.
    pub fn csv_records(&self) -> Vec<Vec<String>> {
        let mut header = vec!["metric".to_string(), "N".into(), "T".into()];
        header.extend(self.labels.iter().cloned());
        let mut out = vec![header];
        for metric in MetricKind::ALL {
            for (n, t, cells) in self.block(metric) {
                let mut rec = vec![metric.name().to_string(), n.to_string(), t.to_string()];
                rec.extend(cells);
                out.push(rec);
            }
        }
        out
    }

    /// Right-aligned text blocks, one per metric, separated by blank lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (b, metric) in MetricKind::ALL.into_iter().enumerate() {
            let block = self.block(metric);
            let mut lines: Vec<Vec<String>> = vec![];
            let mut header = vec!["N".to_string(), "T".into()];
            header.extend(self.labels.iter().cloned());
            lines.push(header);
            let mut last_n = None;
            for (n, t, cells) in block {
                let n_cell = if last_n == Some(n) {
                    String::new()
                } else {
                    n.to_string()
                };
                last_n = Some(n);
                let mut line = vec![n_cell, t.to_string()];
                line.extend(cells);
                lines.push(line);
            }
            let cols = lines[0].len();
            let widths: Vec<usize> = (0..cols)
                .map(|c| {
                    lines
                        .iter()
                        .map(|l| l[c].chars().count())
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            if b > 0 {
                out.push('\n');
            }
            out.push_str(metric.name());
            out.push('\n');
            for line in &lines {
                let mut text = String::new();
                for (c, cell) in line.iter().enumerate() {
                    if c == 2 {
                        text.push_str(" |");
                    }
                    if c > 0 {
                        text.push_str("  ");
                    }
                    text.push_str(&format!("{cell:>w$}", w = widths[c]));
                }
                out.push_str(text.trim_end());
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtp2_core::backtest::Ratio;

    fn metrics(std: f64, ir: f64) -> Metrics {
        let r = Ratio {
            monthly: ir,
            annualized: ir,
            zero_volatility: false,
        };
        Metrics {
            months: 10,
            monthly_std: std,
            annualized_std: std,
            sharpe: Some(r),
            information_ratio: r,
        }
    }

    #[test]
    fn ties_mark_the_first_column() {
        assert_eq!(best_index(&[1.0, 1.0, 2.0], true), Some(0));
        assert_eq!(best_index(&[1.0, 3.0, 3.0], false), Some(1));
        assert_eq!(best_index(&[f64::NAN, 2.0, 1.0], true), Some(2));
        assert_eq!(best_index(&[f64::NAN], true), None);
    }

    #[test]
    fn failed_methods_print_nan() {
        let table = CompareTable {
            labels: vec!["a".into(), "b".into()],
            rows: vec![TableRow {
                n: 10,
                t: 5,
                cells: vec![None, Some(metrics(0.12345, 0.5))],
            }],
        };
        let recs = table.csv_records();
        assert_eq!(recs[0], vec!["metric", "N", "T", "a", "b"]);
        assert_eq!(
            recs[1],
            vec!["annualized_std_x100", "10", "5", "nan", "12.345*"]
        );
        assert_eq!(recs[2][3..], ["nan".to_string(), "0.500*".to_string()]);
        let text = table.to_text();
        assert!(text.contains("nan  12.345*"));
    }
}
