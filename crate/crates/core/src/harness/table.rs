use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "sweep,metric,mean,stderr,trials,theory";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub theory: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// One entry per excluded trial or skipped metric.
    pub warnings: Vec<String>,
}

impl ResultTable {
    pub fn get(&self, sweep: f64, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.sweep == sweep && r.metric == metric)
    }

    /// Means of `metric` in sweep order.
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.sweep, r.mean))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let theory = r.theory.map(|t| format!("{t:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:e},{},{:e},{:e},{},{}",
                r.sweep, r.metric, r.mean, r.stderr, r.trials, theory
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::InvalidArgument(
                "missing or unexpected CSV header".into(),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number {s:?} in CSV")))
        };
        let mut rows = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::InvalidArgument(format!(
                    "CSV row has {} fields: {line}",
                    f.len()
                )));
            }
            rows.push(ResultRow {
                sweep: num(f[0])?,
                metric: f[1].to_string(),
                mean: num(f[2])?,
                stderr: num(f[3])?,
                trials: f[4]
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad trial count {:?}", f[4])))?,
                theory: if f[5].is_empty() {
                    None
                } else {
                    Some(num(f[5])?)
                },
            });
        }
        Ok(Self {
            rows,
            warnings: Vec::new(),
        })
    }
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pairwise (cascade) summation; the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error of the mean (sample variance, `n - 1`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sweep: f64, metric: &str, theory: Option<f64>) -> ResultRow {
        ResultRow {
            sweep,
            metric: metric.into(),
            mean: 1.0 / 3.0,
            stderr: 2.5e-7,
            trials: 17,
            theory,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(ResultTable::default().to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn one_row_two_lines() {
        let t = ResultTable {
            rows: vec![row(15.0, "proposed.r", None)],
            warnings: vec![],
        };
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(!csv.contains('\r'));
        assert!(csv.ends_with(",17,\n"));
    }

    #[test]
    fn csv_round_trip() {
        let t = ResultTable {
            rows: vec![
                row(-5.0, "a", Some(4.1666666666666664e-4)),
                row(1e-3, "b.c", None),
            ],
            warnings: vec![],
        };
        assert_eq!(ResultTable::from_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn emit_surfaces_path_on_error() {
        let err =
            emit_csv(&ResultTable::default(), Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    #[test]
    fn stats() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let (_, s1) = mean_stderr(&[7.0]);
        assert_eq!(s1, 0.0);
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        assert!((pairwise_sum(&xs) - 49950.0).abs() < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_row() -> impl Strategy<Value = ResultRow> {
            (
                any::<f64>().prop_filter("finite", |x| x.is_finite()),
                "[a-z_.]{1,12}",
                any::<f64>().prop_filter("finite", |x| x.is_finite()),
                0.0f64..1e3,
                any::<usize>(),
                proptest::option::of(0.0f64..1e6),
            )
                .prop_map(|(sweep, metric, mean, stderr, trials, theory)| ResultRow {
                    sweep,
                    metric,
                    mean,
                    stderr,
                    trials,
                    theory,
                })
        }

        proptest! {
            #[test]
            fn csv_round_trips_exactly(rows in proptest::collection::vec(any_row(), 0..20)) {
                let t = ResultTable { rows, warnings: Vec::new() };
                let back = ResultTable::from_csv(&t.to_csv()).unwrap();
                prop_assert_eq!(back.rows, t.rows);
            }

            #[test]
            fn stderr_is_invariant_under_shift(xs in proptest::collection::vec(-1e3f64..1e3, 2..40),
                                               c in -1e3f64..1e3) {
                let (m, s) = mean_stderr(&xs);
                let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
                let (m2, s2) = mean_stderr(&shifted);
                prop_assert!((m2 - m - c).abs() <= 1e-9 * (1.0 + m.abs() + c.abs()));
                prop_assert!((s2 - s).abs() <= 1e-7 * (1.0 + s));
            }
        }
    }
}
