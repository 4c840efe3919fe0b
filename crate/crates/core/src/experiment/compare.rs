use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{relative_fp_reduction, AggregateReport, EvalReport};

/// Side-by-side evaluation of models scored on the same frozen pools.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<EvalReport>,
    pub baseline: Option<String>,
    /// Relative FP reduction of each row's exact-mechanism precision over the
    /// baseline's; `None` where it is undefined or no baseline is named.
    pub fp_reduction: Vec<Option<f64>>,
}

impl Comparison {
    /// Refuses reports that were not evaluated on identical pools.
    pub fn new(rows: Vec<EvalReport>, baseline: Option<&str>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::config("nothing to compare"))?;
        for r in &rows[1..] {
            if r.pool_checksums != first.pool_checksums {
                let differing = first
                    .pool_checksums
                    .iter()
                    .find(|(k, v)| r.pool_checksums.get(*k) != Some(v))
                    .map(|(k, _)| k.clone())
                    .unwrap_or_else(|| "pool set".to_string());
                return Err(Error::Checksum {
                    path: format!("{} vs {} ({differing})", first.model, r.model),
                    expected: first.pool_checksums.get(&differing).cloned().unwrap_or_default(),
                    actual: r.pool_checksums.get(&differing).cloned().unwrap_or_default(),
                });
            }
        }
        let base = match baseline {
            Some(name) => Some(
                rows.iter()
                    .find(|r| r.model == name)
                    .ok_or_else(|| Error::config(format!("baseline `{name}` is not among the reports")))?
                    .exact_precision,
            ),
            None => None,
        };
        let fp_reduction = rows
            .iter()
            .map(|r| base.and_then(|b| relative_fp_reduction(r.exact_precision, b).ok()))
            .collect();
        Ok(Comparison {
            rows,
            baseline: baseline.map(str::to_string),
            fp_reduction,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fp_col = match &self.baseline {
            Some(b) => format!("FP red. vs {b}"),
            None => "FP red.".to_string(),
        };
        writeln!(
            out,
            "{:<14} {:>8} {:>13} {:>13} {:>7} {:>10} {:>17} {:>w$}",
            "Model",
            "ROC-AUC",
            "AP (stepwise)",
            "AP (baseline)",
            "F1",
            "Precision",
            "Wilson 95% CI",
            fp_col,
            w = fp_col.len().max(8)
        )
        .unwrap();
        for (r, red) in self.rows.iter().zip(&self.fp_reduction) {
            let red = red.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            writeln!(
                out,
                "{:<14} {:>8.4} {:>13.4} {:>13.4} {:>7.4} {:>10.4} {:>17} {:>w$}",
                r.model,
                r.roc_auc,
                r.ap_stepwise,
                r.ap_baseline,
                r.f1,
                r.exact_precision,
                format!("{:.4}-{:.4}", r.wilson_ci.0, r.wilson_ci.1),
                red,
                w = fp_col.len().max(8)
            )
            .unwrap();
        }
        out
    }
}

/// Loads per-seed report JSON files and builds their comparison.
pub fn compare_models(paths: &[PathBuf], baseline: Option<&str>) -> Result<Comparison> {
    let rows = paths
        .iter()
        .map(|p| io::read_json::<EvalReport>(p))
        .collect::<Result<Vec<_>>>()?;
    Comparison::new(rows, baseline)
}

/// Mean ± std table over seeds, one row per model.
pub fn aggregate_table(aggregates: &[AggregateReport]) -> String {
    let cols = ["roc_auc", "ap_stepwise", "ap_baseline", "f1", "exact_precision"];
    let mut out = String::new();
    write!(out, "{:<14}", "Model").unwrap();
    for c in cols {
        write!(out, " {c:>17}").unwrap();
    }
    out.push('\n');
    for a in aggregates {
        write!(out, "{:<14}", a.model).unwrap();
        for c in cols {
            let cell = a
                .get(c)
                .map_or_else(|| "n/a".to_string(), |m| format!("{:.4} ± {:.4}", m.mean, m.std));
            write!(out, " {cell:>17}").unwrap();
        }
        out.push('\n');
    }
    out
}
