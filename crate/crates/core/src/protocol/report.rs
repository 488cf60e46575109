use std::collections::{BTreeMap, BTreeSet};

use super::config::MetricKind;
use super::manifest::RunManifest;
use crate::error::{Error, Result};

/// A variants × domains table of one metric.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub metric: MetricKind,
    pub domains: Vec<String>,
    /// `(variant, cell per domain)`; `None` where no manifest covers it.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

/// Rows are model variants in first-seen order, columns are held-out
/// domains sorted by name, cells are averaged metrics. With `metric` unset
/// every manifest must declare the same headline metric.
pub fn report_tables(manifests: &[RunManifest], metric: Option<MetricKind>) -> Result<ResultTable> {
    if manifests.is_empty() {
        return Err(Error::Config("no manifests to report".into()));
    }
    let metric = match metric {
        Some(m) => m,
        None => {
            let kinds: BTreeSet<MetricKind> = manifests.iter().map(|m| m.metric).collect();
            if kinds.len() > 1 {
                let names: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
                return Err(Error::MetricMismatch(names.join(" and ")));
            }
            manifests[0].metric
        }
    };
    let domains: Vec<String> = manifests
        .iter()
        .map(|m| m.protocol.held_out.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for m in manifests {
        let v = m.protocol.variant();
        if !order.contains(&v) {
            order.push(v.clone());
        }
        cells.insert((v, m.protocol.held_out.clone()), m.average.get(metric));
    }
    let rows = order
        .into_iter()
        .map(|v| {
            let row = domains.iter().map(|d| cells.get(&(v.clone(), d.clone())).copied()).collect();
            (v, row)
        })
        .collect();
    Ok(ResultTable { metric, domains, rows })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for d in &self.domains {
            out.push(',');
            out.push_str(&csv_field(d));
        }
        out.push('\n');
        for (v, row) in &self.rows {
            out.push_str(&csv_field(v));
            for c in row {
                out.push(',');
                out.push_str(&cell(*c));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text rendering with the metric in the corner.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once(format!("{} (%)", self.metric))
            .chain(self.domains.iter().cloned())
            .collect()];
        for (v, row) in &self.rows {
            grid.push(std::iter::once(v.clone()).chain(row.iter().map(|c| cell(*c))).collect());
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in grid.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, s)| if j == 0 { format!("{s:<w$}", w = widths[j]) } else { format!("{s:>w$}", w = widths[j]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}
