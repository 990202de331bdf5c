//! Merge evaluation tables from several run directories into one comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use demorec::evalbench::{table_header, write_csv, Stat, TableRow, Variant};
use demorec::jsonl;
use demorec::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::rundir::Recorder;

/// Per-label aggregate across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub seeds: String,
    pub runs: usize,
    pub len_mean: f64,
    pub r_each_mean: f64,
    pub r_traj_mean: f64,
    pub r_traj_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed_mismatch: bool,
    pub budget_mismatch: bool,
    pub warnings: Vec<String>,
    pub summary: Vec<SummaryRow>,
    pub rows: Vec<TableRow>,
}

fn is_table(name: &str) -> bool {
    name.ends_with(".jsonl") && (name == "ablation.jsonl" || name.starts_with("table-") || name.starts_with("sweep-"))
}

fn table_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact {
            artifact: dir.display().to_string(),
            hint: "demorec evaluate".into(),
        });
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(is_table))
        .collect();
    files.sort();
    Ok(files)
}

/// Variants first in comparison order, then any other label alphabetically.
fn order_key(row: &TableRow) -> (usize, String, u64) {
    let rank = Variant::parse(&row.label).map(Variant::rank).unwrap_or(usize::MAX);
    (rank, row.label.clone(), row.seed)
}

pub fn build(mut rows: Vec<TableRow>) -> Report {
    rows.sort_by_key(order_key);
    let mut by_label: BTreeMap<&str, Vec<&TableRow>> = BTreeMap::new();
    for r in &rows {
        by_label.entry(&r.label).or_default().push(r);
    }
    let seed_sets: BTreeSet<Vec<u64>> = by_label
        .values()
        .map(|rs| rs.iter().map(|r| r.seed).collect::<BTreeSet<_>>().into_iter().collect())
        .collect();
    let budgets: BTreeSet<(usize, usize, usize)> = rows
        .iter()
        .map(|r| (r.rounds, r.episodes_per_round, r.episodes))
        .collect();
    let mut warnings = Vec::new();
    let seed_mismatch = seed_sets.len() > 1;
    if seed_mismatch {
        warnings.push(format!("runs do not share one seed set: {seed_sets:?}"));
    }
    let budget_mismatch = budgets.len() > 1;
    if budget_mismatch {
        warnings.push(format!(
            "training or evaluation budgets differ (rounds, episodes per round, eval episodes): {budgets:?}"
        ));
    }
    let mut summary: Vec<SummaryRow> = by_label
        .iter()
        .map(|(label, rs)| {
            let mean = |f: fn(&TableRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            let traj: Vec<f64> = rs.iter().map(|r| r.r_traj_mean).collect();
            let seeds: Vec<String> = rs.iter().map(|r| r.seed.to_string()).collect();
            SummaryRow {
                label: label.to_string(),
                seeds: seeds.join(" "),
                runs: rs.len(),
                len_mean: mean(|r| r.len_mean),
                r_each_mean: mean(|r| r.r_each_mean),
                r_traj_mean: Stat::of(&traj).mean,
                r_traj_std: Stat::of(&traj).std,
            }
        })
        .collect();
    summary.sort_by_key(|s| {
        let rank = Variant::parse(&s.label).map(Variant::rank).unwrap_or(usize::MAX);
        (rank, s.label.clone())
    });
    Report {
        seed_mismatch,
        budget_mismatch,
        warnings,
        summary,
        rows,
    }
}

pub fn report(rec: &mut Recorder, dirs: &[PathBuf]) -> Result<Report> {
    let out = fs::canonicalize(rec.root())?;
    let mut rows = Vec::new();
    for dir in dirs {
        if fs::canonicalize(dir).is_ok_and(|d| d == out) {
            return Err(Error::usage("report output must be a directory other than its inputs"));
        }
        let files = table_files(dir)?;
        if files.is_empty() {
            return Err(Error::MissingArtifact {
                artifact: format!("{}/table-*.jsonl", dir.display()),
                hint: "demorec evaluate".into(),
            });
        }
        for f in files {
            rows.extend(jsonl::read::<TableRow>(&f, &table_header())?);
            rec.input(&f)?;
        }
    }
    let report = build(rows);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_csv(&rec.path("report.csv"), &report.rows)?;
    rec.output("report.csv")?;
    write_csv(&rec.path("summary.csv"), &report.summary)?;
    rec.output("summary.csv")?;
    rec.write_json("report.json", &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, seed: u64, rounds: usize, r_traj: f64) -> TableRow {
        TableRow {
            label: label.into(),
            seed,
            rounds,
            episodes_per_round: 2,
            episodes: 10,
            len_mean: 1.0,
            len_std: 0.0,
            r_each_mean: 1.0,
            r_each_std: 0.0,
            r_traj_mean: r_traj,
            r_traj_std: 0.0,
        }
    }

    #[test]
    fn single_run_single_row() {
        let r = build(vec![row("full", 0, 10, 5.0)]);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.summary.len(), 1);
        assert!(!r.seed_mismatch && !r.budget_mismatch);
    }

    #[test]
    fn variants_follow_comparison_order() {
        let r = build(vec![
            row("no_irl_baseline", 0, 10, 1.0),
            row("no_w", 0, 10, 2.0),
            row("full", 0, 10, 3.0),
            row("no_w_irl", 0, 10, 4.0),
            row("no_w_env", 0, 10, 5.0),
        ]);
        let labels: Vec<&str> = r.summary.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["full", "no_w", "no_w_env", "no_w_irl", "no_irl_baseline"]);
    }

    #[test]
    fn mismatches_are_flagged() {
        let r = build(vec![row("full", 0, 10, 1.0), row("no_w", 1, 10, 1.0)]);
        assert!(r.seed_mismatch);
        assert!(!r.budget_mismatch);
        let r = build(vec![row("full", 0, 10, 1.0), row("no_w", 0, 20, 1.0)]);
        assert!(!r.seed_mismatch);
        assert!(r.budget_mismatch);
    }
}
