use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::jitter::JitterParams;
use crate::tpe::{FailedTrial, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "FSID")]
    Fsid,
    #[serde(rename = "SID")]
    Sid,
    #[serde(rename = "IVAD")]
    Ivad,
    #[serde(rename = "BO-DA")]
    BoDa,
}

impl Condition {
    /// Report order.
    pub const ALL: [Condition; 4] = [Condition::Fsid, Condition::Sid, Condition::Ivad, Condition::BoDa];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Fsid => "FSID",
            Condition::Sid => "SID",
            Condition::Ivad => "IVAD",
            Condition::BoDa => "BO-DA",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub condition: Condition,
    pub seed: u64,
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub wall_time: f64,
    /// Checkpoint of the evaluated model, relative to the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Training-set file the model was fitted on, relative to the output
    /// directory.
    pub dataset: Option<PathBuf>,
}

/// Search trace of the augmentation optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    pub trials: Vec<Trial>,
    pub failures: Vec<FailedTrial>,
    pub best: JitterParams,
    pub best_objective: f64,
}

impl SearchLog {
    /// Running maximum of the objective in trial order.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.max(t.objective);
                best
            })
            .collect()
    }
}

/// Append-only record of everything a run produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultStore {
    pub rows: Vec<ResultRow>,
    pub search: Option<SearchLog>,
}

pub const STORE_FILE: &str = "store.json";

impl ResultStore {
    /// Replaces any rows for the conditions in `rows`, keeping the rest.
    pub fn merge(&mut self, rows: Vec<ResultRow>) {
        self.rows.retain(|r| !rows.iter().any(|n| n.condition == r.condition));
        self.rows.extend(rows);
        self.rows.sort_by_key(|r| r.condition);
    }

    pub fn mean_accuracy(&self, condition: Condition) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.condition == condition).map(|r| r.accuracy).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(STORE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(dir: &Path) -> Result<Self, HarnessError> {
        if dir.join(STORE_FILE).exists() {
            Self::load(dir)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("store serializes");
        write(&dir.join(STORE_FILE), &text)
    }
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("condition,seed,acc,pre,rec,wall_time\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.condition, r.seed, r.accuracy, r.precision_weighted, r.recall_weighted, r.wall_time
        )
        .unwrap();
    }
    out
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summary_markdown(store: &ResultStore) -> String {
    let mut out = String::from("| condition | seeds | accuracy | precision | recall |\n|---|---|---|---|---|\n");
    for c in Condition::ALL {
        let rows: Vec<&ResultRow> = store.rows.iter().filter(|r| r.condition == c).collect();
        if rows.is_empty() {
            continue;
        }
        let cell = |f: fn(&ResultRow) -> f64| {
            let (m, s) = mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            format!("{m:.4} ± {s:.4}")
        };
        writeln!(
            out,
            "| {c} | {} | {} | {} | {} |",
            rows.len(),
            cell(|r| r.accuracy),
            cell(|r| r.precision_weighted),
            cell(|r| r.recall_weighted)
        )
        .unwrap();
    }
    if let Some(s) = &store.search {
        let p = s.best.to_array();
        writeln!(
            out,
            "\nbest jitter: brightness {:.4}, contrast {:.4}, saturation {:.4}, hue {:.4} (objective {:.4}, {} trials, {} failed)",
            p[0],
            p[1],
            p[2],
            p[3],
            s.best_objective,
            s.trials.len(),
            s.failures.len()
        )
        .unwrap();
    }
    out
}

pub fn trials_csv(log: &SearchLog) -> String {
    let mut out = String::from("trial,brightness,contrast,saturation,hue,objective\n");
    for t in &log.trials {
        write!(out, "{}", t.index).unwrap();
        for p in &t.params {
            write!(out, ",{p:.6}").unwrap();
        }
        writeln!(out, ",{:.6}", t.objective).unwrap();
    }
    out
}

/// Standalone line chart of the running best objective.
pub fn best_so_far_svg(log: &SearchLog) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let curve = log.best_so_far();
    let raw: Vec<f64> = log.trials.iter().map(|t| t.objective).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let n = curve.len().max(2) - 1;
    let x = |i: usize| m + (w - 2.0 * m) * i as f64 / n as f64;
    let y = |v: f64| h - m - (h - 2.0 * m) * (v - lo) / (hi - lo);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    )
    .unwrap();
    for (i, v) in raw.iter().enumerate() {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="gray"/>"#, x(i), y(*v)).unwrap();
    }
    let pts: Vec<String> = curve.iter().enumerate().map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v))).collect();
    writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, pts.join(" ")).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">trial</text>"#, w / 2.0, h - 15.0).unwrap();
    writeln!(s, r#"<text x="15" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">objective (best so far)</text>"#, h / 2.0, h / 2.0).unwrap();
    writeln!(s, r#"<text x="{m}" y="{}" font-family="sans-serif" font-size="10">{hi:.3}</text>"#, m - 5.0).unwrap();
    writeln!(s, r#"<text x="{m}" y="{}" font-family="sans-serif" font-size="10">{lo:.3}</text>"#, h - m + 15.0).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Writes results.csv, summary.md and, when a search ran, trials.csv and
/// best_so_far.svg. Returns the paths written.
pub fn emit_report(store: &ResultStore, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if store.rows.is_empty() && store.search.is_none() {
        return Err(HarnessError::NothingToReport);
    }
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<(), HarnessError> {
        let p = out.join(name);
        write(&p, &text)?;
        written.push(p);
        Ok(())
    };
    put("results.csv", results_csv(&store.rows))?;
    put("summary.md", summary_markdown(store))?;
    if let Some(log) = &store.search {
        put("trials.csv", trials_csv(log))?;
        put("best_so_far.svg", best_so_far_svg(log))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(c: Condition, seed: u64, acc: f64) -> ResultRow {
        ResultRow {
            condition: c,
            seed,
            accuracy: acc,
            precision_weighted: acc,
            recall_weighted: acc,
            wall_time: 1.5,
            checkpoint: None,
            dataset: None,
        }
    }

    fn store() -> ResultStore {
        let mut s = ResultStore::default();
        for c in [Condition::BoDa, Condition::Ivad, Condition::Sid, Condition::Fsid] {
            s.merge((0..3).map(|seed| row(c, seed, 0.5 + seed as f64 / 10.0)).collect());
        }
        s
    }

    #[test]
    fn csv_rows_and_format() {
        let csv = results_csv(&store().rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "condition,seed,acc,pre,rec,wall_time");
        assert_eq!(lines[1], "FSID,0,0.500000,0.500000,0.500000,1.500000");
        assert!(lines[12].starts_with("BO-DA,2,0.700000"));
    }

    #[test]
    fn summary_order() {
        let md = summary_markdown(&store());
        let body: Vec<&str> = md.lines().skip(2).collect();
        assert_eq!(body.len(), 4);
        for (line, c) in body.iter().zip(Condition::ALL) {
            assert!(line.starts_with(&format!("| {c} | 3 | 0.6000 ± 0.1000")), "{line}");
        }
    }

    #[test]
    fn merge_replaces_condition() {
        let mut s = store();
        s.merge(vec![row(Condition::Sid, 9, 0.1)]);
        assert_eq!(s.rows.len(), 10);
        assert_eq!(s.rows.iter().filter(|r| r.condition == Condition::Sid).count(), 1);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store();
        let trials: Vec<Trial> = [0.2, 0.5, 0.4, 0.7]
            .iter()
            .enumerate()
            .map(|(i, &v)| Trial { index: i, params: vec![0.1, 0.2, 0.3, 0.05], objective: v })
            .collect();
        s.search = Some(SearchLog {
            trials,
            failures: vec![],
            best: JitterParams::from_array([0.1, 0.2, 0.3, 0.05]),
            best_objective: 0.7,
        });
        assert_eq!(s.search.as_ref().unwrap().best_so_far(), vec![0.2, 0.5, 0.5, 0.7]);
        let files = emit_report(&s, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(trials.lines().next().unwrap(), "trial,brightness,contrast,saturation,hue,objective");
        assert_eq!(trials.lines().nth(1).unwrap(), "0,0.100000,0.200000,0.300000,0.050000,0.200000");
        let svg = std::fs::read_to_string(dir.path().join("best_so_far.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline") && !svg.contains("href"));
        s.save(dir.path()).unwrap();
        assert_eq!(ResultStore::load(dir.path()).unwrap(), s);
    }

    #[test]
    fn empty_store_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_report(&ResultStore::default(), dir.path()), Err(HarnessError::NothingToReport)));
    }
}
