//! Result rows, their CSV form, and recall/timing summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::Method;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str = "object_id,scene_id,noise_level,method,adi,add,correct,runtime_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub object_id: String,
    pub scene_id: String,
    pub noise_level: f64,
    pub method: Method,
    pub adi: f64,
    pub add: f64,
    pub correct: bool,
    pub runtime_ms: f64,
}

/// Identity of a row, independent of its measured values.
pub type RowKey = (String, String, u64, Method);

impl ResultRow {
    pub fn key(&self) -> RowKey {
        (
            self.object_id.clone(),
            self.scene_id.clone(),
            self.noise_level.to_bits(),
            self.method,
        )
    }

    fn sort_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.object_id
            .cmp(&other.object_id)
            .then_with(|| self.scene_id.cmp(&other.scene_id))
            .then(self.noise_level.total_cmp(&other.noise_level))
            .then(self.method.cmp(&other.method))
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.object_id,
            self.scene_id,
            self.noise_level,
            self.method,
            self.adi,
            self.add,
            u8::from(self.correct),
            self.runtime_ms
        )
    }

    pub fn parse_csv_line(line: &str, lineno: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(Error::parse(lineno, format!("expected 8 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(lineno, format!("bad {what} {s:?}")))
        };
        let correct = match f[6] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::parse(lineno, format!("bad correct flag {other:?}"))),
        };
        if f[0].is_empty() || f[1].is_empty() {
            return Err(Error::parse(lineno, "empty object or scene id"));
        }
        Ok(Self {
            object_id: f[0].to_string(),
            scene_id: f[1].to_string(),
            noise_level: num(f[2], "noise level")?,
            method: f[3].parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?,
            adi: num(f[4], "adi")?,
            add: num(f[5], "add")?,
            correct,
            runtime_ms: num(f[7], "runtime")?,
        })
    }
}

/// Sorts by (object, scene, noise, method) and keeps the last row per key.
pub fn normalize_rows(mut rows: Vec<ResultRow>) -> Vec<ResultRow> {
    rows.reverse();
    rows.sort_by(ResultRow::sort_cmp);
    rows.dedup_by(|a, b| a.key() == b.key());
    rows
}

pub fn results_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(80 * (rows.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("object_id")) {
            continue;
        }
        rows.push(ResultRow::parse_csv_line(line, i + 1)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallCell {
    pub object_id: String,
    pub method: Method,
    pub noise_level: f64,
    pub recall: f64,
    pub scenes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRecall {
    pub method: Method,
    pub noise_level: f64,
    /// Mean of the per-object recalls.
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub method: Method,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub cells: Vec<RecallCell>,
    pub means: Vec<MeanRecall>,
    pub timings: Vec<Timing>,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

impl BenchSummary {
    pub fn from_rows(rows: &[ResultRow]) -> Self {
        let mut groups: BTreeMap<(String, Method, u64), (usize, usize, f64)> = BTreeMap::new();
        for r in rows {
            let e = groups
                .entry((r.object_id.clone(), r.method, r.noise_level.to_bits()))
                .or_insert((0, 0, r.noise_level));
            e.0 += 1;
            e.1 += usize::from(r.correct);
        }
        let cells: Vec<RecallCell> = groups
            .into_iter()
            .map(|((object_id, method, _), (n, hits, noise_level))| RecallCell {
                object_id,
                method,
                noise_level,
                recall: hits as f64 / n as f64,
                scenes: n,
            })
            .collect();

        let mut per_method: BTreeMap<(Method, u64), (f64, usize, f64)> = BTreeMap::new();
        for c in &cells {
            let e = per_method
                .entry((c.method, c.noise_level.to_bits()))
                .or_insert((0.0, 0, c.noise_level));
            e.0 += c.recall;
            e.1 += 1;
        }
        // Bit order equals numeric order for the non-negative noise levels.
        let means: Vec<MeanRecall> = per_method
            .into_iter()
            .map(|((method, _), (sum, n, noise_level))| MeanRecall {
                method,
                noise_level,
                recall: sum / n as f64,
            })
            .collect();

        let mut by_method: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
        for r in rows {
            by_method.entry(r.method).or_default().push(r.runtime_ms);
        }
        let timings = by_method
            .into_iter()
            .map(|(method, mut t)| {
                t.sort_by(f64::total_cmp);
                Timing {
                    method,
                    p50_ms: percentile(&t, 0.50),
                    p90_ms: percentile(&t, 0.90),
                    p99_ms: percentile(&t, 0.99),
                    mean_ms: t.iter().sum::<f64>() / t.len() as f64,
                }
            })
            .collect();
        Self { cells, means, timings }
    }

    pub fn recall(&self, object_id: &str, method: Method, noise_level: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.object_id == object_id && c.method == method && c.noise_level == noise_level)
            .map(|c| c.recall)
    }

    pub fn mean_recall(&self, method: Method, noise_level: f64) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.method == method && m.noise_level == noise_level)
            .map(|m| m.recall)
    }

    /// Plain-text table: one row per object and method, one column per noise level.
    pub fn render(&self) -> String {
        let mut noises: Vec<f64> = self.cells.iter().map(|c| c.noise_level).collect();
        noises.sort_by(f64::total_cmp);
        noises.dedup();
        let mut out = String::new();
        let _ = write!(out, "{:<16} {:<15}", "object", "method");
        for n in &noises {
            let _ = write!(out, " {:>9}", format!("noise {n}"));
        }
        out.push('\n');
        let mut rows: BTreeMap<(String, Method), BTreeMap<u64, f64>> = BTreeMap::new();
        for c in &self.cells {
            rows.entry((c.object_id.clone(), c.method))
                .or_default()
                .insert(c.noise_level.to_bits(), c.recall);
        }
        for m in &self.means {
            rows.entry(("(mean)".to_string(), m.method))
                .or_default()
                .insert(m.noise_level.to_bits(), m.recall);
        }
        for ((object, method), recalls) in rows {
            let _ = write!(out, "{:<16} {:<15}", object, method.as_str());
            for n in &noises {
                match recalls.get(&n.to_bits()) {
                    Some(r) => {
                        let _ = write!(out, " {:>9.3}", r);
                    }
                    None => {
                        let _ = write!(out, " {:>9}", "-");
                    }
                }
            }
            out.push('\n');
        }
        for t in &self.timings {
            let _ = writeln!(
                out,
                "{:<15} runtime ms: p50 {:.1}  p90 {:.1}  p99 {:.1}  mean {:.1}",
                t.method.as_str(),
                t.p50_ms,
                t.p90_ms,
                t.p99_ms,
                t.mean_ms
            );
        }
        out
    }
}
