//! Graph and report exports, and tower directories.
//!
//! Graph JSON has the keys `basepoint`, `labels`, `perms`, `vertex_count`
//! in that order, with `perms[i]` the permutation of `labels[i]`. It is
//! written on one line followed by a newline.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Alphabet, LabeledGraph};
use crate::leaves::{ClassificationTrace, EndsReport, SampleReport};
use crate::towers::{Tower, TowerSpec};

/// Graph export formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Dot,
    Json,
}

/// Report export formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    basepoint: u32,
    labels: Vec<String>,
    perms: Vec<Vec<u32>>,
    vertex_count: usize,
}

/// Renders a complete graph as DOT or JSON.
pub fn export_graph(g: &LabeledGraph, format: GraphFormat) -> Result<String> {
    if !g.is_complete() {
        return Err(Error::Incomplete);
    }
    Ok(match format {
        GraphFormat::Json => {
            let doc = GraphJson {
                basepoint: g.basepoint(),
                labels: g.alphabet().names().to_vec(),
                perms: g.perms().to_vec(),
                vertex_count: g.vertex_count(),
            };
            let mut s = serde_json::to_string(&doc).map_err(|e| Error::Parse(e.to_string()))?;
            s.push('\n');
            s
        }
        GraphFormat::Dot => {
            let mut s = String::from("digraph schreier {\n");
            for v in 0..g.vertex_count() {
                let shape = if v as u32 == g.basepoint() { "doublecircle" } else { "circle" };
                let _ = writeln!(s, "  {v} [shape={shape}];");
            }
            for v in 0..g.vertex_count() {
                for (l, name) in g.alphabet().names().iter().enumerate() {
                    let _ = writeln!(s, "  {v} -> {} [label=\"{name}\"];", g.perm(l)[v]);
                }
            }
            s.push_str("}\n");
            s
        }
    })
}

/// Parses graph JSON written by [`export_graph`].
pub fn parse_graph_json(text: &str) -> Result<LabeledGraph> {
    let doc: GraphJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let alphabet = Alphabet::new(&doc.labels)?;
    if doc.perms.iter().any(|p| p.len() != doc.vertex_count) {
        return Err(Error::Parse("permutation length differs from vertex_count".into()));
    }
    LabeledGraph::make_action_graph(alphabet, doc.perms, doc.basepoint)
}

/// A report of any kind.
#[derive(Clone, Debug)]
pub enum Report {
    Ends(EndsReport),
    Classification(ClassificationTrace),
    Sample(SampleReport),
}

fn json<T: Serialize>(x: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(x).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Renders a report as pretty JSON or a fixed-width table.
pub fn export_report(report: &Report, format: ReportFormat) -> Result<String> {
    if format == ReportFormat::Json {
        return match report {
            Report::Ends(r) => json(r),
            Report::Classification(r) => json(r),
            Report::Sample(r) => json(r),
        };
    }
    let mut s = String::new();
    match report {
        Report::Ends(r) => {
            let _ = writeln!(s, "tower     {}", r.tower);
            let _ = writeln!(s, "point     {}", r.point);
            let _ = writeln!(
                s,
                "ball      radius {} at level {} ({} vertices, max level {}, confirm {})",
                r.ball_radius, r.ball_level, r.ball_size, r.max_level, r.params.confirm
            );
            let _ = writeln!(s, "{:>6} {:>6} {:>6} {:>11} {:>9}", "r", "R", "level", "components", "touching");
            for row in &r.rows {
                let _ = writeln!(
                    s,
                    "{:>6} {:>6} {:>6} {:>11} {:>9}",
                    row.r, row.big_r, row.level, row.components, row.touching
                );
            }
            let plateaus: Vec<String> = r
                .plateaus
                .iter()
                .map(|p| format!("r={}:{}", p.r, p.value.map_or("-".to_string(), |v| v.to_string())))
                .collect();
            let _ = writeln!(s, "plateaus  {}", plateaus.join(" "));
            let _ = writeln!(s, "verdict   {}", r.verdict);
        }
        Report::Classification(r) => {
            let _ = writeln!(s, "tower     {}", r.tower);
            let _ = writeln!(s, "point     {}", r.point);
            let _ = writeln!(s, "budget    {}", r.budget);
            let _ = writeln!(s, "{:>6} {:>20} {:>8}", "level", "vertex", "tag");
            for t in &r.tags {
                let _ = writeln!(s, "{:>6} {:>20} {:>8}", t.level, t.vertex, t.tag);
            }
            let _ = writeln!(s, "verdict   {}", r.verdict);
        }
        Report::Sample(r) => {
            let _ = writeln!(s, "tower     {}", r.tower);
            let _ = writeln!(s, "samples   {} (seed {}, budget {})", r.n, r.seed, r.budget);
            let _ = writeln!(s, "{:>6} {:>22} {:>14} {:>9}", "index", "seed", "taxonomy", "ends");
            for row in &r.samples {
                let _ = writeln!(s, "{:>6} {:>22} {:>14} {:>9}", row.index, row.seed, row.classification, row.ends);
            }
            let _ = writeln!(s, "taxonomy histogram");
            for (k, v) in &r.classification_histogram {
                let _ = writeln!(s, "  {k:<14} {v:>6}");
            }
            let _ = writeln!(s, "ends histogram");
            for (k, v) in &r.ends_histogram {
                let _ = writeln!(s, "  {k:<14} {v:>6}");
            }
        }
    }
    Ok(s)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    spec: String,
    levels: usize,
    degrees: Vec<u32>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Writes `level_k.json` for `k = 0..=depth`, `bonding_k.json` (level `k`
/// to level `k-1`) for `k ≥ 1`, and `tower.json`.
pub fn write_tower_dir(tower: &Tower, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for k in 0..=tower.depth() {
        let path = dir.join(format!("level_{k}.json"));
        fs::write(&path, export_graph(tower.level(k)?, GraphFormat::Json)?).map_err(|e| io_err(&path, e))?;
        if k > 0 {
            let path = dir.join(format!("bonding_{k}.json"));
            let mut s = serde_json::to_string(&tower.bonding_map(k - 1)?).map_err(|e| Error::Parse(e.to_string()))?;
            s.push('\n');
            fs::write(&path, s).map_err(|e| io_err(&path, e))?;
        }
    }
    let manifest = Manifest { spec: tower.name(), levels: tower.depth(), degrees: tower.degrees() };
    let path = dir.join("tower.json");
    fs::write(&path, json(&manifest)?).map_err(|e| io_err(&path, e))
}

/// Reads a directory written by [`write_tower_dir`] as an explicit tower.
pub fn read_tower_dir(dir: &Path) -> Result<Tower> {
    let read = |name: String| -> Result<String> {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| io_err(&path, e))
    };
    let manifest: Manifest =
        serde_json::from_str(&read("tower.json".into())?).map_err(|e| Error::Parse(e.to_string()))?;
    let mut levels = Vec::new();
    let mut bonding = Vec::new();
    for k in 0..=manifest.levels {
        levels.push(parse_graph_json(&read(format!("level_{k}.json"))?)?);
        if k > 0 {
            let map: Vec<u32> =
                serde_json::from_str(&read(format!("bonding_{k}.json"))?).map_err(|e| Error::Parse(e.to_string()))?;
            bonding.push(map);
        }
    }
    Tower::explicit(TowerSpec::Dir { path: dir.display().to_string() }, levels, bonding)
}
