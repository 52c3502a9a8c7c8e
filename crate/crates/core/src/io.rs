//! On-disk formats: edge lists with attribute tables, JSON checkpoints and
//! reports, loss traces and DOT drawings.
//!
//! Text formats start with a `# version 1` line. Readers accept files
//! without it (plain edge lists from elsewhere) but reject other versions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserHyper, DenoiserModel};
use crate::error::{Error, Result};
use crate::graph::{CondGraph, Condition};
use crate::guidance::{GraphClassifier, GuidanceClassifiers};
use crate::schedule::ScheduleConfig;

pub const FORMAT_VERSION: u32 = 1;
const VERSION_PREFIX: &str = "# version ";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Splits off a leading version comment. Returns the remaining lines with
/// their 1-based line numbers.
fn versioned_lines<'a>(path: &Path, text: &'a str) -> Result<Vec<(usize, &'a str)>> {
    let mut lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(k, l)| (k + 1, l)).collect();
    if let Some((_, first)) = lines.first() {
        if let Some(v) = first.trim().strip_prefix(VERSION_PREFIX) {
            let found: u32 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(path, 1, format!("bad version field `{v}`")))?;
            if found != FORMAT_VERSION {
                return Err(Error::Version {
                    found,
                    expected: FORMAT_VERSION,
                });
            }
            lines.remove(0);
        }
    }
    Ok(lines)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn parse_index(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("`{field}` is not a node index")))
}

fn parse_bit(path: &Path, line: usize, field: &str) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_err(path, line, format!("`{other}` is not a bit"))),
    }
}

/// Attribute rows keyed by graph id, then node id.
type AttrTable = BTreeMap<usize, BTreeMap<usize, (bool, bool)>>;

fn read_attrs(path: &Path) -> Result<(bool, AttrTable)> {
    let text = read_text(path)?;
    let lines = versioned_lines(path, &text)?;
    let mut rows = lines.into_iter().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = rows.next().ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    let multi = match header.as_slice() {
        ["node", "c1", "c2"] => false,
        ["graph", "node", "c1", "c2"] => true,
        _ => {
            return Err(parse_err(
                path,
                hline,
                "header must be `node,c1,c2` or `graph,node,c1,c2`",
            ))
        }
    };
    let body: String = rows.clone().map(|(_, l)| format!("{l}\n")).collect();
    let line_of: Vec<usize> = rows.map(|(k, _)| k).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut table = AttrTable::new();
    for (k, rec) in reader.records().enumerate() {
        let line = line_of.get(k).copied().unwrap_or(hline);
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        let want = if multi { 4 } else { 3 };
        if rec.len() != want {
            return Err(parse_err(path, line, format!("expected {want} fields, found {}", rec.len())));
        }
        let off = multi as usize;
        let graph = if multi { parse_index(path, line, &rec[0])? } else { 0 };
        let node = parse_index(path, line, &rec[off])?;
        let c1 = parse_bit(path, line, &rec[off + 1])?;
        let c2 = parse_bit(path, line, &rec[off + 2])?;
        if table.entry(graph).or_default().insert(node, (c1, c2)).is_some() {
            return Err(parse_err(path, line, format!("node {node} listed twice")));
        }
    }
    Ok((multi, table))
}

/// Reads graphs from an edge list (`u v` or `g u v` per line) and an
/// attribute table (`node,c1,c2` or `graph,node,c1,c2`). Node and graph
/// ids must be contiguous from 0. Duplicate edges collapse; self-loops are
/// rejected with their line number.
pub fn load_dataset(edge_path: &Path, attr_path: &Path) -> Result<Vec<CondGraph>> {
    let (multi, table) = read_attrs(attr_path)?;
    let mut sizes = Vec::with_capacity(table.len());
    for (expect, (&gid, nodes)) in table.iter().enumerate() {
        if gid != expect {
            return Err(Error::Format(format!(
                "{}: graph ids must be contiguous from 0, missing {expect}",
                attr_path.display()
            )));
        }
        if let Some((k, _)) = nodes.keys().enumerate().find(|(k, id)| *k != **id) {
            return Err(Error::Format(format!(
                "{}: graph {gid} is missing node {k}",
                attr_path.display()
            )));
        }
        sizes.push(nodes.len());
    }
    if sizes.is_empty() {
        sizes.push(0);
    }
    let text = read_text(edge_path)?;
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); sizes.len()];
    for (line, raw) in versioned_lines(edge_path, &text)? {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        let want = if multi { 3 } else { 2 };
        if fields.len() != want {
            return Err(parse_err(edge_path, line, format!("expected {want} fields, found {}", fields.len())));
        }
        let gid = if multi { parse_index(edge_path, line, fields[0])? } else { 0 };
        let u = parse_index(edge_path, line, fields[want - 2])?;
        let v = parse_index(edge_path, line, fields[want - 1])?;
        let n = *sizes
            .get(gid)
            .ok_or_else(|| parse_err(edge_path, line, format!("unknown graph {gid}")))?;
        if u == v {
            return Err(parse_err(edge_path, line, format!("self-loop at node {u}")));
        }
        if u >= n || v >= n {
            return Err(parse_err(edge_path, line, format!("edge ({u}, {v}) outside 0..{n}")));
        }
        edges[gid].push((u, v));
    }
    table
        .values()
        .zip(&edges)
        .map(|(nodes, e)| {
            let x1 = nodes.values().map(|b| b.0).collect();
            let x2 = nodes.values().map(|b| b.1).collect();
            CondGraph::from_edges(nodes.len(), e, x1, x2)
        })
        .collect()
}

/// Writes one graph as `u v` lines and `node,c1,c2` rows.
pub fn save_graph(g: &CondGraph, edge_path: &Path, attr_path: &Path) -> Result<()> {
    let mut edges = format!("{VERSION_PREFIX}{FORMAT_VERSION}\n");
    for (u, v) in g.edges() {
        writeln!(edges, "{u} {v}").unwrap();
    }
    let mut attrs = format!("{VERSION_PREFIX}{FORMAT_VERSION}\nnode,c1,c2\n");
    for i in 0..g.n() {
        writeln!(attrs, "{i},{},{}", g.x1()[i] as u8, g.x2()[i] as u8).unwrap();
    }
    write_text(edge_path, &edges)?;
    write_text(attr_path, &attrs)
}

/// Writes a corpus as `g u v` lines and `graph,node,c1,c2` rows.
pub fn save_corpus(graphs: &[CondGraph], edge_path: &Path, attr_path: &Path) -> Result<()> {
    let mut edges = format!("{VERSION_PREFIX}{FORMAT_VERSION}\n");
    let mut attrs = format!("{VERSION_PREFIX}{FORMAT_VERSION}\ngraph,node,c1,c2\n");
    for (k, g) in graphs.iter().enumerate() {
        for (u, v) in g.edges() {
            writeln!(edges, "{k} {u} {v}").unwrap();
        }
        for i in 0..g.n() {
            writeln!(attrs, "{k},{i},{},{}", g.x1()[i] as u8, g.x2()[i] as u8).unwrap();
        }
    }
    write_text(edge_path, &edges)?;
    write_text(attr_path, &attrs)
}

/// The two files of a corpus stored under `dir`.
pub fn corpus_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("edges.txt"), dir.join("attrs.csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Denoiser,
    Outer,
    Inner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    Denoiser {
        hyper: DenoiserHyper,
        params: Vec<f64>,
    },
    Classifier {
        /// The condition this classifier predicts.
        condition: Condition,
        classifier: GraphClassifier,
    },
}

/// Versioned model file shared by the denoiser and both classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub role: Role,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub payload: Payload,
}

impl Checkpoint {
    pub fn denoiser(model: &DenoiserModel, schedule: &ScheduleConfig, seed: u64) -> Self {
        Checkpoint {
            version: FORMAT_VERSION,
            role: Role::Denoiser,
            seed,
            schedule: schedule.clone(),
            payload: Payload::Denoiser {
                hyper: model.hyper().clone(),
                params: model.params().to_vec(),
            },
        }
    }

    /// Outer and inner checkpoints of a classifier pair.
    pub fn classifiers(c: &GuidanceClassifiers, schedule: &ScheduleConfig, seed: u64) -> [Self; 2] {
        let make = |role, condition, clf: &GraphClassifier| Checkpoint {
            version: FORMAT_VERSION,
            role,
            seed,
            schedule: schedule.clone(),
            payload: Payload::Classifier {
                condition,
                classifier: clf.clone(),
            },
        };
        [
            make(Role::Outer, c.outer_condition, &c.outer),
            make(Role::Inner, c.inner_condition(), &c.inner),
        ]
    }

    pub fn into_denoiser(self) -> Result<DenoiserModel> {
        match self.payload {
            Payload::Denoiser { hyper, params } if self.role == Role::Denoiser => {
                DenoiserModel::from_params(hyper, params)
            }
            _ => Err(Error::Format("checkpoint does not hold a denoiser".into())),
        }
    }

    fn into_classifier(self, role: Role) -> Result<(Condition, GraphClassifier)> {
        match self.payload {
            Payload::Classifier { condition, classifier } if self.role == role => {
                classifier.validate()?;
                Ok((condition, classifier))
            }
            _ => Err(Error::Format(format!("checkpoint is not a {role:?} classifier"))),
        }
    }
}

/// Rebuilds a classifier pair from its outer and inner checkpoints.
pub fn classifiers_from(outer: Checkpoint, inner: Checkpoint) -> Result<GuidanceClassifiers> {
    let (oc, outer) = outer.into_classifier(Role::Outer)?;
    let (ic, inner) = inner.into_classifier(Role::Inner)?;
    if ic != oc.other() {
        return Err(Error::Format("outer and inner classifiers predict the same condition".into()));
    }
    Ok(GuidanceClassifiers {
        outer_condition: oc,
        outer,
        inner,
    })
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Reads a checkpoint and checks its version.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let value: serde_json::Value = read_json(path)?;
    let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Evaluation report file: the format version followed by the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    #[serde(flatten)]
    pub report: crate::eval::EvalReport,
}

/// `step,loss` rows, one per optimizer step.
pub fn write_loss_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = format!("{VERSION_PREFIX}{FORMAT_VERSION}\nstep,loss\n");
    for (k, l) in trace.iter().enumerate() {
        writeln!(text, "{},{l}", k + 1).unwrap();
    }
    write_text(path, &text)
}

/// Fill color of a node by which conditions it satisfies.
pub fn node_color(c1: bool, c2: bool) -> &'static str {
    match (c1, c2) {
        (true, true) => "blue",
        (true, false) => "green",
        (false, true) => "yellow",
        (false, false) => "red",
    }
}

/// Undirected DOT graph with nodes filled by condition satisfaction.
pub fn to_dot(g: &CondGraph, name: &str) -> String {
    let mut out = format!("// version {FORMAT_VERSION}\ngraph {name} {{\n    node [style=filled];\n");
    for i in 0..g.n() {
        writeln!(out, "    {i} [fillcolor={}];", node_color(g.x1()[i], g.x2()[i])).unwrap();
    }
    for (u, v) in g.edges() {
        writeln!(out, "    {u} -- {v};").unwrap();
    }
    out.push_str("}\n");
    out
}

pub fn write_dot(g: &CondGraph, name: &str, path: &Path) -> Result<()> {
    write_text(path, &to_dot(g, name))
}
