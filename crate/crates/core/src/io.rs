//! Plain-text dataset and trace formats.
//!
//! * Edge list: header `nodes <n>`, then one `<source> <target>` line per
//!   edge; the edge id is the line's position after the header.
//! * Cells: one `<edge_id> <cell_id> <sign>` triplet per nonzero of `B₂`.
//! * Flows: CSV with header `edge_id,f0,...,f{s-1}`, one row per edge.
//! * Trace: CSV with header [`TRACE_HEADER`]; floats in `{:.8e}` form
//!   (nine significant digits, e.g. `1.73205081e0`, zero as `0.00000000e0`).
//! * Meta: `key = value` lines echoing a [`SynthConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::complex::{CellBoundary, CellComplex, ComplexError, OrientedGraph};
use crate::hodge::FlowMatrix;
use crate::synth::SynthConfig;
use crate::trace::InferenceTrace;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: invariant violated: {rule}", path.display())]
    InvariantViolation { path: PathBuf, rule: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn violation(path: &Path, rule: impl std::fmt::Display) -> IoError {
    IoError::InvariantViolation {
        path: path.to_path_buf(),
        rule: rule.to_string(),
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn format_edge_list(graph: &OrientedGraph) -> String {
    let mut out = format!("nodes {}\n", graph.node_count());
    for &(s, t) in graph.edges() {
        out.push_str(&format!("{s} {t}\n"));
    }
    out
}

pub fn write_edge_list(path: &Path, graph: &OrientedGraph) -> Result<(), IoError> {
    write_text(path, &format_edge_list(graph))
}

pub fn read_edge_list(path: &Path) -> Result<OrientedGraph, IoError> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing `nodes <n>` header"))?;
    let node_count = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["nodes", n] => n
            .parse::<usize>()
            .map_err(|e| parse_err(path, line, format!("node count: {e}")))?,
        _ => return Err(parse_err(path, line, "expected `nodes <n>` header")),
    };
    let mut edges = Vec::new();
    for (line, text) in lines {
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [s, t] = fields.as_slice() else {
            return Err(parse_err(path, line, "expected `<source> <target>`"));
        };
        let s = s
            .parse::<usize>()
            .map_err(|e| parse_err(path, line, format!("source: {e}")))?;
        let t = t
            .parse::<usize>()
            .map_err(|e| parse_err(path, line, format!("target: {e}")))?;
        edges.push((s, t));
    }
    OrientedGraph::new(node_count, edges).map_err(|e| violation(path, e))
}

pub fn format_cells(cells: &[CellBoundary]) -> String {
    let mut out = String::new();
    for (j, cell) in cells.iter().enumerate() {
        for &(e, s) in cell.entries() {
            out.push_str(&format!("{e} {j} {s}\n"));
        }
    }
    out
}

pub fn write_cells(path: &Path, complex: &CellComplex) -> Result<(), IoError> {
    write_text(path, &format_cells(complex.cells()))
}

/// Parses a cell file against `graph`. Cell ids must be `0..k` without gaps.
pub fn read_cells(path: &Path, graph: Arc<OrientedGraph>) -> Result<CellComplex, IoError> {
    let text = read(path)?;
    let mut cells: BTreeMap<usize, Vec<(usize, i8)>> = BTreeMap::new();
    for (line, text) in content_lines(&text) {
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [e, c, s] = fields.as_slice() else {
            return Err(parse_err(path, line, "expected `<edge_id> <cell_id> <sign>`"));
        };
        let e = e
            .parse::<usize>()
            .map_err(|err| parse_err(path, line, format!("edge id: {err}")))?;
        let c = c
            .parse::<usize>()
            .map_err(|err| parse_err(path, line, format!("cell id: {err}")))?;
        let s = match *s {
            "1" | "+1" => 1i8,
            "-1" => -1i8,
            other => return Err(parse_err(path, line, format!("sign `{other}` is not 1 or -1"))),
        };
        if e >= graph.edge_count() {
            return Err(violation(
                path,
                ComplexError::EdgeOutOfRange {
                    edge: e,
                    edge_count: graph.edge_count(),
                },
            ));
        }
        cells.entry(c).or_default().push((e, s));
    }
    if let Some((expected, found)) = cells
        .keys()
        .enumerate()
        .find(|(i, id)| *i != **id)
        .map(|(i, id)| (i, *id))
    {
        return Err(violation(
            path,
            format!("cell ids must be contiguous from 0; expected {expected}, found {found}"),
        ));
    }
    let boundaries = cells
        .into_values()
        .enumerate()
        .map(|(index, entries)| {
            CellBoundary::from_signed_edges(&graph, entries).map_err(|e| ComplexError::InvalidCell {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| violation(path, e))?;
    CellComplex::new(graph, boundaries).map_err(|e| violation(path, e))
}

pub fn write_flows(path: &Path, flows: &FlowMatrix) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["edge_id".to_string()];
    header.extend((0..flows.sample_count()).map(|i| format!("f{i}")));
    let csv_err = |e: csv::Error| violation(path, e);
    wtr.write_record(&header).map_err(csv_err)?;
    for (e, row) in flows.matrix().row_iter().enumerate() {
        let mut record = vec![e.to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&record).map_err(csv_err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| violation(path, e))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads a flow CSV; `edges` (if given) is the required row count.
pub fn read_flows(path: &Path, edges: Option<usize>) -> Result<FlowMatrix, IoError> {
    let text = read(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if header.get(0) != Some("edge_id") {
        return Err(parse_err(path, 1, "header must start with `edge_id`"));
    }
    let samples = header.len() - 1;
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{i}") {
            return Err(parse_err(path, 1, format!("column {} must be `f{i}`", i + 1)));
        }
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != samples + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", samples + 1, record.len()),
            ));
        }
        let id: usize = record[0]
            .parse()
            .map_err(|e| parse_err(path, line, format!("edge_id: {e}")))?;
        if id != i {
            return Err(parse_err(path, line, format!("edge_id {id} out of order, expected {i}")));
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|e| parse_err(path, line, format!("value `{field}`: {e}")))?;
            values.push(v);
        }
        rows += 1;
    }
    if let Some(m) = edges {
        if rows != m {
            return Err(parse_err(
                path,
                rows + 1,
                format!("found {rows} edge rows, graph has {m} edges"),
            ));
        }
    }
    FlowMatrix::new(DMatrix::from_row_slice(rows, samples, &values)).map_err(|e| violation(path, e))
}

pub fn format_meta(cfg: &SynthConfig) -> String {
    format!(
        "nodes = {}\nedge_probability = {}\ncells = {}\nsamples = {}\ncell_std = {}\nnoise_std = {}\nseed = {}\n",
        cfg.nodes,
        cfg.edge_probability,
        cfg.cells,
        cfg.samples,
        cfg.cell_std,
        cfg.noise_std,
        cfg.seed
    )
}

pub fn write_meta(path: &Path, cfg: &SynthConfig) -> Result<(), IoError> {
    write_text(path, &format_meta(cfg))
}

pub const TRACE_HEADER: &str = "iteration,cells_total,loss,cumulative_seconds,cumulative_solver_calls,cumulative_solver_iterations";

/// One row of a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub cells_total: usize,
    pub loss: f64,
    pub cumulative_seconds: f64,
    pub cumulative_solver_calls: usize,
    pub cumulative_solver_iterations: usize,
}

impl TraceRecord {
    pub fn from_trace(trace: &InferenceTrace) -> Vec<Self> {
        trace
            .records
            .iter()
            .map(|r| Self {
                iteration: r.iteration,
                cells_total: r.cells_total,
                loss: r.loss,
                cumulative_seconds: r.cumulative_seconds,
                cumulative_solver_calls: r.cumulative_solver_calls,
                cumulative_solver_iterations: r.cumulative_solver_iterations,
            })
            .collect()
    }

    pub fn to_csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            self.cells_total,
            format_float(self.loss),
            format_float(self.cumulative_seconds),
            self.cumulative_solver_calls,
            self.cumulative_solver_iterations
        )
    }
}

/// Nine significant digits in exponent form.
pub fn format_float(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_fields());
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), IoError> {
    if records.is_empty() {
        return Err(violation(path, "trace must contain at least one record"));
    }
    write_text(path, &format_trace(records))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, IoError> {
    let text = read(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(parse_err(path, 1, "unexpected trace header"));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let int = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|e| parse_err(path, line, format!("column {k}: {e}")))
        };
        let float = |k: usize| {
            field(k)
                .parse::<f64>()
                .map_err(|e| parse_err(path, line, format!("column {k}: {e}")))
        };
        out.push(TraceRecord {
            iteration: int(0)?,
            cells_total: int(1)?,
            loss: float(2)?,
            cumulative_seconds: float(3)?,
            cumulative_solver_calls: int(4)?,
            cumulative_solver_iterations: int(5)?,
        });
    }
    Ok(out)
}

/// Graph, flows and optional ground-truth cells read from disk.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub graph: Arc<OrientedGraph>,
    pub flows: FlowMatrix,
    pub truth: Option<CellComplex>,
}

pub fn load_dataset(
    graph_path: &Path,
    flows_path: &Path,
    cells_path: Option<&Path>,
) -> Result<LoadedDataset, IoError> {
    let graph = Arc::new(read_edge_list(graph_path)?);
    let flows = read_flows(flows_path, Some(graph.edge_count()))?;
    let truth = cells_path
        .map(|p| read_cells(p, graph.clone()))
        .transpose()?;
    Ok(LoadedDataset {
        graph,
        flows,
        truth,
    })
}

/// File names used for a dataset directory.
pub const GRAPH_FILE: &str = "graph.txt";
pub const FLOWS_FILE: &str = "flows.csv";
pub const CELLS_FILE: &str = "cells.txt";
pub const META_FILE: &str = "meta.txt";

/// Writes `graph.txt`, `flows.csv`, `cells.txt` and `meta.txt` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &crate::synth::Dataset) -> Result<(), IoError> {
    write_edge_list(&dir.join(GRAPH_FILE), dataset.truth.graph())?;
    write_flows(&dir.join(FLOWS_FILE), &dataset.flows)?;
    write_cells(&dir.join(CELLS_FILE), &dataset.truth)?;
    write_meta(&dir.join(META_FILE), &dataset.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Dataset, SynthConfig};

    fn small_dataset() -> Dataset {
        Dataset::generate(&SynthConfig {
            nodes: 8,
            edge_probability: 0.6,
            cells: 3,
            samples: 4,
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = small_dataset();
        write_dataset(dir.path(), &d).unwrap();
        let loaded = load_dataset(
            &dir.path().join(GRAPH_FILE),
            &dir.path().join(FLOWS_FILE),
            Some(&dir.path().join(CELLS_FILE)),
        )
        .unwrap();
        assert_eq!(*loaded.graph, *d.truth.graph());
        assert_eq!(loaded.flows, d.flows);
        assert_eq!(loaded.truth.unwrap().cells(), d.truth.cells());
    }

    #[test]
    fn flow_row_count_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, "edge_id,f0\n0,1.0\n1,2.0\n").unwrap();
        assert!(read_flows(&path, Some(2)).is_ok());
        let err = read_flows(&path, Some(3)).unwrap_err();
        assert!(matches!(err, IoError::Parse { .. }), "{err}");
        fs::write(&path, "edge_id,f0\n0,1.0\n1,abc\n").unwrap();
        assert!(matches!(
            read_flows(&path, None),
            Err(IoError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn cell_edge_out_of_range_is_violation() {
        let dir = tempfile::tempdir().unwrap();
        let graph = Arc::new(OrientedGraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap());
        let path = dir.path().join("cells.txt");
        fs::write(&path, "0 0 1\n1 0 1\n3 0 -1\n").unwrap();
        assert!(matches!(
            read_cells(&path, graph.clone()),
            Err(IoError::InvariantViolation { .. })
        ));
        fs::write(&path, "0 0 1\n1 0 1\n2 0 1\n").unwrap();
        assert!(matches!(
            read_cells(&path, graph.clone()),
            Err(IoError::InvariantViolation { .. })
        ));
        fs::write(&path, "0 0 1\n1 0 1\n2 0 -1\n").unwrap();
        assert_eq!(read_cells(&path, graph).unwrap().cell_count(), 1);
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        fs::write(&path, "nodes 3\n0 1\n1 x\n").unwrap();
        assert!(matches!(
            read_edge_list(&path),
            Err(IoError::Parse { line: 3, .. })
        ));
        fs::write(&path, "nodes 3\n0 1\n1 1\n").unwrap();
        assert!(matches!(
            read_edge_list(&path),
            Err(IoError::InvariantViolation { .. })
        ));
        let missing = dir.path().join("nope.txt");
        let err = read_edge_list(&missing).unwrap_err();
        assert!(err.to_string().contains("nope.txt"));
    }

    #[test]
    fn trace_format_and_round_trip() {
        let records = vec![
            TraceRecord {
                iteration: 0,
                cells_total: 0,
                loss: 3f64.sqrt(),
                cumulative_seconds: 0.00125,
                cumulative_solver_calls: 1,
                cumulative_solver_iterations: 4,
            },
            TraceRecord {
                iteration: 1,
                cells_total: 1,
                loss: 0.0,
                cumulative_seconds: 0.5,
                cumulative_solver_calls: 2,
                cumulative_solver_iterations: 5,
            },
        ];
        let text = format_trace(&records);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(
            text.lines().nth(2).unwrap(),
            "1,1,0.00000000e0,5.00000000e-1,2,5"
        );
        assert!(text.lines().nth(1).unwrap().contains("1.73205081e0"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace(&path, &records).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], records[1]);
        assert!((back[0].loss - records[0].loss).abs() < 1e-8);
        assert!(write_trace(&path, &[]).is_err());
    }
}
