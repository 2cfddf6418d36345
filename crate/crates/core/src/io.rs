//! Text formats for datasets, graphs and maps.
//!
//! * Dataset CSV: header `label,m0,m1,...,m{d-1}`, one sample per row.
//! * Edge list: first line `nodes=<d>`, then one whitespace-separated `j k`
//!   pair per line.
//! * Maps: single-column CSV with `d` values (or `0`/`1` flags).
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `load(save(x)) == x` bit for bit. All writes go through a temporary file
//! in the destination directory followed by a rename.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Result, RsmError};
use crate::graph::NeighborhoodGraph;
use crate::types::{BinaryEffectMap, Dataset, Label, Sample};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| RsmError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> RsmError {
    RsmError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Content lines with their 1-based line numbers; blank and `#` lines skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Writes `contents` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| RsmError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| RsmError::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| RsmError::io(path, e))?;
    tmp.persist(path).map_err(|e| RsmError::io(path, e.error))?;
    Ok(())
}

pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::from("label");
    for j in 0..dataset.dim() {
        write!(out, ",m{j}").unwrap();
    }
    out.push('\n');
    for s in dataset.samples() {
        write!(out, "{}", s.label.bit()).unwrap();
        for v in &s.measurements {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_dataset_csv(text: &str, path: &Path) -> Result<Dataset> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"label") || columns.len() < 2 {
        return Err(parse_err(
            path,
            hline,
            "header must be `label,m0,...,m{d-1}`",
        ));
    }
    let d = columns.len() - 1;
    let mut samples = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", d + 1, fields.len()),
            ));
        }
        let label = fields[0]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_bit)
            .ok_or_else(|| parse_err(path, line, format!("invalid label `{}`", fields[0])))?;
        let mut measurements = Vec::with_capacity(d);
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, line, format!("invalid number `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value `{f}`")));
            }
            measurements.push(v);
        }
        samples.push(Sample {
            measurements,
            label,
        });
    }
    if samples.is_empty() {
        return Err(parse_err(path, hline, "dataset has no rows"));
    }
    Dataset::new(samples)
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    parse_dataset_csv(&read_text(path)?, path)
}

pub fn save_dataset_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, dataset_to_csv(dataset).as_bytes())
}

pub fn graph_to_edgelist(graph: &NeighborhoodGraph) -> String {
    let mut out = format!("nodes={}\n", graph.node_count());
    for &(j, k) in graph.edges() {
        writeln!(out, "{j} {k}").unwrap();
    }
    out
}

pub fn parse_graph_edgelist(text: &str, path: &Path) -> Result<NeighborhoodGraph> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing `nodes=<d>` line"))?;
    let nodes: usize = header
        .strip_prefix("nodes=")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| parse_err(path, hline, "first line must be `nodes=<d>`"))?;
    let mut pairs = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split_whitespace().collect();
        let pair = match fields.as_slice() {
            [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
            _ => None,
        };
        let (a, b) = pair.ok_or_else(|| parse_err(path, line, "expected `j k`"))?;
        if a >= nodes || b >= nodes {
            return Err(parse_err(path, line, format!("node index out of range [0,{nodes})")));
        }
        pairs.push((a, b));
    }
    NeighborhoodGraph::new(nodes, pairs)
}

pub fn load_graph_edgelist(path: &Path) -> Result<NeighborhoodGraph> {
    parse_graph_edgelist(&read_text(path)?, path)
}

pub fn save_graph_edgelist(graph: &NeighborhoodGraph, path: &Path) -> Result<()> {
    write_atomic(path, graph_to_edgelist(graph).as_bytes())
}

pub fn values_to_csv(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 12);
    for v in values {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn parse_map_csv(text: &str, path: &Path) -> Result<Vec<f64>> {
    content_lines(text)
        .map(|(line, row)| {
            row.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("invalid value `{row}`")))
        })
        .collect()
}

pub fn save_map_csv(values: &[f64], path: &Path) -> Result<()> {
    write_atomic(path, values_to_csv(values).as_bytes())
}

pub fn load_map_csv(path: &Path) -> Result<Vec<f64>> {
    parse_map_csv(&read_text(path)?, path)
}

pub fn binary_to_csv(map: &BinaryEffectMap) -> String {
    let mut out = String::with_capacity(map.len() * 2);
    for &q in &map.detections {
        out.push(if q { '1' } else { '0' });
        out.push('\n');
    }
    out
}

pub fn save_binary_map_csv(map: &BinaryEffectMap, path: &Path) -> Result<()> {
    write_atomic(path, binary_to_csv(map).as_bytes())
}

pub fn load_binary_map_csv(path: &Path) -> Result<BinaryEffectMap> {
    let text = read_text(path)?;
    let detections = content_lines(&text)
        .map(|(line, row)| match row {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(parse_err(path, line, format!("expected 0 or 1, found `{row}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinaryEffectMap::new(detections))
}

/// Hex SHA-256 of a value's canonical JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

/// Provenance written next to every output file as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct OutputMeta {
    pub config_hash: String,
    pub seed: u64,
    pub tool: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_sidecar(path: &Path, meta: &OutputMeta) -> Result<()> {
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    write_atomic(&sidecar_path(path), json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn dataset_round_trip_is_bitwise() {
        let ds = Dataset::new(vec![
            Sample::new(vec![0.1, -2.5e-300, 1.0 / 3.0, 7.0], Label::Control).unwrap(),
            Sample::new(vec![f64::MAX, -0.0, 1e-17, 42.125], Label::Case).unwrap(),
            Sample::new(vec![3.0, 2.0, 1.0, 0.0], Label::Case).unwrap(),
        ])
        .unwrap();
        let back = parse_dataset_csv(&dataset_to_csv(&ds), p()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in ds.samples().iter().zip(back.samples()) {
            assert_eq!(a.label, b.label);
            let bits = |s: &Sample| s.measurements.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn short_row_names_line() {
        let text = "label,m0,m1,m2,m3\n0,1,2,3,4\n1,1,2,3\n";
        match parse_dataset_csv(text, p()) {
            Err(RsmError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_and_number_rejected() {
        assert!(parse_dataset_csv("label,m0\n2,1.0\n", p()).is_err());
        assert!(parse_dataset_csv("label,m0\n1,abc\n", p()).is_err());
        assert!(parse_dataset_csv("label,m0\n1,NaN\n", p()).is_err());
        assert!(parse_dataset_csv("lbl,m0\n1,1\n", p()).is_err());
    }

    #[test]
    fn edgelist_parses() {
        let g = parse_graph_edgelist("nodes=3\n0 1\n1 2", p()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        let back = parse_graph_edgelist(&graph_to_edgelist(&g), p()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn edgelist_errors() {
        assert!(parse_graph_edgelist("0 1\n", p()).is_err());
        assert!(parse_graph_edgelist("nodes=2\n0 2\n", p()).is_err());
        assert!(parse_graph_edgelist("nodes=2\n0\n", p()).is_err());
        assert!(parse_graph_edgelist("nodes=2\n0 0\n", p()).is_err());
    }

    #[test]
    fn files_round_trip_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/map.csv");
        let values = vec![0.5, -1.25, 3e10];
        save_map_csv(&values, &path).unwrap();
        assert_eq!(load_map_csv(&path).unwrap(), values);

        let q = BinaryEffectMap::new(vec![true, false, true]);
        let qpath = dir.path().join("q.csv");
        save_binary_map_csv(&q, &qpath).unwrap();
        assert_eq!(load_binary_map_csv(&qpath).unwrap(), q);

        let meta = OutputMeta {
            config_hash: "abc".into(),
            seed: 7,
            tool: "test".into(),
        };
        write_sidecar(&path, &meta).unwrap();
        let text = std::fs::read_to_string(dir.path().join("sub/map.csv.meta.json")).unwrap();
        assert_eq!(serde_json::from_str::<OutputMeta>(&text).unwrap(), meta);
        // no stray temp files left behind
        let entries: Vec<_> = std::fs::read_dir(dir.path().join("sub")).unwrap().collect();
        assert_eq!(entries.len(), 2);
    }

    #[test]
    fn config_hash_is_stable() {
        let a = config_hash(&("x", 1)).unwrap();
        assert_eq!(a, config_hash(&("x", 1)).unwrap());
        assert_ne!(a, config_hash(&("x", 2)).unwrap());
        assert_eq!(a.len(), 64);
    }
}
