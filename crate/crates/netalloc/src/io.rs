//! Plain-text graph, feature and dataset files, plus JSON helpers.
//!
//! Edge lists look like
//!
//! ```text
//! n 5
//! 0 1
//! 1 4
//! ```
//!
//! with 0-based indices and one undirected edge per line.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use netalloc_core::dgp::Dataset;
use netalloc_core::{Graph, Matrix};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Parses an edge list. `path` only labels error messages.
pub fn read_edge_list<R: BufRead>(reader: R, path: &Path) -> Result<Graph> {
    let mut lines = reader.lines().enumerate();
    let n = loop {
        let Some((idx, line)) = lines.next() else {
            return Err(parse_err(path, 1, "missing `n <count>` header"));
        };
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("n"), Some(count), None) => {
                break count
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, idx + 1, format!("invalid node count `{count}`")))?
            }
            _ => return Err(parse_err(path, idx + 1, format!("expected `n <count>`, found `{trimmed}`"))),
        }
    };

    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(parse_err(path, lineno, format!("expected `i j`, found `{trimmed}`"))),
        };
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| parse_err(path, lineno, format!("invalid node index `{s}`")))
        };
        let (i, j) = (parse(a)?, parse(b)?);
        if i >= n || j >= n {
            return Err(parse_err(path, lineno, format!("edge ({i}, {j}) out of range for n = {n}")));
        }
        if i == j {
            return Err(parse_err(path, lineno, format!("self-loop on node {i}")));
        }
        let key = (i.min(j), i.max(j));
        if !seen.insert(key) {
            return Err(parse_err(path, lineno, format!("duplicate edge ({}, {})", key.0, key.1)));
        }
        edges.push(key);
    }
    Ok(Graph::from_edges(n, edges)?)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_edge_list(BufReader::new(file), path)
}

/// Canonical form: header, then edges with `i < j` in lexicographic order.
pub fn edge_list_string(graph: &Graph) -> String {
    let mut out = String::with_capacity(16 + graph.edge_count() * 12);
    let _ = writeln!(out, "n {}", graph.n());
    for (i, j) in graph.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

pub fn save_edge_list(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path, edge_list_string(graph).as_bytes())
}

pub fn read_features<R: Read>(reader: R, path: &Path) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| parse_err(path, line, format!("invalid number `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, line, "features must be finite"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "feature file has no rows"));
    }
    Ok(Matrix::from_rows(&rows)?)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(file, path)
}

pub fn features_string(x: &Matrix) -> String {
    let mut out = String::new();
    for row in x.iter_rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_features(x: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path, features_string(x).as_bytes())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::format(path, e),
        _ => parse_err(path, line, e.to_string()),
    }
}

/// Writes `node,t,z,y` rows.
pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("node,t,z,y\n");
    for i in 0..data.n() {
        let _ = writeln!(out, "{i},{},{},{}", u8::from(data.t[i]), data.z[i], data.y[i]);
    }
    write_bytes(path, out.as_bytes())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["node", "t", "z", "y"] {
        return Err(parse_err(path, 1, "expected header `node,t,z,y`"));
    }
    let (mut t, mut z, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let node: usize = record[0].parse().map_err(|_| parse_err(path, line, "invalid node index"))?;
        if node != t.len() {
            return Err(parse_err(path, line, format!("expected node {}, found {node}", t.len())));
        }
        t.push(match &record[1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(path, line, format!("treatment must be 0 or 1, found `{other}`"))),
        });
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(path, line, format!("invalid number `{s}`")));
        z.push(num(&record[2])?);
        y.push(num(&record[3])?);
    }
    Ok(Dataset { t, z, y })
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// Fails with a stage-dependency error when `path` does not exist.
pub fn require(path: &Path, artifact: &'static str, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::MissingArtifact { artifact, path: path.to_path_buf(), stage })
    }
}
