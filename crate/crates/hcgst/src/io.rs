//! Graph directories: `edges.csv` (header `src,dst`), `features.csv` (one
//! row per node, no header) and an optional `labels.csv` (one class id per
//! line). Generated graphs also carry `meta.json` and
//! `homophily_distribution.csv`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use hcgst_core::graph::{graph_homophily, true_homophily_all, Graph};
use hcgst_core::homophily::{bin_distribution, HomophilyDistribution};
use hcgst_core::synth::SynthConfig;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EDGES: &str = "edges.csv";
pub const FEATURES: &str = "features.csv";
pub const LABELS: &str = "labels.csv";
pub const META: &str = "meta.json";
pub const DISTRIBUTION: &str = "homophily_distribution.csv";

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(Error::read(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn records(path: &Path, headers: bool) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = reader(path, headers)?;
    if headers {
        let h = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
        if h.iter().collect::<Vec<_>>() != ["src", "dst"] {
            return Err(parse_err(path, 1, "expected header `src,dst`"));
        }
    }
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(path, line, e.to_string())
            })?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            Ok((line, r))
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse `{s}`")))
}

pub fn read_graph(dir: &Path) -> Result<Graph> {
    let path = dir.join(FEATURES);
    let rows = records(&path, false)?;
    let d = rows.first().map_or(0, |(_, r)| r.len());
    let mut flat = Vec::with_capacity(rows.len() * d);
    for (line, r) in &rows {
        if r.len() != d {
            return Err(parse_err(
                &path,
                *line,
                format!("expected {d} columns, found {}", r.len()),
            ));
        }
        for s in r {
            let x: f64 = field(&path, *line, s)?;
            if !x.is_finite() {
                return Err(parse_err(&path, *line, "non-finite feature"));
            }
            flat.push(x);
        }
    }
    if rows.is_empty() {
        return Err(parse_err(&path, 0, "no feature rows"));
    }
    let features = Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| parse_err(&path, 0, e.to_string()))?;

    let path = dir.join(EDGES);
    let mut edges = Vec::new();
    for (line, r) in records(&path, true)? {
        if r.len() != 2 {
            return Err(parse_err(&path, line, "expected two columns"));
        }
        edges.push((field(&path, line, &r[0])?, field(&path, line, &r[1])?));
    }

    let path = dir.join(LABELS);
    let labels = if path.exists() {
        let mut labels = Vec::new();
        for (line, r) in records(&path, false)? {
            if r.len() != 1 {
                return Err(parse_err(&path, line, "expected one column"));
            }
            labels.push(field(&path, line, &r[0])?);
        }
        Some(labels)
    } else {
        None
    };
    Ok(Graph::new(&edges, features, labels, None)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(Error::write(path))?))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(Error::write(path))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

pub(crate) fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Writes the three graph files, creating `dir` if needed. Floats use the
/// shortest representation that reads back exactly.
pub fn write_graph(dir: &Path, graph: &Graph) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::write(dir))?;
    let path = dir.join(EDGES);
    let mut w = create(&path)?;
    let io = Error::write(&path);
    let res = (|| {
        writeln!(w, "src,dst")?;
        for (a, b) in graph.edges() {
            writeln!(w, "{a},{b}")?;
        }
        w.flush()
    })();
    res.map_err(io)?;

    let path = dir.join(FEATURES);
    let mut w = create(&path)?;
    let io = Error::write(&path);
    let res = (|| {
        for row in graph.features().rows() {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    })();
    res.map_err(io)?;

    if let Some(labels) = graph.labels() {
        let path = dir.join(LABELS);
        let mut w = create(&path)?;
        let io = Error::write(&path);
        let res = (|| {
            for y in labels {
                writeln!(w, "{y}")?;
            }
            w.flush()
        })();
        res.map_err(io)?;
    }
    Ok(())
}

/// `bin_index,count` rows.
pub fn write_distribution_csv(path: &Path, dist: &HomophilyDistribution) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["bin_index", "count"]).map_err(&err)?;
    for (i, c) in dist.counts().iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(Error::write(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub synth: SynthConfig,
    pub nodes: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub graph_homophily: f64,
    /// True node-homophily counts over `synth.target_histogram.len()` bins.
    pub homophily_distribution: Vec<f64>,
}

impl GraphMeta {
    pub fn measure(synth: &SynthConfig, graph: &Graph) -> Result<Self> {
        let h = true_homophily_all(graph)?;
        let dist = bin_distribution(&h, synth.target_histogram.len())?;
        Ok(Self {
            synth: synth.clone(),
            nodes: graph.node_count(),
            edges: graph.edges().len(),
            mean_degree: 2.0 * graph.edges().len() as f64 / graph.node_count() as f64,
            graph_homophily: graph_homophily(graph)?,
            homophily_distribution: dist.counts().to_vec(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    let io = Error::write(path);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::read(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Graph files plus `meta.json` and the true homophily distribution.
pub fn write_generated(dir: &Path, synth: &SynthConfig, graph: &Graph) -> Result<GraphMeta> {
    write_graph(dir, graph)?;
    let meta = GraphMeta::measure(synth, graph)?;
    write_json(&dir.join(META), &meta)?;
    let dist = HomophilyDistribution::from_counts(meta.homophily_distribution.clone())?;
    write_distribution_csv(&dir.join(DISTRIBUTION), &dist)?;
    Ok(meta)
}
