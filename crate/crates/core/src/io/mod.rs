//! Text formats for models, samples, distance matrices and run reports.
//!
//! Every file starts with a magic header line. Numbers are written with 17
//! significant digits so that parsing restores them bit for bit.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use config::{Mode, RunConfig, Strictness};
pub use report::RunReport;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{LeafSamples, MarkovTreeModel, TransitionMatrix, TreeTopology};
use crate::topology::LogDetMetric;

pub const MODEL_HEADER: &str = "TREESPEC-MODEL v1";
pub const SAMPLES_HEADER: &str = "TREESPEC-SAMPLES v1";
pub const DIST_HEADER: &str = "TREESPEC-DIST v1";
pub const REPORT_HEADER: &str = "TREESPEC-REPORT v1";

pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".into()
    } else {
        format!("{x:.16e}")
    }
}

fn format_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        column,
        message: message.into(),
    }
}

/// Line cursor reporting 1-based positions.
struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, header: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        match lines.first() {
            Some(first) if first.trim_end() == header => Ok(Lines { lines, pos: 1 }),
            _ => Err(format_err(1, 1, format!("expected header {header:?}"))),
        }
    }

    fn line_no(&self) -> usize {
        self.pos
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| format_err(self.pos + 1, 1, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(line)
    }

    fn rest_blank(&self) -> Result<()> {
        for (i, l) in self.lines.iter().enumerate().skip(self.pos) {
            if !l.trim().is_empty() {
                return Err(format_err(i + 1, 1, "unexpected trailing content"));
            }
        }
        Ok(())
    }
}

/// Splits on whitespace, keeping 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn parse_num<T: std::str::FromStr>(line: usize, (col, tok): (usize, &str), what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| format_err(line, col, format!("expected {what}, found {tok:?}")))
}

fn parse_floats(line_no: usize, line: &str, count: usize, what: &str) -> Result<Vec<f64>> {
    let toks = tokens(line);
    if toks.len() != count {
        return Err(format_err(line_no, 1, format!("expected {count} {what}, found {}", toks.len())));
    }
    toks.into_iter()
        .map(|t| {
            if t.1 == "inf" {
                Ok(f64::INFINITY)
            } else {
                parse_num(line_no, t, "a decimal number")
            }
        })
        .collect()
}

// ----- models -----

pub fn write_model(m: &MarkovTreeModel) -> String {
    let t = m.topology();
    let hang = t.internal_nodes().first().copied().unwrap_or_else(|| t.leaf(1));
    let mut out = String::new();
    let row = |xs: &mut dyn Iterator<Item = f64>| xs.map(fmt_f64).collect::<Vec<_>>().join(" ");
    writeln!(out, "{MODEL_HEADER}").unwrap();
    writeln!(out, "{}", m.k()).unwrap();
    writeln!(out, "{}", t.to_newick(hang, true)).unwrap();
    writeln!(out, "{}", t.name(m.root())).unwrap();
    writeln!(out, "{}", row(&mut m.root_dist().iter().copied())).unwrap();
    for (u, v) in m.directed_edges() {
        writeln!(out, "EDGE {} {}", t.name(u), t.name(v)).unwrap();
        let p = m.edge_matrix(u, v).expect("directed edge has a matrix").entries();
        for i in 0..m.k() {
            writeln!(out, "{}", row(&mut p.row(i).iter().copied())).unwrap();
        }
    }
    out
}

pub fn parse_model(text: &str) -> Result<MarkovTreeModel> {
    let mut lines = Lines::new(text, MODEL_HEADER)?;
    let n = lines.line_no() + 1;
    let k_line = lines.next("the state count")?;
    let k_tok = tokens(k_line);
    if k_tok.len() != 1 {
        return Err(format_err(n, 1, "expected the state count k alone on its line"));
    }
    let k: usize = parse_num(n, k_tok[0], "the state count k")?;
    if k < 2 || k > u16::MAX as usize {
        return Err(format_err(n, k_tok[0].0, format!("state count {k} out of range")));
    }
    let n = lines.line_no() + 1;
    let topology = TreeTopology::parse_newick(lines.next("a Newick tree")?.trim()).map_err(|e| match e {
        Error::Format { column, message, .. } => format_err(n, column, message),
        other => format_err(n, 1, other.to_string()),
    })?;
    let n = lines.line_no() + 1;
    let root_name = lines.next("the root name")?.trim();
    let root = topology
        .node_by_name(root_name)
        .ok_or_else(|| format_err(n, 1, format!("root {root_name:?} is not a node of the tree")))?;
    let n = lines.line_no() + 1;
    let root_dist = parse_floats(n, lines.next("the root distribution")?, k, "probabilities")?;
    let mut edges = BTreeMap::new();
    for _ in 0..topology.edge_count() {
        let n = lines.line_no() + 1;
        let head = lines.next("an EDGE block")?;
        let toks = tokens(head);
        if toks.len() != 3 || toks[0].1 != "EDGE" {
            return Err(format_err(n, 1, "expected \"EDGE u v\""));
        }
        let node = |(col, name): (usize, &str)| {
            topology
                .node_by_name(name)
                .ok_or_else(|| format_err(n, col, format!("unknown node {name:?}")))
        };
        let (u, v) = (node(toks[1])?, node(toks[2])?);
        let mut rows = Vec::with_capacity(k);
        for _ in 0..k {
            let n = lines.line_no() + 1;
            rows.push(parse_floats(n, lines.next("a matrix row")?, k, "matrix entries")?);
        }
        let p = TransitionMatrix::from_rows(&rows).map_err(|e| format_err(n, 1, e.to_string()))?;
        if edges.insert((u, v), p).is_some() {
            return Err(format_err(n, 1, format!("duplicate edge ({}, {})", toks[1].1, toks[2].1)));
        }
    }
    lines.rest_blank()?;
    MarkovTreeModel::new(topology, root, root_dist, edges)
}

// ----- samples -----

pub fn write_samples(s: &LeafSamples) -> String {
    let mut out = String::with_capacity(s.m() * s.n() * 2 + 64);
    writeln!(out, "{SAMPLES_HEADER}").unwrap();
    writeln!(out, "{} {} {}", s.m(), s.n(), s.k()).unwrap();
    for row in s.rows() {
        let mut first = true;
        for x in row {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_samples(text: &str) -> Result<LeafSamples> {
    let mut lines = Lines::new(text, SAMPLES_HEADER)?;
    let ln = lines.line_no() + 1;
    let dims = tokens(lines.next("\"m n k\"")?);
    if dims.len() != 3 {
        return Err(format_err(ln, 1, "expected \"m n k\""));
    }
    let m: usize = parse_num(ln, dims[0], "the sample count m")?;
    let n: usize = parse_num(ln, dims[1], "the leaf count n")?;
    let k: usize = parse_num(ln, dims[2], "the state count k")?;
    if k < 2 || k > u16::MAX as usize {
        return Err(format_err(ln, dims[2].0, format!("state count {k} out of range")));
    }
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m {
        let ln = lines.line_no() + 1;
        let toks = tokens(lines.next("a sample row")?);
        if toks.len() != n {
            return Err(format_err(ln, 1, format!("expected {n} states, found {}", toks.len())));
        }
        for t in toks {
            let x: u16 = parse_num(ln, t, "a state index")?;
            if x as usize >= k {
                return Err(format_err(ln, t.0, format!("state {x} out of range for k = {k}")));
            }
            data.push(x);
        }
    }
    lines.rest_blank()?;
    LeafSamples::new(m, n, k, data)
}

// ----- distance matrices -----

pub fn write_dist(d: &LogDetMetric) -> String {
    let mut out = String::new();
    writeln!(out, "{DIST_HEADER}").unwrap();
    writeln!(out, "{}", d.n()).unwrap();
    for b in 2..=d.n() {
        let row: Vec<String> = (1..b).map(|a| fmt_f64(d.get(a, b))).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn parse_dist(text: &str) -> Result<LogDetMetric> {
    let mut lines = Lines::new(text, DIST_HEADER)?;
    let ln = lines.line_no() + 1;
    let n_tok = tokens(lines.next("the leaf count")?);
    if n_tok.len() != 1 {
        return Err(format_err(ln, 1, "expected the leaf count alone on its line"));
    }
    let n: usize = parse_num(ln, n_tok[0], "the leaf count")?;
    if n < 2 {
        return Err(format_err(ln, n_tok[0].0, "need at least two leaves"));
    }
    let mut rows = Vec::with_capacity(n - 1);
    for i in 1..n {
        let ln = lines.line_no() + 1;
        let row = parse_floats(ln, lines.next("a distance row")?, i, "distances")?;
        if let Some(pos) = row.iter().position(|x| x.is_nan() || *x < 0.0) {
            return Err(format_err(ln, 1, format!("entry {} is not a nonnegative distance", pos + 1)));
        }
        rows.push(row);
    }
    lines.rest_blank()?;
    LogDetMetric::from_lower_triangle(n, &rows)
}

/// Model equality up to node ids: same tree, same names, same numbers.
pub fn same_model(a: &MarkovTreeModel, b: &MarkovTreeModel) -> bool {
    let (ta, tb) = (a.topology(), b.topology());
    if a.k() != b.k() || ta.node_count() != tb.node_count() || ta.name(a.root()) != tb.name(b.root()) {
        return false;
    }
    if a.root_dist() != b.root_dist() {
        return false;
    }
    a.directed_edges().into_iter().all(|(u, v)| {
        let (Some(bu), Some(bv)) = (tb.node_by_name(ta.name(u)), tb.node_by_name(ta.name(v))) else {
            return false;
        };
        let pa: &Matrix = a.edge_matrix(u, v).unwrap().entries();
        b.edge_matrix(bu, bv).is_some_and(|pb| pb.entries() == pa)
    })
}
