//! Flat `key = value` run reports.

use std::fmt::{Display, Write as _};

use super::{fmt_f64, format_err, Lines, REPORT_HEADER};
use crate::error::Result;
use crate::eval::{AlignmentReport, TvReport};
use crate::learner::{EdgeSource, ReconstructionResult};
use crate::model::TreeTopology;
use crate::topology::CaterpillarResult;

/// Ordered key-value record of one command.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    entries: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        let mut r = RunReport::default();
        r.set("command", command);
        r
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, fmt_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text, REPORT_HEADER)?;
        let mut r = RunReport::default();
        while lines.pos < lines.lines.len() {
            let ln = lines.pos + 1;
            let line = lines.next("an entry")?;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| format_err(ln, 1, "expected \"key = value\""))?;
            r.entries.push((k.to_string(), v.to_string()));
        }
        Ok(r)
    }

    pub fn add_reconstruction(&mut self, t: &TreeTopology, out: &ReconstructionResult) {
        self.set("learn.depth", out.depth);
        self.set("learn.subtrees", out.subtrees.len());
        self.set("learn.separators", out.separators.len());
        self.set("learn.probe_retries", out.total_retries());
        for e in &out.edges {
            let key = format!("edge.{}-{}", t.name(e.edge.0), t.name(e.edge.1));
            let source = match e.source {
                EdgeSource::Spectral { probes: (b, c), .. } => format!("spectral({b},{c})"),
                EdgeSource::Leaf => "leaf".into(),
                EdgeSource::Separator { old_reference } => format!("separator({old_reference})"),
            };
            self.set(format!("{key}.source"), source);
            self.set(format!("{key}.reference"), e.reference);
            self.set(format!("{key}.retries"), e.retries);
            self.set_f64(format!("{key}.pair_det"), e.pair_det);
            self.set_f64(format!("{key}.factor_det"), e.factor_det);
            self.set_f64(format!("{key}.residual"), e.residual);
            self.set_f64(format!("{key}.projection_correction"), e.projection_correction);
        }
    }

    pub fn add_alignment(&mut self, t: &TreeTopology, a: &AlignmentReport) {
        self.set_f64("eval.max_l1", a.max_l1);
        for (&(u, v), &l1) in &a.per_edge_l1 {
            self.set_f64(format!("eval.edge.{}-{}.l1", t.name(u), t.name(v)), l1);
        }
    }

    pub fn add_tv(&mut self, tv: &TvReport) {
        self.set_f64("eval.tv", tv.tv);
        self.set_f64("eval.l1", tv.l1);
    }

    pub fn add_caterpillar(&mut self, c: &CaterpillarResult) {
        self.set("topology.decided", c.decided);
        self.set("topology.undecided", c.undecided);
        let groups: Vec<String> = c
            .contracted
            .iter()
            .map(|g| g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        self.set("topology.contracted", format!("[{}]", groups.join(";")));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut r = RunReport::new("eval");
        r.set_f64("eval.tv", 0.125);
        r.set("eval.note", "a = b");
        r.set("command", "eval2");
        let text = r.to_text();
        assert!(text.starts_with("TREESPEC-REPORT v1\ncommand = eval2\n"));
        assert_eq!(RunReport::parse(&text).unwrap(), r);
        assert_eq!(r.get("eval.tv").unwrap().parse::<f64>().unwrap(), 0.125);
    }
}
