//! Line-oriented text format:
//!
//! ```text
//! # comment
//! N <id> <x_m> <y_m> <heading_deg> <tag,...|->
//! E <id_a> <id_b>
//! L <id> <f0> <f1> ...
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{Location, MapGraph, TagSet};
use crate::error::{Error, Result};

pub fn load_graph(path: impl AsRef<Path>) -> Result<MapGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).with_context(format!("reading {}", path.display())))?;
    parse_graph(&text)
}

pub fn save_graph(g: &MapGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_graph(g))?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{tok}'")))
}

pub fn parse_graph(text: &str) -> Result<MapGraph> {
    let mut nodes: BTreeMap<u32, Location> = BTreeMap::new();
    let mut edges: Vec<(usize, u32, u32)> = Vec::new();
    let mut seen_edges: HashSet<(u32, u32)> = HashSet::new();
    let mut latents: Vec<(usize, u32, Vec<f64>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("N") => {
                let id: u32 = field(toks.next(), line, "node id")?;
                let x: f64 = field(toks.next(), line, "x coordinate")?;
                let y: f64 = field(toks.next(), line, "y coordinate")?;
                let heading: f64 = field(toks.next(), line, "heading")?;
                let tags = match toks.next() {
                    Some(t) => TagSet::parse_list(t).map_err(|m| parse_err(line, m))?,
                    None => TagSet::empty(),
                };
                if toks.next().is_some() {
                    return Err(parse_err(line, "trailing fields on node record"));
                }
                let loc = Location {
                    id,
                    position: [x, y],
                    heading,
                    neighbors: Vec::new(),
                    tags,
                    latent: Vec::new(),
                };
                if nodes.insert(id, loc).is_some() {
                    return Err(parse_err(line, format!("duplicate node {id}")));
                }
            }
            Some("E") => {
                let a: u32 = field(toks.next(), line, "edge endpoint")?;
                let b: u32 = field(toks.next(), line, "edge endpoint")?;
                if toks.next().is_some() {
                    return Err(parse_err(line, "trailing fields on edge record"));
                }
                if !seen_edges.insert((a.min(b), a.max(b))) {
                    return Err(parse_err(line, format!("duplicate edge {a}-{b}")));
                }
                edges.push((line, a, b));
            }
            Some("L") => {
                let id: u32 = field(toks.next(), line, "latent id")?;
                let values = toks
                    .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("invalid latent value '{t}'"))))
                    .collect::<Result<Vec<_>>>()?;
                latents.push((line, id, values));
            }
            Some(other) => return Err(parse_err(line, format!("unknown record type '{other}'"))),
            None => unreachable!("empty lines are skipped"),
        }
    }

    for (line, a, b) in edges {
        for (from, to) in [(a, b), (b, a)] {
            let node = nodes.get_mut(&from).ok_or_else(|| Error::Invariant {
                id: from,
                msg: format!("edge on line {line} references unknown location"),
            })?;
            node.neighbors.push(to);
        }
    }
    for (line, id, values) in latents {
        let node = nodes.get_mut(&id).ok_or_else(|| Error::Invariant {
            id,
            msg: format!("latent on line {line} references unknown location"),
        })?;
        if !node.latent.is_empty() {
            return Err(parse_err(line, format!("duplicate latent for {id}")));
        }
        node.latent = values;
    }
    MapGraph::from_locations(nodes.into_values().collect())
}

/// Serializes with shortest round-trip float formatting, so a parse/write
/// cycle reproduces the text byte for byte.
pub fn write_graph(g: &MapGraph) -> String {
    let mut out = String::new();
    writeln!(out, "# {} locations, {} edges", g.len(), g.edge_count()).unwrap();
    for l in g.locations() {
        writeln!(out, "N {} {} {} {} {}", l.id, l.position[0], l.position[1], l.heading, l.tags).unwrap();
    }
    for l in g.locations() {
        for &nb in l.neighbors.iter().filter(|&&nb| nb > l.id) {
            writeln!(out, "E {} {}", l.id, nb).unwrap();
        }
    }
    for l in g.locations().iter().filter(|l| !l.latent.is_empty()) {
        write!(out, "L {}", l.id).unwrap();
        for v in &l.latent {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}
