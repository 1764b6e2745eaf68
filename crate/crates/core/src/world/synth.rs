use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{distance, Location, MapGraph, Tag, TagSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Lattice of `cols x rows` points. With `block > 1` only points on
    /// every `block`-th row or column are kept, giving straight streets with
    /// junctions every `block` locations.
    Grid { cols: usize, rows: usize, block: usize },
    /// Uniform random points joined by their Gabriel graph (planar).
    RandomPlanar { node_count: usize },
}

impl Layout {
    pub fn node_count(&self) -> usize {
        match *self {
            Layout::Grid { cols, rows, block } => {
                let block = block.max(1);
                (0..cols)
                    .flat_map(|x| (0..rows).map(move |y| (x, y)))
                    .filter(|&(x, y)| x % block == 0 || y % block == 0)
                    .count()
            }
            Layout::RandomPlanar { node_count } => node_count,
        }
    }
}

/// Per-tag Bernoulli probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagDensities {
    pub tunnel: f64,
    pub motorway: f64,
    pub junction_ahead: f64,
    pub junction_behind: f64,
    pub gap_left: f64,
    pub gap_right: f64,
}

impl TagDensities {
    pub fn uniform(p: f64) -> TagDensities {
        TagDensities {
            tunnel: 0.0,
            motorway: 0.0,
            junction_ahead: p,
            junction_behind: p,
            gap_left: p,
            gap_right: p,
        }
    }

    pub fn get(&self, tag: Tag) -> f64 {
        match tag {
            Tag::Tunnel => self.tunnel,
            Tag::Motorway => self.motorway,
            Tag::JunctionAhead => self.junction_ahead,
            Tag::JunctionBehind => self.junction_behind,
            Tag::GapLeft => self.gap_left,
            Tag::GapRight => self.gap_right,
        }
    }

    pub fn max(&self) -> f64 {
        Tag::ALL.iter().map(|&t| self.get(t)).fold(0.0, f64::max)
    }
}

impl Default for TagDensities {
    fn default() -> Self {
        TagDensities::uniform(0.25)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticWorldConfig {
    pub layout: Layout,
    /// Distance between lattice neighbors (grid) or target mean spacing.
    pub spacing: f64,
    pub edge_drop_prob: f64,
    pub latent_dim: usize,
    pub tag_densities: TagDensities,
    /// Magnitude of the per-tag latent offset relative to the base latent.
    pub tag_offset: f64,
    pub seed: u64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        SyntheticWorldConfig {
            layout: Layout::Grid { cols: 10, rows: 10, block: 1 },
            spacing: 10.0,
            edge_drop_prob: 0.0,
            latent_dim: 32,
            tag_densities: TagDensities::default(),
            tag_offset: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.layout.node_count();
        if n < 2 {
            return Err(Error::invalid(format!("node_count must be >= 2, got {n}")));
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.edge_drop_prob) {
            return Err(Error::invalid("edge_drop_prob must be in [0, 1]"));
        }
        if let Some(t) = Tag::ALL.iter().find(|&&t| !prob_ok(self.tag_densities.get(t))) {
            return Err(Error::invalid(format!("density of {} must be in [0, 1]", t.name())));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::invalid("spacing must be positive"));
        }
        if !self.tag_offset.is_finite() {
            return Err(Error::invalid("tag_offset must be finite"));
        }
        Ok(())
    }
}

// Independent random streams so that, e.g., changing tag densities does not
// reshuffle the edge drops.
const STREAM_LAYOUT: u64 = 1;
const STREAM_EDGES: u64 = 2;
const STREAM_HEADINGS: u64 = 3;
const STREAM_TAGS: u64 = 4;
const STREAM_LATENTS: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates a connected synthetic world. Only the largest connected
/// component survives edge dropping; ids are re-numbered `0..n`.
pub fn generate_synthetic_world(cfg: &SyntheticWorldConfig) -> Result<MapGraph> {
    cfg.validate()?;
    let (positions, edges) = match cfg.layout {
        Layout::Grid { cols, rows, block } => grid_layout(cols, rows, block.max(1), cfg.spacing),
        Layout::RandomPlanar { node_count } => planar_layout(node_count, cfg.spacing, cfg.seed),
    };

    let mut rng = stream(cfg.seed, STREAM_EDGES);
    let kept: Vec<(usize, usize)> = edges
        .into_iter()
        .filter(|_| rng.random::<f64>() >= cfg.edge_drop_prob)
        .collect();

    let n = positions.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &kept {
        adj[a].push(b);
        adj[b].push(a);
    }
    let component = largest_component(&adj);
    if component.len() < 2 {
        return Err(Error::invalid("generated world has no connected pair of locations"));
    }
    let mut new_id = vec![u32::MAX; n];
    for (k, &old) in component.iter().enumerate() {
        new_id[old] = k as u32;
    }

    let mut heading_rng = stream(cfg.seed, STREAM_HEADINGS);
    let mut tag_rng = stream(cfg.seed, STREAM_TAGS);
    let mut latent_rng = stream(cfg.seed, STREAM_LATENTS);

    let offsets: Vec<Vec<f64>> = Tag::ALL
        .iter()
        .map(|_| {
            (0..cfg.latent_dim)
                .map(|_| cfg.tag_offset * latent_rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let locations = component
        .iter()
        .map(|&old| {
            let mut neighbors: Vec<u32> = adj[old].iter().map(|&o| new_id[o]).collect();
            neighbors.sort_unstable();
            let toward = adj[old][heading_rng.random_range(0..adj[old].len())];
            let heading = super::bearing_deg(positions[old], positions[toward]);

            let mut tags = TagSet::empty();
            for tag in Tag::ALL {
                if tag_rng.random::<f64>() < cfg.tag_densities.get(tag) {
                    tags |= tag.flag();
                }
            }
            let mut latent: Vec<f64> = (0..cfg.latent_dim)
                .map(|_| latent_rng.sample::<f64, _>(StandardNormal))
                .collect();
            for (t, tag) in Tag::ALL.iter().enumerate() {
                if tags.contains(tag.flag()) {
                    for (v, o) in latent.iter_mut().zip(&offsets[t]) {
                        *v += o;
                    }
                }
            }
            Location {
                id: new_id[old],
                position: positions[old],
                heading,
                neighbors,
                tags,
                latent,
            }
        })
        .collect();
    MapGraph::from_locations(locations)
}

type Layouted = (Vec<[f64; 2]>, Vec<(usize, usize)>);

fn grid_layout(cols: usize, rows: usize, block: usize, spacing: f64) -> Layouted {
    let on_street = |x: usize, y: usize| x.is_multiple_of(block) || y.is_multiple_of(block);
    let mut index = vec![usize::MAX; cols * rows];
    let mut positions = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            if on_street(x, y) {
                index[y * cols + x] = positions.len();
                positions.push([x as f64 * spacing, y as f64 * spacing]);
            }
        }
    }
    let mut edges = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            let here = index[y * cols + x];
            if here == usize::MAX {
                continue;
            }
            if x + 1 < cols && y % block == 0 {
                edges.push((here, index[y * cols + x + 1]));
            }
            if y + 1 < rows && x % block == 0 {
                edges.push((here, index[(y + 1) * cols + x]));
            }
        }
    }
    (positions, edges)
}

/// Random points in a square sized so nearest-neighbor distances are on the
/// order of `spacing`, connected by the Gabriel graph restricted to each
/// point's nearest candidates.
fn planar_layout(n: usize, spacing: f64, seed: u64) -> Layouted {
    const CANDIDATES: usize = 10;
    let mut rng = stream(seed, STREAM_LAYOUT);
    // Density 1 / spacing^2.
    let side = spacing * (n as f64).sqrt();
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();

    let mut edges = Vec::new();
    for p in 0..n {
        let mut near: Vec<(f64, usize)> = (0..n)
            .filter(|&q| q != p)
            .map(|q| (distance(positions[p], positions[q]), q))
            .collect();
        let k = CANDIDATES.min(near.len());
        if k == 0 {
            continue;
        }
        near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.truncate(k);
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // Any point inside the circle on diameter pq is closer to p than q
        // is, so checking the closer candidates is exact.
        for (qi, &(_, q)) in near.iter().enumerate() {
            let mid = [
                0.5 * (positions[p][0] + positions[q][0]),
                0.5 * (positions[p][1] + positions[q][1]),
            ];
            let radius = 0.5 * distance(positions[p], positions[q]);
            let blocked = near[..qi]
                .iter()
                .any(|&(_, r)| distance(mid, positions[r]) < radius);
            if !blocked {
                edges.push((p.min(q), p.max(q)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    (positions, edges)
}

/// Vertices of the largest connected component, ascending. Ties go to the
/// component containing the smallest vertex.
fn largest_component(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut best: Vec<usize> = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort_unstable();
    best
}
