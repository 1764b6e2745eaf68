//! Road-network world model: discrete locations, adjacency, routes and turn
//! patterns.

mod io;
mod routes;
mod synth;

use std::collections::HashMap;
use std::fmt;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_graph, parse_graph, save_graph, write_graph};
pub use routes::{
    bearing_change, bearing_deg, enumerate_routes, extend_routes, turn_bit, turn_pattern,
    DEFAULT_TURN_THRESHOLD_DEG,
};
pub use synth::{generate_synthetic_world, Layout, SyntheticWorldConfig, TagDensities};

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
    #[serde(transparent)]
    pub struct TagSet: u8 {
        const TUNNEL = 1 << 0;
        const MOTORWAY = 1 << 1;
        const JUNCTION_AHEAD = 1 << 2;
        const JUNCTION_BEHIND = 1 << 3;
        const GAP_LEFT = 1 << 4;
        const GAP_RIGHT = 1 << 5;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Tunnel,
    Motorway,
    JunctionAhead,
    JunctionBehind,
    GapLeft,
    GapRight,
}

impl Tag {
    pub const ALL: [Tag; 6] = [
        Tag::Tunnel,
        Tag::Motorway,
        Tag::JunctionAhead,
        Tag::JunctionBehind,
        Tag::GapLeft,
        Tag::GapRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Tunnel => "tunnel",
            Tag::Motorway => "motorway",
            Tag::JunctionAhead => "junction_ahead",
            Tag::JunctionBehind => "junction_behind",
            Tag::GapLeft => "gap_left",
            Tag::GapRight => "gap_right",
        }
    }

    pub fn from_name(name: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn flag(self) -> TagSet {
        match self {
            Tag::Tunnel => TagSet::TUNNEL,
            Tag::Motorway => TagSet::MOTORWAY,
            Tag::JunctionAhead => TagSet::JUNCTION_AHEAD,
            Tag::JunctionBehind => TagSet::JUNCTION_BEHIND,
            Tag::GapLeft => TagSet::GAP_LEFT,
            Tag::GapRight => TagSet::GAP_RIGHT,
        }
    }
}

impl TagSet {
    /// Tags excluded from simulated ground-truth routes by default.
    pub fn default_exclusions() -> TagSet {
        TagSet::TUNNEL | TagSet::MOTORWAY
    }

    pub fn tags(self) -> impl Iterator<Item = Tag> {
        Tag::ALL.into_iter().filter(move |t| self.contains(t.flag()))
    }

    /// Parses a comma-separated tag list; `-` or an empty string is the empty set.
    pub fn parse_list(s: &str) -> std::result::Result<TagSet, String> {
        let mut set = TagSet::empty();
        if s.is_empty() || s == "-" {
            return Ok(set);
        }
        for name in s.split(',') {
            let tag = Tag::from_name(name.trim()).ok_or_else(|| format!("unknown tag '{name}'"))?;
            set |= tag.flag();
        }
        Ok(set)
    }
}

impl fmt::Display for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        let names: Vec<_> = self.tags().map(Tag::name).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub id: u32,
    /// Planar position in meters.
    pub position: [f64; 2],
    /// Degrees clockwise from +y, in `[0, 360)`.
    pub heading: f64,
    pub neighbors: Vec<u32>,
    pub tags: TagSet,
    /// Synthetic stand-in for what the location looks like, in either domain.
    pub latent: Vec<f64>,
}

/// Immutable road graph.
///
/// Locations are kept sorted by id, so "index order" and "id order" agree;
/// the search code works on dense indices and converts back to ids at the
/// boundary.
#[derive(Debug, Clone)]
pub struct MapGraph {
    locations: Vec<Location>,
    index: HashMap<u32, usize>,
    adjacency: Vec<Vec<usize>>,
    spacing: f64,
}

impl MapGraph {
    /// Builds a graph from raw locations, checking every invariant.
    /// Neighbor lists are sorted by id.
    pub fn from_locations(mut locations: Vec<Location>) -> Result<MapGraph> {
        locations.sort_by_key(|l| l.id);
        let mut index = HashMap::with_capacity(locations.len());
        for (i, loc) in locations.iter().enumerate() {
            if index.insert(loc.id, i).is_some() {
                return Err(Error::Invariant { id: loc.id, msg: "duplicate id".into() });
            }
        }
        let latent_dim = locations.first().map_or(0, |l| l.latent.len());
        for loc in &mut locations {
            if !(0.0..360.0).contains(&loc.heading) {
                return Err(Error::Invariant {
                    id: loc.id,
                    msg: format!("heading {} outside [0, 360)", loc.heading),
                });
            }
            if !loc.position.iter().all(|c| c.is_finite()) {
                return Err(Error::Invariant { id: loc.id, msg: "non-finite position".into() });
            }
            if loc.latent.len() != latent_dim {
                return Err(Error::Invariant {
                    id: loc.id,
                    msg: format!("latent dimension {} differs from {latent_dim}", loc.latent.len()),
                });
            }
            loc.neighbors.sort_unstable();
            if loc.neighbors.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invariant { id: loc.id, msg: "duplicate neighbor".into() });
            }
            if loc.neighbors.contains(&loc.id) {
                return Err(Error::Invariant { id: loc.id, msg: "self-referencing neighbor".into() });
            }
        }

        let mut adjacency = Vec::with_capacity(locations.len());
        let mut edge_len_sum = 0.0;
        let mut edge_count = 0usize;
        for loc in &locations {
            let mut adj = Vec::with_capacity(loc.neighbors.len());
            for &nb in &loc.neighbors {
                let &j = index.get(&nb).ok_or_else(|| Error::Invariant {
                    id: loc.id,
                    msg: format!("neighbor {nb} does not exist"),
                })?;
                if locations[j].neighbors.binary_search(&loc.id).is_err() {
                    return Err(Error::Invariant {
                        id: loc.id,
                        msg: format!("edge to {nb} is not symmetric"),
                    });
                }
                if loc.id < nb {
                    edge_len_sum += distance(loc.position, locations[j].position);
                    edge_count += 1;
                }
                adj.push(j);
            }
            adjacency.push(adj);
        }

        let spacing = if edge_count > 0 { edge_len_sum / edge_count as f64 } else { 0.0 };
        if !(spacing > 0.0) {
            let id = locations.first().map_or(0, |l| l.id);
            return Err(Error::Invariant {
                id,
                msg: "graph has no edges of positive length (spacing must be > 0)".into(),
            });
        }
        Ok(MapGraph { locations, index, adjacency, spacing })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Mean edge length in meters.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn latent_dim(&self) -> usize {
        self.locations.first().map_or(0, |l| l.latent.len())
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location(&self, id: u32) -> Result<&Location> {
        self.index_of(id).map(|i| &self.locations[i])
    }

    pub fn index_of(&self, id: u32) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownLocation(id))
    }

    pub fn id_at(&self, index: usize) -> u32 {
        self.locations[index].id
    }

    pub fn at(&self, index: usize) -> &Location {
        &self.locations[index]
    }

    /// Neighbor indices of the location at `index`, ascending.
    pub fn adjacent(&self, index: usize) -> &[usize] {
        &self.adjacency[index]
    }

    pub fn degree(&self, id: u32) -> Result<usize> {
        Ok(self.adjacency[self.index_of(id)?].len())
    }

    pub fn are_adjacent(&self, a: u32, b: u32) -> bool {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) => self.adjacency[i].binary_search(&j).is_ok(),
            _ => false,
        }
    }

    /// Checks Route invariants: known ids, all distinct, consecutive adjacency.
    pub fn validate_route(&self, route: &Route) -> Result<()> {
        let ids = route.ids();
        if ids.is_empty() {
            return Err(Error::invalid("empty route"));
        }
        for (k, &id) in ids.iter().enumerate() {
            self.index_of(id)?;
            if ids[..k].contains(&id) {
                return Err(Error::invalid(format!("route revisits location {id}")));
            }
        }
        for w in ids.windows(2) {
            if !self.are_adjacent(w[0], w[1]) {
                return Err(Error::invalid(format!("locations {} and {} are not adjacent", w[0], w[1])));
            }
        }
        Ok(())
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Ordered sequence of location ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route(Vec<u32>);

impl Route {
    pub fn new(ids: Vec<u32>) -> Route {
        Route(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    pub fn reversed(&self) -> Route {
        Route(self.0.iter().rev().copied().collect())
    }

    pub fn prefix(&self, len: usize) -> Route {
        Route(self.0[..len].to_vec())
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.0
    }
}

impl From<Vec<u32>> for Route {
    fn from(ids: Vec<u32>) -> Self {
        Route(ids)
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Binary turn/no-turn pattern; one bit fewer than the route it describes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TurnPattern(pub Vec<bool>);

impl TurnPattern {
    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_turns(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for TurnPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
