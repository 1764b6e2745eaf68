//! Comparison baselines: 4-bit binary semantic descriptors matched by
//! Hamming distance, and matching on the road turn pattern alone.

use std::fmt;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localize::{finish_ranking, turn_filter, LocalizeOutcome, LocalizerConfig, RankedRoute};
use crate::world::{MapGraph, Route, TagSet, TurnPattern};

/// Bits, in order: junction in the first junction view, junction in the
/// second junction view, building gap left, building gap right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BsdCode(pub [bool; 4]);

impl BsdCode {
    pub fn from_tags(tags: TagSet) -> BsdCode {
        BsdCode([
            tags.contains(TagSet::JUNCTION_AHEAD),
            tags.contains(TagSet::JUNCTION_BEHIND),
            tags.contains(TagSet::GAP_LEFT),
            tags.contains(TagSet::GAP_RIGHT),
        ])
    }

    pub fn hamming(self, other: BsdCode) -> u32 {
        self.0.iter().zip(other.0).filter(|(a, b)| **a != *b).count() as u32
    }

    pub fn parse(s: &str) -> Option<BsdCode> {
        let b: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<_>>()?;
        Some(BsdCode(b.try_into().ok()?))
    }
}

impl fmt::Display for BsdCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Map-side code, read from the location's semantic tags.
pub fn bsd_from_map(id: u32, g: &MapGraph) -> Result<BsdCode> {
    Ok(BsdCode::from_tags(g.location(id)?.tags))
}

/// Map codes for every location, by dense index.
pub fn map_codes(g: &MapGraph) -> Vec<BsdCode> {
    g.locations().iter().map(|l| BsdCode::from_tags(l.tags)).collect()
}

/// Per-bit flip probabilities simulating imperfect image classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BsdNoise {
    pub junction_flip: f64,
    pub gap_flip: f64,
}

impl Default for BsdNoise {
    fn default() -> Self {
        BsdNoise { junction_flip: 0.3, gap_flip: 0.23 }
    }
}

impl BsdNoise {
    pub fn none() -> BsdNoise {
        BsdNoise { junction_flip: 0.0, gap_flip: 0.0 }
    }

    pub fn corrupt<R: Rng + ?Sized>(&self, code: BsdCode, rng: &mut R) -> BsdCode {
        let mut bits = code.0;
        for (i, b) in bits.iter_mut().enumerate() {
            let p = if i < 2 { self.junction_flip } else { self.gap_flip };
            if p > 0.0 && rng.random::<f64>() < p {
                *b = !*b;
            }
        }
        BsdCode(bits)
    }
}

/// Query-side codes observed along `route`.
pub fn simulate_query_codes<R: Rng + ?Sized>(
    route: &Route,
    g: &MapGraph,
    noise: &BsdNoise,
    rng: &mut R,
) -> Result<Vec<BsdCode>> {
    route.ids().iter().map(|&id| Ok(noise.corrupt(bsd_from_map(id, g)?, rng))).collect()
}

/// Hamming distance from `query` to every location, by dense index.
pub fn hamming_costs(query: BsdCode, codes: &[BsdCode]) -> Vec<f64> {
    codes.iter().map(|&c| query.hamming(c) as f64).collect()
}

/// Ranks routes by total Hamming distance between the query code sequence
/// and the map codes along each route.
pub fn bsd_localize(
    query: &[BsdCode],
    routes: &[Route],
    g: &MapGraph,
    turns: Option<&TurnPattern>,
    cfg: &LocalizerConfig,
) -> Result<LocalizeOutcome<f64>> {
    cfg.validate()?;
    let candidates: Vec<&Route> = match (cfg.use_turns, turns) {
        (true, Some(t)) if !routes.is_empty() => {
            turn_filter(routes, g, t, cfg.turn_threshold).collect::<Result<_>>()?
        }
        _ => routes.iter().collect(),
    };
    let mut ranked = Vec::with_capacity(candidates.len());
    for r in candidates {
        if r.len() != query.len() {
            return Err(Error::invalid(format!(
                "candidate route length {} differs from query length {}",
                r.len(),
                query.len()
            )));
        }
        let mut total = 0u32;
        for (&id, &q) in r.ids().iter().zip(query) {
            total += q.hamming(bsd_from_map(id, g)?);
        }
        ranked.push(RankedRoute { route: r.clone(), distance: total as f64 });
    }
    Ok(finish_ranking(ranked, cfg.top_k))
}

/// Routes whose map turn pattern equals `turns`, in lexicographic order.
pub fn turn_only_localize(
    turns: &TurnPattern,
    routes: &[Route],
    g: &MapGraph,
    threshold: f64,
) -> Result<Vec<Route>> {
    let fitting: Vec<Route> = routes.iter().filter(|r| r.len() == turns.len() + 1).cloned().collect();
    if fitting.is_empty() {
        return Ok(Vec::new());
    }
    let mut out: Vec<Route> = turn_filter(&fitting, g, turns, threshold)
        .map(|r| r.cloned())
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// `id,code` CSV.
pub fn write_codes_csv<W: Write>(w: W, g: &MapGraph) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["id", "bsd"])?;
    for l in g.locations() {
        wr.write_record([l.id.to_string(), BsdCode::from_tags(l.tags).to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
