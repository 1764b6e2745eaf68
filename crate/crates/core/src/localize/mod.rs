//! Route search: route descriptors, route distance, exhaustive ranking of
//! candidate routes, and the incremental per-step engine with turn
//! filtering and culling.

mod candidates;

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embed::{Descriptor, DescriptorStore};
use crate::error::{Error, Result};
use crate::scalar::{euclidean, Real};
use crate::world::{turn_pattern, MapGraph, Route, TurnPattern, DEFAULT_TURN_THRESHOLD_DEG};

pub use candidates::{localize_step, step_with_costs, CandidateSet, Entry};

/// Per-location descriptors along a route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteDescriptor<T> {
    parts: Vec<Descriptor<T>>,
}

impl<T: Real> RouteDescriptor<T> {
    pub fn new(parts: Vec<Descriptor<T>>) -> Result<Self> {
        if let Some(first) = parts.first() {
            let dim = first.dim();
            if let Some(bad) = parts.iter().find(|p| p.dim() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: bad.dim() });
            }
        }
        Ok(RouteDescriptor { parts })
    }

    /// Map-side descriptor of a route, read from the store.
    pub fn from_route(route: &Route, store: &DescriptorStore<T>) -> Result<Self> {
        let parts = route
            .ids()
            .iter()
            .map(|&id| {
                store
                    .get(id)
                    .map(|v| Descriptor::from_raw(v.to_vec()))
                    .ok_or_else(|| Error::invalid(format!("no descriptor stored for location {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }

    pub fn parts(&self) -> &[Descriptor<T>] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.parts.first().map_or(0, Descriptor::dim)
    }

    pub fn prefix(&self, len: usize) -> Self {
        RouteDescriptor { parts: self.parts[..len].to_vec() }
    }
}

/// Sum of Euclidean distances between corresponding descriptors.
pub fn route_distance<T: Real>(sx: &RouteDescriptor<T>, sy: &RouteDescriptor<T>) -> Result<T> {
    if sx.len() != sy.len() {
        return Err(Error::invalid(format!("route lengths differ: {} vs {}", sx.len(), sy.len())));
    }
    let mut total = T::zero();
    for (a, b) in sx.parts.iter().zip(&sy.parts) {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
        }
        total += euclidean(a.values(), b.values());
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    /// Drop candidates whose map turn pattern disagrees with the query's.
    pub use_turns: bool,
    /// Fraction of candidates discarded per step; 0 disables culling.
    pub cull_fraction: f64,
    /// Culling never leaves fewer candidates than this.
    pub cull_floor: usize,
    /// Ranked entries reported; 0 reports all.
    pub top_k: usize,
    pub turn_threshold: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig {
            use_turns: false,
            cull_fraction: 0.0,
            cull_floor: 100,
            top_k: 5,
            turn_threshold: DEFAULT_TURN_THRESHOLD_DEG,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.cull_fraction) {
            return Err(Error::invalid("cull_fraction must be in [0, 1)"));
        }
        if self.cull_floor < 1 {
            return Err(Error::invalid("cull_floor must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRoute<T> {
    pub route: Route,
    pub distance: T,
}

pub type Ranked<T> = Vec<RankedRoute<T>>;

/// Result of a search: a ranking, or the explicit absence of candidates
/// (for instance when no route matches the turn pattern).
#[derive(Debug, Clone, PartialEq)]
pub enum LocalizeOutcome<T> {
    Ranked(Ranked<T>),
    NoCandidates,
}

impl<T> LocalizeOutcome<T> {
    pub fn ranked(&self) -> &[RankedRoute<T>] {
        match self {
            LocalizeOutcome::Ranked(r) => r,
            LocalizeOutcome::NoCandidates => &[],
        }
    }

    pub fn best(&self) -> Option<&RankedRoute<T>> {
        self.ranked().first()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked().is_empty()
    }
}

/// Total ranking order: ascending distance, then lexicographic location ids.
pub fn rank_order<T: Real>(a: &RankedRoute<T>, b: &RankedRoute<T>) -> Ordering {
    a.distance.partial_cmp(&b.distance).unwrap_or(Ordering::Equal).then_with(|| a.route.cmp(&b.route))
}

pub(crate) fn finish_ranking<T: Real>(mut ranked: Ranked<T>, top_k: usize) -> LocalizeOutcome<T> {
    if ranked.is_empty() {
        return LocalizeOutcome::NoCandidates;
    }
    if top_k > 0 && top_k < ranked.len() {
        ranked.select_nth_unstable_by(top_k - 1, rank_order);
        ranked.truncate(top_k);
    }
    ranked.sort_by(rank_order);
    LocalizeOutcome::Ranked(ranked)
}

/// Keeps the routes whose map-derived turn pattern equals `turns`.
pub(crate) fn turn_filter<'a>(
    routes: &'a [Route],
    g: &'a MapGraph,
    turns: &'a TurnPattern,
    threshold: f64,
) -> impl Iterator<Item = Result<&'a Route>> + 'a {
    routes.iter().filter_map(move |r| {
        if r.len() != turns.len() + 1 {
            return Some(Err(Error::invalid(format!(
                "turn pattern of length {} does not fit a route of length {}",
                turns.len(),
                r.len()
            ))));
        }
        match turn_pattern(r, g, threshold) {
            Ok(p) if p == *turns => Some(Ok(r)),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        }
    })
}

/// Exhaustive search: ranks every candidate route by its distance to the
/// query, after optional turn filtering.
pub fn localize_full<T: Real>(
    query: &RouteDescriptor<T>,
    routes: &[Route],
    store: &DescriptorStore<T>,
    g: &MapGraph,
    turns: Option<&TurnPattern>,
    cfg: &LocalizerConfig,
) -> Result<LocalizeOutcome<T>> {
    cfg.validate()?;
    if query.dim() != store.dim() && !query.is_empty() {
        return Err(Error::DimensionMismatch { expected: store.dim(), got: query.dim() });
    }
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
        let mut total = T::zero();
        for (&id, q) in r.ids().iter().zip(query.parts()) {
            let x = store
                .get(id)
                .ok_or_else(|| Error::invalid(format!("no descriptor stored for location {id}")))?;
            total += euclidean(x, q.values());
        }
        ranked.push(RankedRoute { route: r.clone(), distance: total });
    }
    Ok(finish_ranking(ranked, cfg.top_k))
}

/// True iff the final `window` locations agree position-wise.
pub fn check_success(estimated: &Route, truth: &Route, window: usize) -> Result<bool> {
    if window == 0 {
        return Err(Error::invalid("success window must be >= 1"));
    }
    if estimated.len() < window || truth.len() < window {
        return Err(Error::invalid(format!(
            "routes of length {} and {} are shorter than window {window}",
            estimated.len(),
            truth.len()
        )));
    }
    let e = &estimated.ids()[estimated.len() - window..];
    let t = &truth.ids()[truth.len() - window..];
    Ok(e == t)
}

/// Ranked output as CSV: `rank,distance,route` with the route's ids
/// comma-joined in one quoted field.
pub fn write_ranked_csv<T: Real, W: Write>(w: W, ranked: &[RankedRoute<T>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["rank", "distance", "route"])?;
    for (i, r) in ranked.iter().enumerate() {
        wr.write_record([(i + 1).to_string(), format!("{:.6}", r.distance.as_f64()), r.route.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
