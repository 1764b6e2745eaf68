use std::cmp::Ordering;
use std::io::Write;

use super::{finish_ranking, LocalizeOutcome, LocalizerConfig, RankedRoute};
use crate::embed::{Descriptor, DescriptorStore};
use crate::error::{Error, Result};
use crate::scalar::{euclidean, Real};
use crate::world::{turn_bit, MapGraph, Route};

const ROOT: u32 = u32::MAX;

/// Arena node: one location of a partial route, linked to its predecessor.
/// Candidates sharing a prefix share its nodes.
#[derive(Debug, Clone, Copy)]
struct Node {
    loc: u32,
    parent: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct Entry<T> {
    node: u32,
    /// Route distance accumulated so far.
    pub cum_dist: T,
    /// Whether the map turn pattern has agreed with the query so far.
    pub turn_ok: bool,
}

/// Live partial routes of a common length during incremental search.
#[derive(Debug, Clone)]
pub struct CandidateSet<T> {
    nodes: Vec<Node>,
    entries: Vec<Entry<T>>,
    length: usize,
}

impl<T: Real> CandidateSet<T> {
    /// Length-1 candidates: every location, with its cost from `costs`
    /// (indexed by dense location index).
    pub fn start_with_costs(g: &MapGraph, costs: &[T]) -> Result<Self> {
        if costs.len() != g.len() {
            return Err(Error::DimensionMismatch { expected: g.len(), got: costs.len() });
        }
        let nodes = (0..g.len()).map(|i| Node { loc: i as u32, parent: ROOT }).collect();
        let entries = (0..g.len())
            .map(|i| Entry { node: i as u32, cum_dist: costs[i], turn_ok: true })
            .collect();
        Ok(CandidateSet { nodes, entries, length: 1 })
    }

    /// Length-1 candidates for the first query descriptor.
    pub fn start(g: &MapGraph, first: &Descriptor<T>, store: &DescriptorStore<T>) -> Result<Self> {
        Self::start_with_costs(g, &location_costs(g, first, store)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Current route length.
    pub fn length_m(&self) -> usize {
        self.length
    }

    pub fn entries(&self) -> &[Entry<T>] {
        &self.entries
    }

    fn indices(&self, node: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.length);
        let mut cur = node;
        while cur != ROOT {
            let n = self.nodes[cur as usize];
            out.push(n.loc);
            cur = n.parent;
        }
        out.reverse();
        out
    }

    pub fn route(&self, entry: &Entry<T>, g: &MapGraph) -> Route {
        Route::new(self.indices(entry.node).into_iter().map(|i| g.id_at(i as usize)).collect())
    }

    /// Dense indices sort the same way ids do, so this is the lexicographic
    /// id order. The arena is a trie and all entries share a depth, so two
    /// routes first differ just below their lowest common ancestor.
    fn cmp_entries(&self, a: &Entry<T>, b: &Entry<T>) -> Ordering {
        a.cum_dist.partial_cmp(&b.cum_dist).unwrap_or(Ordering::Equal).then_with(|| {
            let (mut x, mut y) = (a.node, b.node);
            while x != y {
                let (nx, ny) = (self.nodes[x as usize], self.nodes[y as usize]);
                if nx.parent == ny.parent {
                    return nx.loc.cmp(&ny.loc);
                }
                x = nx.parent;
                y = ny.parent;
            }
            Ordering::Equal
        })
    }

    /// Best `top_k` candidates (all when `top_k == 0`) under the same total
    /// order as the exhaustive search.
    pub fn ranked(&self, g: &MapGraph, top_k: usize) -> LocalizeOutcome<T> {
        let mut order: Vec<Entry<T>> = self.entries.clone();
        if top_k > 0 && top_k < order.len() {
            order.select_nth_unstable_by(top_k - 1, |a, b| self.cmp_entries(a, b));
            order.truncate(top_k);
        }
        let ranked = order
            .iter()
            .map(|e| RankedRoute { route: self.route(e, g), distance: e.cum_dist })
            .collect();
        finish_ranking(ranked, top_k)
    }

    /// Drops the worst `ceil(fraction * n)` candidates, keeping at least
    /// `floor` of them.
    fn cull(&mut self, fraction: f64, floor: usize) {
        let n = self.entries.len();
        if fraction <= 0.0 || n <= floor {
            return;
        }
        let drop = (fraction * n as f64).ceil() as usize;
        let keep = n.saturating_sub(drop).max(floor);
        if keep >= n {
            return;
        }
        let mut entries = std::mem::take(&mut self.entries);
        entries.select_nth_unstable_by(keep - 1, |a, b| self.cmp_entries(a, b));
        entries.truncate(keep);
        self.entries = entries;
    }

    /// Snapshot as ranked CSV (all candidates, best first).
    pub fn write_csv<W: Write>(&self, g: &MapGraph, w: W) -> Result<()> {
        super::write_ranked_csv(w, self.ranked(g, 0).ranked())
    }
}

/// Distance from `query` to every location's stored descriptor, indexed by
/// dense location index. `store` must be aligned to `g`.
fn location_costs<T: Real>(g: &MapGraph, query: &Descriptor<T>, store: &DescriptorStore<T>) -> Result<Vec<T>> {
    if query.dim() != store.dim() {
        return Err(Error::DimensionMismatch { expected: store.dim(), got: query.dim() });
    }
    if store.len() != g.len() || store.ids().iter().enumerate().any(|(i, &id)| g.id_at(i) != id) {
        return Err(Error::invalid("descriptor store is not aligned to the graph (use aligned_to)"));
    }
    Ok((0..g.len()).map(|i| euclidean(store.row(i), query.values())).collect())
}

/// Extends every candidate by one location using precomputed per-location
/// costs, then applies turn filtering and culling.
///
/// `next_turn_bit` is the query's turn bit for the location that becomes
/// interior with this step (bit `m - 1` of the extended route; bit 0 is
/// always clear).
pub fn step_with_costs<T: Real>(
    state: CandidateSet<T>,
    costs: &[T],
    next_turn_bit: Option<bool>,
    g: &MapGraph,
    cfg: &LocalizerConfig,
) -> Result<CandidateSet<T>> {
    cfg.validate()?;
    if costs.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: costs.len() });
    }
    let CandidateSet { mut nodes, entries, length } = state;
    let mut new_entries = Vec::with_capacity(entries.len() * 2);
    for e in &entries {
        let here = nodes[e.node as usize];
        let last = here.loc as usize;
        let prev = (here.parent != ROOT).then(|| nodes[here.parent as usize].loc as usize);
        for &nb in g.adjacent(last) {
            if on_path(&nodes, e.node, nb as u32) {
                continue;
            }
            let bit_ok = match next_turn_bit {
                None => true,
                Some(want) => {
                    let have = prev.is_some_and(|p| turn_bit(g, p, last, nb, cfg.turn_threshold));
                    have == want
                }
            };
            let turn_ok = e.turn_ok && bit_ok;
            if cfg.use_turns && !turn_ok {
                continue;
            }
            let node = nodes.len() as u32;
            nodes.push(Node { loc: nb as u32, parent: e.node });
            new_entries.push(Entry { node, cum_dist: e.cum_dist + costs[nb], turn_ok });
        }
    }
    let mut out = CandidateSet { nodes, entries: new_entries, length: length + 1 };
    out.cull(cfg.cull_fraction, cfg.cull_floor);
    Ok(out)
}

fn on_path(nodes: &[Node], mut node: u32, loc: u32) -> bool {
    while node != ROOT {
        let n = nodes[node as usize];
        if n.loc == loc {
            return true;
        }
        node = n.parent;
    }
    false
}

/// One incremental search step for the next query descriptor.
pub fn localize_step<T: Real>(
    state: CandidateSet<T>,
    next_query: &Descriptor<T>,
    next_turn_bit: Option<bool>,
    g: &MapGraph,
    store: &DescriptorStore<T>,
    cfg: &LocalizerConfig,
) -> Result<CandidateSet<T>> {
    let costs = location_costs(g, next_query, store)?;
    step_with_costs(state, &costs, next_turn_bit, g, cfg)
}
