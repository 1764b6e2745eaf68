#![allow(dead_code)]

use geoloc::embed::{Descriptor, DescriptorStore};
use geoloc::localize::{step_with_costs, CandidateSet, LocalizeOutcome, LocalizerConfig, RankedRoute};
use geoloc::world::{generate_synthetic_world, turn_pattern, Layout, MapGraph, Route, SyntheticWorldConfig, TagDensities};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Planar or grid world with between 20 and 200 locations.
pub fn small_world(seed: u64) -> MapGraph {
    let mut r = rng(seed);
    let layout = if seed.is_multiple_of(3) {
        Layout::Grid { cols: r.random_range(5..=14), rows: r.random_range(4..=14), block: 1 }
    } else {
        Layout::RandomPlanar { node_count: r.random_range(20..=200) }
    };
    generate_synthetic_world(&SyntheticWorldConfig {
        layout,
        latent_dim: 4,
        edge_drop_prob: 0.1,
        tag_densities: TagDensities { tunnel: 0.0, motorway: 0.0, ..TagDensities::uniform(0.2) },
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Random gaussian descriptors aligned to `g`.
pub fn random_store(g: &MapGraph, dim: usize, seed: u64) -> DescriptorStore<f64> {
    let mut r = rng(seed);
    let mut s = DescriptorStore::new(dim);
    for l in g.locations() {
        let v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        s.insert(l.id, &v).unwrap();
    }
    s
}

pub fn noisy_parts(route: &Route, store: &DescriptorStore<f64>, sigma: f64, r: &mut ChaCha8Rng) -> Vec<Descriptor<f64>> {
    route
        .ids()
        .iter()
        .map(|&id| {
            let v = store.get(id).unwrap().iter().map(|x| x + sigma * r.sample::<f64, _>(StandardNormal)).collect();
            Descriptor::from_raw(v)
        })
        .collect()
}

pub fn costs(g: &MapGraph, store: &DescriptorStore<f64>, q: &Descriptor<f64>) -> Vec<f64> {
    (0..g.len())
        .map(|i| store.row(i).iter().zip(q.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect()
}

/// Incremental search over `parts`, returning the full final ranking.
pub fn incremental(
    g: &MapGraph,
    store: &DescriptorStore<f64>,
    parts: &[Descriptor<f64>],
    truth: Option<&Route>,
    cfg: &LocalizerConfig,
) -> LocalizeOutcome<f64> {
    let bits = truth.map(|t| turn_pattern(t, g, cfg.turn_threshold).unwrap().0);
    let mut state = CandidateSet::start_with_costs(g, &costs(g, store, &parts[0])).unwrap();
    for m in 1..parts.len() {
        let bit = bits.as_ref().map(|b| b[m - 1]);
        state = step_with_costs(state, &costs(g, store, &parts[m]), bit, g, cfg).unwrap();
    }
    state.ranked(g, cfg.top_k)
}

pub fn same_ranking(a: &[RankedRoute<f64>], b: &[RankedRoute<f64>], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.route == y.route && (x.distance - y.distance).abs() <= tol)
}
