use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{simulate_routes, AccuracyReport, ExperimentConfig, LengthAccuracy, Method, ReportMeta};
use crate::baselines::{hamming_costs, map_codes, BsdCode};
use crate::embed::{Descriptor, DescriptorStore, DomainViews, EncoderPair, TileScale};
use crate::error::{Error, Result};
use crate::localize::{check_success, step_with_costs, CandidateSet, LocalizeOutcome, LocalizerConfig};
use crate::scalar::{euclidean, Real};
use crate::world::{turn_pattern, Location, MapGraph, Route};

/// A world with trained encoders and its precomputed map-side references.
#[derive(Debug, Clone)]
pub struct Environment<T> {
    pub graph: MapGraph,
    pub views: DomainViews,
    pub encoders: EncoderPair<T>,
    map_store: DescriptorStore<T>,
    codes: Vec<BsdCode>,
}

impl<T: Real> Environment<T> {
    pub fn new(graph: MapGraph, encoders: EncoderPair<T>) -> Result<Self> {
        let views = DomainViews::new(encoders.views, graph.latent_dim())?;
        let map_store = encode_map_store(&graph, &views, &encoders, TileScale::S1)?;
        let codes = map_codes(&graph);
        Ok(Environment { graph, views, encoders, map_store, codes })
    }

    /// Map descriptors at scale S1, aligned to the graph.
    pub fn map_store(&self) -> &DescriptorStore<T> {
        &self.map_store
    }

    pub fn codes(&self) -> &[BsdCode] {
        &self.codes
    }
}

/// Map-side descriptors of every location, aligned to `g`.
pub fn encode_map_store<T: Real>(
    g: &MapGraph,
    views: &DomainViews,
    enc: &EncoderPair<T>,
    scale: TileScale,
) -> Result<DescriptorStore<T>> {
    let rows = g
        .locations()
        .par_iter()
        .map(|l| {
            let v: Vec<T> = views.map_view(l, scale)?.into_iter().map(T::of).collect();
            Ok((l.id, enc.encode_map(&v)?))
        })
        .collect::<Result<Vec<_>>>()?;
    DescriptorStore::from_descriptors(enc.map.out_dim, rows)
}

/// Image-side descriptor of `loc` with gaussian latent noise of scale `sigma`.
pub fn noisy_image_descriptor<T: Real, R: Rng + ?Sized>(
    loc: &Location,
    views: &DomainViews,
    enc: &EncoderPair<T>,
    sigma: f64,
    rng: &mut R,
) -> Result<Descriptor<T>> {
    let v: Vec<T> = views
        .image_view(loc)?
        .into_iter()
        .map(|x| {
            let n: f64 = if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            T::of(x + sigma * n)
        })
        .collect();
    enc.encode_image(&v)
}

/// Image-side queries for `ids`, each paired with its true location id.
pub fn retrieval_queries<T: Real>(
    env: &Environment<T>,
    ids: &[u32],
    sigma: f64,
    seed: u64,
) -> Result<Vec<(u32, Descriptor<T>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.iter()
        .map(|&id| {
            let loc = env.graph.location(id)?;
            Ok((id, noisy_image_descriptor(loc, &env.views, &env.encoders, sigma, &mut rng)?))
        })
        .collect()
}

/// Balanced matched/unmatched distances: each query against its own
/// reference and against one other reference drawn uniformly with `seed`.
pub fn retrieval_pairs<T: Real>(
    queries: &[(u32, Descriptor<T>)],
    refs: &DescriptorStore<T>,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if refs.len() < 2 {
        return Err(Error::invalid("need at least two references for unmatched pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matched = Vec::with_capacity(queries.len());
    let mut unmatched = Vec::with_capacity(queries.len());
    for (truth, q) in queries {
        let row = refs.get(*truth).ok_or_else(|| Error::invalid(format!("truth id {truth} not in reference store")))?;
        matched.push(euclidean(q.values(), row).as_f64());
        let other = loop {
            let i = rng.random_range(0..refs.len());
            if refs.ids()[i] != *truth {
                break i;
            }
        };
        unmatched.push(euclidean(q.values(), refs.row(other)).as_f64());
    }
    Ok((matched, unmatched))
}

struct RouteResult {
    top1: Vec<bool>,
    top5: Vec<bool>,
}

fn rng_for(seed: u64, route: usize, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(route as u64 * 4 + channel);
    rng
}

/// Per-location query costs along `route`, by dense location index.
fn query_costs<T: Real>(
    env: &Environment<T>,
    route: &Route,
    idx: usize,
    cfg: &ExperimentConfig,
) -> Result<Vec<Vec<T>>> {
    let g = &env.graph;
    match cfg.method {
        Method::Es | Method::EsTurns => {
            let mut rng = rng_for(cfg.seed, idx, 1);
            route
                .ids()
                .iter()
                .map(|&id| {
                    let q = noisy_image_descriptor(
                        g.location(id)?,
                        &env.views,
                        &env.encoders,
                        cfg.noise.descriptor_sigma,
                        &mut rng,
                    )?;
                    Ok((0..g.len()).map(|i| euclidean(env.map_store.row(i), q.values())).collect())
                })
                .collect()
        }
        Method::Bsd | Method::BsdTurns => {
            let mut rng = rng_for(cfg.seed, idx, 2);
            route
                .ids()
                .iter()
                .map(|&id| {
                    let code = cfg.noise.bsd.corrupt(env.codes[g.index_of(id)?], &mut rng);
                    Ok(hamming_costs(code, &env.codes).into_iter().map(T::of).collect())
                })
                .collect()
        }
        Method::TurnOnly => Ok(vec![vec![T::zero(); g.len()]; route.len()]),
    }
}

/// Incremental search over the simulated observations of `route`, calling
/// `visit` with each prefix length and live candidate set.
fn search<T: Real>(
    env: &Environment<T>,
    route: &Route,
    idx: usize,
    cfg: &ExperimentConfig,
    loc_cfg: &LocalizerConfig,
    mut visit: impl FnMut(usize, &CandidateSet<T>) -> Result<()>,
) -> Result<()> {
    let g = &env.graph;
    let costs = query_costs(env, route, idx, cfg)?;
    let mut turns = turn_pattern(route, g, loc_cfg.turn_threshold)?.0;
    if cfg.noise.turn_flip > 0.0 {
        let mut rng = rng_for(cfg.seed, idx, 3);
        for b in turns.iter_mut().skip(1) {
            if rng.random_bool(cfg.noise.turn_flip) {
                *b = !*b;
            }
        }
    }
    let mut state = CandidateSet::start_with_costs(g, &costs[0])?;
    for m in 1..=route.len() {
        if m > 1 {
            let bit = cfg.method.uses_turns().then(|| turns[m - 2]);
            state = step_with_costs(state, &costs[m - 1], bit, g, loc_cfg)?;
        }
        if state.is_empty() {
            break;
        }
        visit(m, &state)?;
    }
    Ok(())
}

fn localize_route<T: Real>(
    env: &Environment<T>,
    route: &Route,
    idx: usize,
    cfg: &ExperimentConfig,
    loc_cfg: &LocalizerConfig,
) -> Result<RouteResult> {
    let l = route.len();
    let mut res = RouteResult { top1: vec![false; l], top5: vec![false; l] };
    search(env, route, idx, cfg, loc_cfg, |m, state| {
        let truth = route.prefix(m);
        let window = cfg.window.min(m);
        for (rank, r) in state.ranked(&env.graph, 5).ranked().iter().enumerate() {
            if check_success(&r.route, &truth, window)? {
                res.top5[m - 1] = true;
                res.top1[m - 1] = rank == 0;
                break;
            }
        }
        Ok(())
    })?;
    Ok(res)
}

/// Localizes simulated observations along `route` with `cfg`'s method and
/// noise, returning the final ranking (`cfg.localizer.top_k` deep).
pub fn localize_simulated<T: Real>(
    env: &Environment<T>,
    route: &Route,
    cfg: &ExperimentConfig,
) -> Result<LocalizeOutcome<T>> {
    cfg.localizer.validate()?;
    env.graph.validate_route(route)?;
    let loc_cfg = LocalizerConfig { use_turns: cfg.method.uses_turns(), ..cfg.localizer };
    let mut out = LocalizeOutcome::NoCandidates;
    search(env, route, 0, cfg, &loc_cfg, |m, state| {
        if m == route.len() {
            out = state.ranked(&env.graph, cfg.localizer.top_k);
        }
        Ok(())
    })?;
    Ok(out)
}

/// Simulates ground-truth routes and localizes every prefix of each,
/// incrementally, with the configured method.
pub fn run_experiment<T: Real>(env: &Environment<T>, cfg: &ExperimentConfig) -> Result<AccuracyReport> {
    cfg.validate()?;
    let start = Instant::now();
    let routes = simulate_routes(&env.graph, cfg.route_count, cfg.max_length, cfg.exclusions, cfg.seed)?;
    let loc_cfg = LocalizerConfig { use_turns: cfg.method.uses_turns(), ..cfg.localizer };
    let results = routes
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            localize_route(env, r, i, cfg, &loc_cfg).map_err(|e| e.with_context(format!("route {i} ({r})")))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = routes.len() as f64;
    let lengths = (0..cfg.max_length)
        .map(|m| LengthAccuracy {
            length: m + 1,
            top1: results.iter().filter(|r| r.top1[m]).count() as f64 / n,
            top5: results.iter().filter(|r| r.top5[m]).count() as f64 / n,
        })
        .collect();
    let localized = (0..cfg.max_length)
        .map(|m| {
            results.iter().enumerate().filter(|(_, r)| r.top1[m]).map(|(i, _)| i as u32).collect::<BTreeSet<u32>>()
        })
        .collect();
    Ok(AccuracyReport {
        method: cfg.method,
        routes: routes.into_iter().map(Route::into_ids).collect(),
        lengths,
        localized,
        meta: ReportMeta {
            config: cfg.clone(),
            graph_locations: env.graph.len(),
            turn_filtering: "per-step".into(),
            elapsed_secs: start.elapsed().as_secs_f64(),
        },
    })
}
