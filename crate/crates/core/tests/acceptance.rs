//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use geoloc::bench::{
    difference_score, retrieval_queries, run_experiment, AccuracyReport, Environment, ExperimentConfig, Method,
};
use geoloc::embed::{
    batch_loss, batch_loss_value, normalize_scale, pair_counts, soft_margin_loss, train_encoders, train_encoders_on,
    DescriptorStore, DomainViews, Encoder, LossConfig, TileScale, TrainBatch, TrainConfig, ViewConfig,
};
use geoloc::localize::{localize_full, LocalizerConfig, RouteDescriptor};
use geoloc::retrieval::{even_thresholds, precision_recall_curve, topk_percent_recall};
use geoloc::world::{
    enumerate_routes, generate_synthetic_world, turn_pattern, Layout, MapGraph, SyntheticWorldConfig, TagDensities,
    TagSet,
};
use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// 1 ---------------------------------------------------------------------

fn random_encoder(r: &mut impl Rng, in_dim: usize, out: usize) -> Encoder<f64> {
    let mut e = Encoder::random(in_dim, out, r);
    for b in &mut e.bias {
        *b = r.random_range(-0.5..0.5);
    }
    e
}

/// Central differences with one Richardson refinement.
fn numeric_grad(f: &mut dyn FnMut(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1.0);
    let d = |f: &mut dyn FnMut(f64) -> f64, h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let coarse = d(f, h);
    let fine = d(f, h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng(1);
    let in_dim = 6;
    let mut configs = 0;
    let mut worst: f64 = 0.0;
    for n_b in 2..=5 {
        for k in 1..=3 {
            for dim in [4, 16] {
                for _ in 0..5 {
                    let lat = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
                        (0..n_b * k).map(|_| (0..in_dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
                    };
                    let batch = TrainBatch { location_ids: (0..n_b as u32).collect(), k, map: lat(&mut r), image: lat(&mut r) };
                    let cfg = LossConfig {
                        dim,
                        lambdas: [0.0; 4].map(|_| r.random_range(0.25..2.0)),
                        ..LossConfig::default()
                    };
                    let g = random_encoder(&mut r, in_dim, dim);
                    let f = random_encoder(&mut r, in_dim, dim);
                    let (_, grads) = batch_loss(&batch, &g, &f, &cfg).map_err(|e| e.to_string())?;
                    for side in 0..2 {
                        let enc = if side == 0 { &g } else { &f };
                        let analytic = if side == 0 { &grads.map } else { &grads.image };
                        for p in 0..enc.param_count() {
                            let mut eval = |v: f64| {
                                let (mut g2, mut f2) = (g.clone(), f.clone());
                                *(if side == 0 { &mut g2 } else { &mut f2 }).param_mut(p) = v;
                                batch_loss_value(&batch, &g2, &f2, &cfg).unwrap()
                            };
                            let num = numeric_grad(&mut eval, enc.param(p));
                            let a = analytic.param(p);
                            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-8);
                            worst = worst.max(rel);
                        }
                    }
                    configs += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{configs} configs, max relative error {worst:.2e}, {secs:.1}s");
    ensure(configs >= 100, format!("only {configs} configs"))?;
    ensure(worst < 1e-4, detail.clone())?;
    ensure(secs < 60.0, detail.clone())?;
    Ok(detail)
}

// 2 ---------------------------------------------------------------------

fn pair_count_identity() -> Check {
    ensure(pair_counts(10, 5) == (250, 2250), format!("pair_counts(10, 5) = {:?}", pair_counts(10, 5)))?;
    for n in 1..=20 {
        for k in 1..=10 {
            let (m, u) = pair_counts(n, k);
            ensure(m + u == n * n * k * k, format!("N_B={n} K={k}: {m} + {u} != {}", n * n * k * k))?;
        }
    }
    Ok("(250, 2250) and N_B^2 K^2 total over a 20x10 grid".into())
}

// 3 ---------------------------------------------------------------------

fn incremental_equivalence() -> Check {
    let start = Instant::now();
    let mut graphs = 0;
    let mut lists = 0;
    for seed in 0..24u64 {
        let g = small_world(1000 + seed);
        ensure(g.len() <= 200, format!("graph {seed} has {} nodes", g.len()))?;
        let store = random_store(&g, 8, seed);
        let mut r = rng(2000 + seed);
        for m in 2..=6 {
            let routes = enumerate_routes(&g, m, TagSet::empty());
            let truth = routes.choose(&mut r).unwrap().clone();
            let parts = noisy_parts(&truth, &store, 0.7, &mut r);
            let q = RouteDescriptor::new(parts.clone()).unwrap();
            for use_turns in [false, true] {
                let cfg = LocalizerConfig { use_turns, top_k: 0, ..Default::default() };
                let turns = turn_pattern(&truth, &g, cfg.turn_threshold).unwrap();
                let full = localize_full(&q, &routes, &store, &g, Some(&turns), &cfg).unwrap();
                let inc = incremental(&g, &store, &parts, use_turns.then_some(&truth), &cfg);
                ensure(
                    same_ranking(full.ranked(), inc.ranked(), 1e-9),
                    format!("graph seed {seed}, m {m}, turns {use_turns}: rankings differ"),
                )?;
                lists += 1;
            }
        }
        graphs += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1}s"))?;
    Ok(format!("{graphs} graphs, {lists} ranked lists identical, {secs:.1}s"))
}

// 4, 5, 7 -----------------------------------------------------------------

fn street_world(seed: u64, tags: TagDensities) -> MapGraph {
    generate_synthetic_world(&SyntheticWorldConfig {
        layout: Layout::Grid { cols: 101, rows: 100, block: 10 },
        tag_densities: tags,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn trained_env(g: MapGraph) -> Environment<f64> {
    let views = DomainViews::new(ViewConfig::default(), g.latent_dim()).unwrap();
    let enc = train_encoders::<f64>(&g, &views, &TrainConfig::default()).unwrap().encoders;
    Environment::new(g, enc).unwrap()
}

fn experiment(method: Method, sigma: f64, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig { method, seed, ..Default::default() };
    c.noise.descriptor_sigma = sigma;
    c
}

fn first_perfect(r: &AccuracyReport) -> Option<usize> {
    r.lengths.iter().find(|l| l.top1 == 1.0).map(|l| l.length)
}

fn noise_free_convergence(env: &Environment<f64>, built: Instant, reports: &mut Vec<AccuracyReport>) -> Check {
    let distinct: BTreeSet<Vec<u64>> =
        env.graph.locations().iter().map(|l| l.latent.iter().map(|x| x.to_bits()).collect()).collect();
    ensure(env.graph.len() == 2000, format!("world has {} locations", env.graph.len()))?;
    ensure(distinct.len() == 2000, "latents are not distinct")?;
    let mut detail = Vec::new();
    for method in [Method::Es, Method::EsTurns] {
        let r = run_experiment(env, &experiment(method, 0.0, 1)).map_err(|e| e.to_string())?;
        let at20 = r.at(20).unwrap().top1;
        ensure(at20 == 1.0, format!("{method} top-1 at length 20 is {at20}"))?;
        detail.push(format!("{method} reaches 1.0 at length {}", first_perfect(&r).unwrap()));
        reports.push(r);
    }
    let secs = built.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("took {secs:.1}s"))?;
    Ok(format!("500 routes; {}; {secs:.1}s including training", detail.join(", ")))
}

/// Pinned so that full search lands inside the 80-95% band.
const CULL_SIGMA: f64 = 3.5;

fn culling_fidelity(env: &Environment<f64>, reports: &mut Vec<AccuracyReport>) -> Check {
    let full = run_experiment(env, &experiment(Method::Es, CULL_SIGMA, 1)).map_err(|e| e.to_string())?;
    let mut cfg = experiment(Method::Es, CULL_SIGMA, 1);
    cfg.localizer.cull_fraction = 0.5;
    cfg.localizer.cull_floor = 100;
    let culled = run_experiment(env, &cfg).map_err(|e| e.to_string())?;
    let (a, b) = (full.at(20).unwrap().top1, culled.at(20).unwrap().top1);
    let detail = format!("sigma {CULL_SIGMA}: full {a:.3}, culled {b:.3}, gap {:.1} points", 100.0 * (a - b).abs());
    reports.push(full);
    reports.push(culled);
    ensure((0.80..=0.95).contains(&a), format!("full-search accuracy outside calibration band; {detail}"))?;
    ensure((a - b).abs() <= 0.02, detail.clone())?;
    Ok(detail)
}

// 6 ---------------------------------------------------------------------

fn rank_by_sort(q: &[f64], truth: u32, refs: &[(u32, Vec<f64>)]) -> usize {
    let mut d: Vec<(f64, u32)> = refs
        .iter()
        .map(|(id, v)| (v.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), *id))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.iter().position(|&(_, id)| id == truth).unwrap() + 1
}

fn recall_from_ranks(ranks: &[usize], n: usize, k: f64) -> f64 {
    let cut = ((k * n as f64 / 100.0).ceil() as usize).clamp(1, n);
    ranks.iter().filter(|&&r| r <= cut).count() as f64 / ranks.len() as f64
}

fn desk_retrieval() -> Check {
    let g = street_world(6, TagDensities::default());
    let views = DomainViews::new(ViewConfig::default(), g.latent_dim()).unwrap();
    let mut ids: Vec<u32> = g.locations().iter().map(|l| l.id).collect();
    ids.shuffle(&mut rng(60));
    let (held, train) = ids.split_at(ids.len() / 5);

    // Separability: a least-squares linear map from image views to map views,
    // fitted on the training split, then nearest neighbour on raw latents.
    let d = g.latent_dim();
    let view_rows = |ids: &[u32], image: bool| -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| {
                let l = g.location(id).unwrap();
                let mut v = if image { views.image_view(l).unwrap() } else { views.map_view(l, TileScale::S1).unwrap() };
                v.push(1.0);
                v
            })
            .collect();
        DMatrix::from_fn(rows.len(), d + 1, |i, j| rows[i][j])
    };
    let x = view_rows(train, true);
    let y = view_rows(train, false);
    let w = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).ok_or("singular alignment system")?;
    let all_map = view_rows(&ids, false);
    let refs: Vec<(u32, Vec<f64>)> =
        ids.iter().enumerate().map(|(i, &id)| (id, all_map.row(i).iter().take(d).copied().collect())).collect();
    let aligned = view_rows(held, true) * &w;
    let raw_ranks: Vec<usize> = held
        .iter()
        .enumerate()
        .map(|(i, &id)| rank_by_sort(&aligned.row(i).iter().take(d).copied().collect::<Vec<_>>(), id, &refs))
        .collect();
    let raw = recall_from_ranks(&raw_ranks, refs.len(), 1.0);
    ensure(raw >= 0.95, format!("world not separable: raw nearest-neighbour top-1% recall {raw:.3}"))?;

    let enc = train_encoders_on::<f64>(&g, &views, train, &TrainConfig::default()).map_err(|e| e.to_string())?.encoders;
    let env = Environment::new(g, enc).map_err(|e| e.to_string())?;
    let queries = retrieval_queries(&env, held, 0.0, 61).map_err(|e| e.to_string())?;
    let curve = topk_percent_recall(&queries, env.map_store(), &[1.0]).map_err(|e| e.to_string())?;
    let learned = curve.at(1.0).unwrap();
    ensure(learned >= 0.95, format!("held-out top-1% recall {learned:.3}"))?;

    // Exact agreement with an exhaustive sort on a noisy 1,000-ref store.
    let mut r = rng(62);
    let store_rows: Vec<(u32, Vec<f64>)> =
        (0..1000u32).map(|id| (id * 3, (0..8).map(|_| r.sample(StandardNormal)).collect())).collect();
    let store = DescriptorStore::from_descriptors(
        8,
        store_rows.iter().map(|(id, v)| (*id, geoloc::embed::Descriptor::from_raw(v.clone()))),
    )
    .unwrap();
    let noisy: Vec<(u32, geoloc::embed::Descriptor<f64>)> = store_rows
        .iter()
        .map(|(id, v)| (*id, geoloc::embed::Descriptor::from_raw(v.iter().map(|x| x + 0.8 * r.sample::<f64, _>(StandardNormal)).collect())))
        .collect();
    let ks = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0];
    let got = topk_percent_recall(&noisy, &store, &ks).unwrap();
    let ranks: Vec<usize> = noisy.iter().map(|(id, q)| rank_by_sort(q.values(), *id, &store_rows)).collect();
    for p in &got.points {
        let want = recall_from_ranks(&ranks, store_rows.len(), p.k_percent);
        ensure(p.recall == want, format!("k={}%: {} vs oracle {want}", p.k_percent, p.recall))?;
    }
    Ok(format!(
        "raw aligned nearest-neighbour {raw:.3}, learned held-out top-1% recall {learned:.3}, sort oracle exact at {} cutoffs",
        ks.len()
    ))
}

fn monotonicity(reports: &[AccuracyReport]) -> Check {
    let mut r = rng(70);
    for trial in 0..50 {
        let n = r.random_range(10..300usize);
        let rows: Vec<(u32, geoloc::embed::Descriptor<f64>)> = (0..n as u32)
            .map(|id| (id, geoloc::embed::Descriptor::from_raw((0..4).map(|_| r.sample(StandardNormal)).collect())))
            .collect();
        let store = DescriptorStore::from_descriptors(4, rows.clone()).unwrap();
        let sigma = r.random_range(0.0..2.0);
        let queries: Vec<_> = rows
            .iter()
            .map(|(id, d)| (*id, geoloc::embed::Descriptor::from_raw(d.values().iter().map(|x| x + sigma * r.sample::<f64, _>(StandardNormal)).collect())))
            .collect();
        let ks: Vec<f64> = (1..=100).map(f64::from).collect();
        let c = topk_percent_recall(&queries, &store, &ks).unwrap();
        ensure(c.points.windows(2).all(|w| w[1].recall >= w[0].recall), format!("trial {trial}: recall not monotone"))?;
        ensure(c.at(100.0) == Some(1.0), format!("trial {trial}: recall(100%) != 1"))?;

        let m: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| r.random_range(3.0..15.0)).collect();
        let pr = precision_recall_curve(&m, &u, &even_thresholds(&m, &u, 60));
        ensure(pr.points.windows(2).all(|w| w[1].recall >= w[0].recall), format!("trial {trial}: PR recall not monotone"))?;
    }
    let mut lengths = 0;
    for rep in reports {
        for l in &rep.lengths {
            ensure(l.top5 >= l.top1, format!("{} length {}: top-5 {} < top-1 {}", rep.method, l.length, l.top5, l.top1))?;
            lengths += 1;
        }
    }
    ensure(lengths > 0, "no accuracy reports to check")?;
    Ok(format!("50 random recall and PR curves; top-5 >= top-1 at {lengths} (report, length) points"))
}

// 8 ---------------------------------------------------------------------

const BASELINE_SIGMA: f64 = 2.0;

fn baseline_ordering(reports: &mut Vec<AccuracyReport>) -> Check {
    let sparse = TagDensities { tunnel: 0.0, motorway: 0.0, ..TagDensities::uniform(0.1) };
    let env = trained_env(street_world(8, sparse));
    let lengths = [5usize, 10, 15, 20];
    let mut wins = [0usize; 4];
    let mut rows = Vec::new();
    for seed in 1..=3u64 {
        let run = |m| run_experiment(&env, &experiment(m, BASELINE_SIGMA, seed)).map_err(|e| e.to_string());
        let (es, bsd, t) = (run(Method::Es)?, run(Method::Bsd)?, run(Method::TurnOnly)?);
        for (i, &l) in lengths.iter().enumerate() {
            let (a, b, c) = (es.at(l).unwrap().top1, bsd.at(l).unwrap().top1, t.at(l).unwrap().top1);
            if a > b && c <= b && c < a {
                wins[i] += 1;
            }
        }
        rows.push(format!(
            "seed {seed} ES/BSD/T at 20: {:.3}/{:.3}/{:.3}",
            es.at(20).unwrap().top1,
            bsd.at(20).unwrap().top1,
            t.at(20).unwrap().top1
        ));
        reports.extend([es, bsd, t]);
    }
    let detail = format!("seeds agreeing per length {:?}; {}", wins, rows.join("; "));
    ensure(wins.iter().all(|&w| w >= 2), detail.clone())?;
    Ok(detail)
}

// 9, 10 ------------------------------------------------------------------

fn difference_contract(reports: &[AccuracyReport]) -> Check {
    let set = |v: &[u32]| v.iter().copied().collect::<BTreeSet<u32>>();
    ensure(difference_score(&set(&[1, 2, 3]), &set(&[1, 2, 3])).unwrap() == 0.0, "S_d(a, a) != 0")?;
    ensure(difference_score(&set(&[1, 2, 3]), &set(&[4, 5])).unwrap() == 1.0, "disjoint S_d != 1")?;
    ensure(difference_score(&set(&[1, 2, 3]), &set(&[2, 4])).unwrap() == 2.0 / 3.0, "S_d({1,2,3},{2,4}) != 2/3")?;
    ensure(difference_score(&set(&[]), &set(&[1])).is_err(), "empty first set accepted")?;
    let mut checked = 0;
    for rep in reports {
        let s = rep.localized_at(20).unwrap();
        if !s.is_empty() {
            ensure(difference_score(s, s).unwrap() == 0.0, "report S_d(a, a) != 0")?;
            checked += 1;
        }
    }
    Ok(format!("set identities exact; S_d(a, a) = 0 on {checked} sweep reports"))
}

fn numerical_stability() -> Check {
    let mut prev = f64::NEG_INFINITY;
    let steps = 400_000;
    for i in 0..=steps {
        let z = -1e6 + 2e6 * i as f64 / steps as f64;
        let l = soft_margin_loss(z / 0.2, 0.2);
        ensure(l.is_finite(), format!("loss not finite at alpha*d = {z}"))?;
        ensure(l >= prev, format!("loss decreases at alpha*d = {z}"))?;
        prev = l;
    }
    let mut r = rng(100);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let dim = r.random_range(1..=64);
        let mag = 10f64.powf(r.random_range(-30.0..30.0));
        let v: Vec<f64> = (0..dim).map(|_| mag * r.sample::<f64, _>(StandardNormal)).collect();
        let n = normalize_scale(&v, 32.0).map_err(|e| e.to_string())?.norm();
        worst = worst.max((n - 32.0).abs() / 32.0);
    }
    ensure(worst <= 1e-6, format!("normalized norm off by {worst:.2e}"))?;
    Ok(format!("{} monotone finite loss samples; 1e5 normalizations within {worst:.1e}", steps + 1))
}

// ------------------------------------------------------------------------

fn report(n: u32, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &res {
        Ok(d) => println!("criterion {n:>2} {name}: PASS ({d}) [{secs:.1}s]"),
        Err(d) => println!("criterion {n:>2} {name}: FAIL ({d}) [{secs:.1}s]"),
    }
    res.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= report(1, "gradient oracle", gradient_oracle);
    ok &= report(2, "pair-count identity", pair_count_identity);
    ok &= report(3, "incremental/batch equivalence", incremental_equivalence);

    let built = Instant::now();
    let env = trained_env(street_world(4, TagDensities::default()));
    let mut reports = Vec::new();
    ok &= report(4, "noise-free convergence", || noise_free_convergence(&env, built, &mut reports));
    ok &= report(5, "culling fidelity", || culling_fidelity(&env, &mut reports));
    ok &= report(6, "desk-scale retrieval", desk_retrieval);
    ok &= report(8, "baseline ordering", || baseline_ordering(&mut reports));
    ok &= report(7, "metric monotonicity", || monotonicity(&reports));
    ok &= report(9, "difference score", || difference_contract(&reports));
    ok &= report(10, "numerical stability", numerical_stability);
    if !ok {
        std::process::exit(1);
    }
}
