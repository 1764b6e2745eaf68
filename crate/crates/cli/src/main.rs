use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geoloc::baselines::{write_codes_csv, BsdNoise};
use geoloc::bench::{
    difference_score, encode_map_store, localize_simulated, retrieval_pairs, retrieval_queries, run_experiment,
    AccuracyReport, Environment, ExperimentConfig, Method, NoiseModel,
};
use geoloc::embed::{train_encoders, DescriptorStore, DomainViews, EncoderPair, TileScale, TrainConfig, ViewConfig};
use geoloc::localize::{write_ranked_csv, LocalizeOutcome, LocalizerConfig};
use geoloc::retrieval::{distance_histograms, even_thresholds, precision_recall_curve, topk_percent_recall};
use geoloc::world::{
    generate_synthetic_world, load_graph, save_graph, Layout, MapGraph, Route, SyntheticWorldConfig, TagDensities,
    TagSet,
};
use geoloc::{Error, Result};

#[derive(Parser)]
#[command(name = "geoloc", version, about = "Route-based geolocalization with embedded descriptors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect road-network worlds.
    #[command(subcommand)]
    World(WorldCmd),
    /// Train encoders and export descriptors.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Single-location retrieval metrics.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Localize one route.
    #[command(subcommand)]
    Localize(LocalizeCmd),
    /// Accuracy sweeps and method comparison.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum WorldCmd {
    /// Write a synthetic world to `<out>/world.graph`.
    Gen(WorldGen),
    /// Validate a world file and print a summary.
    Load {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutKind {
    Grid,
    Planar,
}

#[derive(Args)]
struct WorldGen {
    /// JSON world config; overrides the layout flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "grid")]
    layout: LayoutKind,
    #[arg(long, default_value_t = 101)]
    cols: usize,
    #[arg(long, default_value_t = 100)]
    rows: usize,
    /// Keep every `block`-th row and column of the grid.
    #[arg(long, default_value_t = 10)]
    block: usize,
    /// Node count for the planar layout.
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long, default_value_t = 32)]
    latent_dim: usize,
    /// Density of each semantic tag (tunnel and motorway excluded).
    #[arg(long, default_value_t = 0.25)]
    tag_density: f64,
    /// Density of tunnel and motorway tags.
    #[arg(long, default_value_t = 0.0)]
    excluded_density: f64,
    #[arg(long, default_value_t = 0.0)]
    edge_drop: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EmbedCmd {
    /// Train both encoders; writes `encoders.json` and `training.json`.
    Train {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Export descriptors of every location.
    Export {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, value_enum, default_value = "map")]
        domain: Domain,
        #[arg(long, value_enum, default_value = "s1")]
        scale: Scale,
        /// Latent noise for image-side descriptors.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value = "bin")]
        format: Format,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Map,
    Image,
    Bsd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    S1,
    S2,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Csv,
}

#[derive(Args)]
struct EnvArgs {
    #[arg(long)]
    world: PathBuf,
    #[arg(long)]
    encoders: PathBuf,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Image-to-map top-k% recall; writes `recall.csv`.
    Recall {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,100")]
        ks: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Precision/recall over distance thresholds; writes `pr.csv` and `hist.csv`.
    Pr {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 50)]
        thresholds: usize,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum LocalizeCmd {
    /// Simulate observations along a ground-truth route and rank candidates;
    /// writes `ranked.csv`.
    Run {
        #[command(flatten)]
        env: EnvArgs,
        /// Comma-separated location ids of the ground-truth route.
        #[arg(long, value_delimiter = ',', required = true)]
        route: Vec<u32>,
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long, default_value = "es")]
    method: String,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    turn_flip: f64,
    #[arg(long, default_value_t = 0.3)]
    junction_flip: f64,
    #[arg(long, default_value_t = 0.23)]
    gap_flip: f64,
    #[arg(long, default_value_t = 0.0)]
    cull_fraction: f64,
    #[arg(long, default_value_t = 100)]
    cull_floor: usize,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 30.0)]
    turn_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ExpArgs {
    fn config(&self, method: Method) -> ExperimentConfig {
        ExperimentConfig {
            method,
            noise: NoiseModel {
                descriptor_sigma: self.sigma,
                turn_flip: self.turn_flip,
                bsd: BsdNoise { junction_flip: self.junction_flip, gap_flip: self.gap_flip },
            },
            localizer: LocalizerConfig {
                use_turns: method.uses_turns(),
                cull_fraction: self.cull_fraction,
                cull_floor: self.cull_floor,
                top_k: self.top_k,
                turn_threshold: self.turn_threshold,
            },
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Accuracy versus route length; writes `<method>.csv` and `<method>.json`.
    Sweep {
        #[command(flatten)]
        env: EnvArgs,
        /// Comma-separated methods: es, es+t, bsd, bsd+t, t-only.
        #[arg(long, default_value = "es,es+t,bsd,bsd+t,t-only")]
        methods: String,
        #[arg(long, default_value_t = 500)]
        routes: usize,
        #[arg(long, default_value_t = 20)]
        max_length: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Tags simulated routes avoid ("-" for none).
        #[arg(long, default_value = "tunnel,motorway")]
        exclude: String,
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Difference score between two sweep reports at one route length.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 20)]
        length: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::World(WorldCmd::Gen(args)) => world_gen(args),
        Command::World(WorldCmd::Load { path }) => {
            let g = load_graph(&path)?;
            print_json(&world_summary(&g))
        }
        Command::Embed(EmbedCmd::Train { world, epochs, lr, seed, out }) => {
            let g = load_graph(&world)?;
            let views = DomainViews::new(ViewConfig::default(), g.latent_dim())?;
            let cfg = TrainConfig { epochs, lr, seed, ..Default::default() };
            let outcome = train_encoders::<f64>(&g, &views, &cfg)?;
            ensure_dir(&out)?;
            write_json(&out.join("encoders.json"), &outcome.encoders)?;
            let log = serde_json::json!({
                "config": cfg,
                "initial_loss": outcome.initial_loss,
                "epoch_losses": outcome.epoch_losses,
            });
            write_json(&out.join("training.json"), &log)?;
            println!("initial loss {:.6}, final loss {:.6}", outcome.initial_loss, outcome.epoch_losses.last().unwrap());
            Ok(())
        }
        Command::Embed(EmbedCmd::Export { env, domain, scale, sigma, format, seed, out }) => {
            let env = load_env(&env)?;
            ensure_dir(&out)?;
            let ext = match format {
                Format::Bin => "emb",
                Format::Csv => "csv",
            };
            let store = match domain {
                Domain::Bsd => {
                    let path = out.join("bsd.csv");
                    write_codes_csv(BufWriter::new(File::create(&path)?), &env.graph)?;
                    println!("wrote {}", path.display());
                    return Ok(());
                }
                Domain::Map => {
                    let scale = match scale {
                        Scale::S1 => TileScale::S1,
                        Scale::S2 => TileScale::S2,
                    };
                    encode_map_store(&env.graph, &env.views, &env.encoders, scale)?
                }
                Domain::Image => {
                    let queries = retrieval_queries(&env, &all_ids(&env.graph), sigma, seed)?;
                    DescriptorStore::from_descriptors(env.map_store().dim(), queries)?
                }
            };
            let path = out.join(format!("descriptors.{ext}"));
            store.cast::<f32>().save(&path)?;
            println!("wrote {} descriptors to {}", store.len(), path.display());
            Ok(())
        }
        Command::Eval(EvalCmd::Recall { env, ks, sigma, seed, out }) => {
            let env = load_env(&env)?;
            let queries = retrieval_queries(&env, &all_ids(&env.graph), sigma, seed)?;
            let curve = topk_percent_recall(&queries, env.map_store(), &ks)?;
            ensure_dir(&out)?;
            curve.write_csv(File::create(out.join("recall.csv"))?)?;
            for p in &curve.points {
                println!("top-{}% recall {:.4}", p.k_percent, p.recall);
            }
            Ok(())
        }
        Command::Eval(EvalCmd::Pr { env, thresholds, bins, sigma, seed, out }) => {
            let env = load_env(&env)?;
            let queries = retrieval_queries(&env, &all_ids(&env.graph), sigma, seed)?;
            let (matched, unmatched) = retrieval_pairs(&queries, env.map_store(), seed.wrapping_add(1))?;
            let ts = even_thresholds(&matched, &unmatched, thresholds);
            let pr = precision_recall_curve(&matched, &unmatched, &ts);
            let hist = distance_histograms(&matched, &unmatched, bins)?;
            ensure_dir(&out)?;
            pr.write_csv(File::create(out.join("pr.csv"))?)?;
            hist.write_csv(File::create(out.join("hist.csv"))?)?;
            println!("{} matched and {} unmatched pairs", matched.len(), unmatched.len());
            Ok(())
        }
        Command::Localize(LocalizeCmd::Run { env, route, exp, out }) => {
            let env = load_env(&env)?;
            let method: Method = exp.method.parse()?;
            let cfg = exp.config(method);
            let route = Route::new(route);
            let outcome = localize_simulated(&env, &route, &cfg)?;
            ensure_dir(&out)?;
            write_ranked_csv(File::create(out.join("ranked.csv"))?, outcome.ranked())?;
            match outcome {
                LocalizeOutcome::NoCandidates => println!("no candidates"),
                LocalizeOutcome::Ranked(r) => {
                    for (i, e) in r.iter().enumerate() {
                        println!("{:>3}  {:>12.6}  {}", i + 1, e.distance, e.route);
                    }
                }
            }
            Ok(())
        }
        Command::Bench(BenchCmd::Sweep { env, methods, routes, max_length, window, exclude, exp, out }) => {
            let env = load_env(&env)?;
            let exclusions = TagSet::parse_list(&exclude).map_err(Error::invalid)?;
            let methods = methods.split(',').map(|m| m.trim().parse()).collect::<Result<Vec<Method>>>()?;
            ensure_dir(&out)?;
            for method in methods {
                let cfg = ExperimentConfig {
                    route_count: routes,
                    max_length,
                    window,
                    exclusions,
                    ..exp.config(method)
                };
                let report =
                    run_experiment(&env, &cfg).map_err(|e| e.with_context(format!("method {method}")))?;
                let stem = method.name().replace('+', "_");
                report.write_csv(File::create(out.join(format!("{stem}.csv")))?)?;
                report.write_json(BufWriter::new(File::create(out.join(format!("{stem}.json")))?))?;
                let last = report.lengths.last().unwrap();
                println!(
                    "{method:<7} top-1 {:.3}  top-5 {:.3} at length {}  ({:.1}s)",
                    last.top1, last.top5, last.length, report.meta.elapsed_secs
                );
            }
            Ok(())
        }
        Command::Bench(BenchCmd::Diff { a, b, length }) => {
            let ra = read_report(&a)?;
            let rb = read_report(&b)?;
            if ra.routes != rb.routes {
                return Err(Error::invalid("reports were run on different ground-truth routes"));
            }
            let sa: &BTreeSet<u32> = ra.localized_at(length)?;
            let sb = rb.localized_at(length)?;
            println!("S_d({}, {}) = {:.6}", ra.method, rb.method, difference_score(sa, sb)?);
            println!("S_d({}, {}) = {:.6}", rb.method, ra.method, difference_score(sb, sa)?);
            Ok(())
        }
    }
}

fn world_gen(args: WorldGen) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => {
            let layout = match args.layout {
                LayoutKind::Grid => Layout::Grid { cols: args.cols, rows: args.rows, block: args.block },
                LayoutKind::Planar => Layout::RandomPlanar { node_count: args.nodes },
            };
            SyntheticWorldConfig {
                layout,
                edge_drop_prob: args.edge_drop,
                latent_dim: args.latent_dim,
                tag_densities: TagDensities {
                    tunnel: args.excluded_density,
                    motorway: args.excluded_density,
                    ..TagDensities::uniform(args.tag_density)
                },
                seed: args.seed,
                ..Default::default()
            }
        }
    };
    let g = generate_synthetic_world(&cfg)?;
    ensure_dir(&args.out)?;
    let path = args.out.join("world.graph");
    save_graph(&g, &path)?;
    write_json(&args.out.join("world.json"), &cfg)?;
    println!("wrote {} locations to {}", g.len(), path.display());
    Ok(())
}

fn world_summary(g: &MapGraph) -> serde_json::Value {
    serde_json::json!({
        "locations": g.len(),
        "edges": g.edge_count(),
        "spacing": g.spacing(),
        "latent_dim": g.latent_dim(),
    })
}

fn load_env(args: &EnvArgs) -> Result<Environment<f64>> {
    let g = load_graph(&args.world).map_err(|e| e.with_context(args.world.display().to_string()))?;
    let text = fs::read_to_string(&args.encoders).map_err(|e| Error::from(e).with_context(args.encoders.display().to_string()))?;
    let encoders: EncoderPair<f64> = serde_json::from_str(&text)?;
    Environment::new(g, encoders)
}

fn read_report(path: &Path) -> Result<AccuracyReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

fn all_ids(g: &MapGraph) -> Vec<u32> {
    g.locations().iter().map(|l| l.id).collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
