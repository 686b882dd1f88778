use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use privileged::spectral::StrategySpec;
use privileged::{
    analyze, approx_graph, build_tree_with, default_s_max, lipschitz_table, make_choice,
    pair_metrics, pair_metrics_csv, repulsiveness_estimate, AnalysisRequest, BoundaryPath,
    BuildOptions, Cell, PrivilegedTree, Strategy, SystemConfig, TilingOracle, WeightFn, Window,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "privtree",
    version,
    about = "Privileged-patch trees and branch metrics of symbolic tilings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full report: tree, ratio table, repulsiveness, slow chains, verdict.
    Analyze(Common),
    /// Export the privileged tree.
    Tree {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dot: bool,
        #[arg(long)]
        json: bool,
        /// Fail instead of truncating when the window runs out.
        #[arg(long)]
        strict: bool,
    },
    /// Ratio table, repulsiveness sweep or pair metrics.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// JSON list of `[[x..], [y..]]` cell pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Approximation graph for one choice.
    Graph {
        #[command(flatten)]
        common: Common,
        /// leftmost, stay, avoid, random or random:SEED.
        #[arg(long, default_value = "leftmost")]
        strategy: String,
        /// Pairs whose paths `stay` and `avoid` follow; defaults to the origin.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    config: Option<PathBuf>,
    #[arg(long)]
    builtin: Option<String>,
    /// HALF, or lo:hi per axis separated by commas.
    #[arg(long)]
    window: Option<String>,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long)]
    s_max: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Dot,
}

fn parse_window(s: &str) -> Result<Vec<[i64; 2]>> {
    if let Ok(half) = s.trim().parse::<i64>() {
        if half < 1 {
            bail!("window half-width must be positive");
        }
        return Ok(vec![[-half, half]]);
    }
    s.split(',')
        .map(|axis| {
            let (lo, hi) = axis
                .split_once(':')
                .with_context(|| format!("bad window axis `{axis}`"))?;
            Ok([lo.trim().parse()?, hi.trim().parse()?])
        })
        .collect()
}

fn default_half(dim: usize) -> i64 {
    if dim == 1 {
        2000
    } else {
        64
    }
}

fn load_config(c: &Common) -> Result<SystemConfig> {
    let mut config = match (&c.config, &c.builtin) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SystemConfig::from_json(&text)?
        }
        (None, Some(name)) => {
            let dim = if name == "chair2d" { 2 } else { 1 };
            SystemConfig::builtin(name, &Window::cube(dim, default_half(dim)))
        }
        (None, None) => bail!("one of --config or --builtin is required"),
    };
    if let Some(w) = &c.window {
        let mut bounds = parse_window(w)?;
        let dim = config.window()?.dim();
        if bounds.len() == 1 && dim > 1 {
            bounds = vec![bounds[0]; dim];
        }
        let w = Window::from_bounds(&bounds)?;
        if w.dim() != dim {
            bail!("window has {} axes, system has {dim}", w.dim());
        }
        config = match config {
            SystemConfig::Substitution {
                alphabet,
                dimension,
                expansion,
                images,
                ..
            } => SystemConfig::Substitution {
                alphabet,
                dimension,
                expansion,
                images,
                window: bounds,
            },
            SystemConfig::Sturmian { cf_terms, .. } => SystemConfig::Sturmian {
                cf_terms,
                window: bounds,
            },
            SystemConfig::Builtin { name, .. } => SystemConfig::Builtin {
                name,
                window: bounds,
            },
        };
    }
    Ok(config)
}

fn emit(out_dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<(Cell, Cell)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: Vec<[Vec<i64>; 2]> =
        serde_json::from_str(&text).context("pairs file must be a list of [[x..], [y..]]")?;
    Ok(raw.into_iter().map(|[x, y]| (Cell(x), Cell(y))).collect())
}

struct Built {
    oracle: TilingOracle,
    tree: PrivilegedTree,
}

fn build(c: &Common, strict: bool) -> Result<Built> {
    if c.depth == 0 {
        bail!("--depth must be at least 1");
    }
    let oracle = load_config(c)?.build()?;
    let window = oracle.window().clone();
    let tree = build_tree_with(&oracle, c.depth, &window, BuildOptions { lenient: !strict })?;
    Ok(Built { oracle, tree })
}

fn site_path(tree: &PrivilegedTree, cell: &Cell) -> Result<BoundaryPath> {
    tree.path_at_site(cell)
        .with_context(|| format!("cell {:?} lies outside the build window", cell.0))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(c) => {
            let config = load_config(&c)?;
            let dim = config.window()?.dim();
            let mut req = AnalysisRequest::new(
                config,
                c.depth,
                c.alpha,
                c.s_max.unwrap_or(default_s_max(dim)),
            );
            req.seed = c.seed;
            let report = analyze(&req)?;
            let out = c.out_dir.as_deref();
            match c.format {
                Some(Format::Csv) => emit(out, "ratio_table.csv", &ratio_csv(&c)?)?,
                Some(Format::Dot) => bail!("analyze writes json or csv"),
                _ => emit(out, "analysis.json", &(report.to_json()? + "\n"))?,
            }
            if out.is_none() {
                eprintln!("{}", report.verdict.verdict.as_str());
            } else {
                println!("{}", report.verdict.verdict.as_str());
            }
        }
        Command::Tree {
            common: c,
            dot,
            json,
            strict,
        } => {
            let b = build(&c, strict)?;
            let as_dot = dot || c.format == Some(Format::Dot);
            let as_json = json || c.format == Some(Format::Json);
            let out = c.out_dir.as_deref();
            if as_dot || !as_json {
                emit(out, "tree.dot", &b.tree.to_dot())?;
            }
            if as_json {
                emit(out, "tree.json", &(b.tree.to_json()? + "\n"))?;
            }
        }
        Command::Metrics { common: c, pairs } => {
            let out = c.out_dir.as_deref();
            if let Some(path) = pairs {
                let b = build(&c, false)?;
                let w = WeightFn::new(c.alpha)?;
                let rows = read_pairs(&path)?
                    .iter()
                    .map(|(x, y)| pair_metrics(&b.tree, &w, x, y))
                    .collect::<privileged::Result<Vec<_>>>()?;
                emit(out, "metrics.csv", &pair_metrics_csv(&rows))?;
            } else if c.format == Some(Format::Json) {
                let oracle = load_config(&c)?.build()?;
                let s_max = c.s_max.unwrap_or(default_s_max(oracle.dim()));
                let est = repulsiveness_estimate(&oracle, s_max, &oracle.window().halved())?;
                let doc = json!({
                    "schema_version": privileged::analysis::SCHEMA_VERSION,
                    "provenance": oracle.provenance(),
                    "window": est.window.bounds(),
                    "s_max": est.s_max,
                    "ell_hat": est.ell_hat,
                    "stable": est.stable,
                    "argmin_s": est.argmin_s,
                    "argmin_pair_sq": est.argmin_pair_sq,
                    "argmin_digest": est.argmin.digest(),
                    "argmin_pattern": est.argmin.pattern(oracle.alphabet()),
                    "patches_examined": est.patches_examined,
                });
                emit(
                    out,
                    "repulsiveness.json",
                    &(serde_json::to_string_pretty(&doc)? + "\n"),
                )?;
            } else {
                emit(out, "ratio_table.csv", &ratio_csv(&c)?)?;
            }
        }
        Command::Graph {
            common: c,
            strategy,
            pairs,
        } => {
            let b = build(&c, false)?;
            let w = WeightFn::new(c.alpha)?;
            let spec = match StrategySpec::parse(&strategy)? {
                StrategySpec::Random(0) if !strategy.contains(':') => StrategySpec::Random(c.seed),
                s => s,
            };
            let cells = match pairs {
                Some(p) => read_pairs(&p)?
                    .into_iter()
                    .flat_map(|(x, y)| [x, y])
                    .collect(),
                None => vec![Cell::origin(b.oracle.dim())],
            };
            let paths = cells
                .iter()
                .map(|x| site_path(&b.tree, x))
                .collect::<Result<Vec<_>>>()?;
            let st = match spec {
                StrategySpec::Leftmost => Strategy::Leftmost,
                StrategySpec::Random(seed) => Strategy::Random { seed },
                StrategySpec::Stay => Strategy::Stay(paths),
                StrategySpec::Avoid => Strategy::Avoid(paths),
            };
            let tau = make_choice(&b.tree, &st);
            let g = approx_graph(&b.tree, &w, &tau);
            let out = c.out_dir.as_deref();
            match c.format {
                Some(Format::Dot) => emit(out, "graph.dot", &g.to_dot(&b.tree, &w))?,
                Some(Format::Csv) => bail!("graph writes json or dot"),
                _ => emit(
                    out,
                    "graph.json",
                    &(g.to_json(&b.tree, &w, &st.name())? + "\n"),
                )?,
            }
        }
    }
    Ok(())
}

fn ratio_csv(c: &Common) -> Result<String> {
    let b = build(c, false)?;
    let w = WeightFn::new(c.alpha)?;
    let table = lipschitz_table(&b.tree, &w, b.tree.depth());
    Ok(table.to_csv(&b.tree))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Analyze(c) => c.threads,
        Command::Tree { common, .. }
        | Command::Metrics { common, .. }
        | Command::Graph { common, .. } => common.threads,
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
