use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use locprior::commands::{cmd_bench, cmd_eval, cmd_gen, cmd_localize, BENCH_CSV, BENCH_JSON, METRICS_FILE};
use locprior::config::Paths;
use locprior::formats::to_json_string;
use locprior::{Error, Result, RunConfig};

/// Training-free object localisation by multi-scale template matching.
#[derive(Debug, Parser)]
#[command(name = "locprior", version)]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Prints the effective configuration as JSON and exits.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes reference views, query scenes and a manifest.
    Gen {
        /// Dataset root; uses `<DIR>/references` and `<DIR>/queries`.
        dir: Option<PathBuf>,
    },
    /// Localises one query image and lifts it to a 3D translation.
    Localize {
        /// Binary PPM query image.
        query: PathBuf,
        /// Object whose references are matched.
        #[arg(long, default_value_t = 0)]
        object: u32,
        /// Dataset root holding the references.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Writes the fused heatmap of the best reference as PGM.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Runs every query of a dataset and reports mAP@[.5:.95].
    Eval {
        /// Dataset root; uses `<DIR>/references` and `<DIR>/queries`.
        dir: Option<PathBuf>,
        /// JSON list of location priors, one per query, used instead of localising.
        #[arg(long)]
        oracle_predictions: Option<PathBuf>,
    },
    /// Compares the MACs and wall time of kernel distribution and query resizing.
    Bench {
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
}

fn with_dataset(cfg: &mut RunConfig, dir: Option<PathBuf>) {
    if let Some(d) = dir {
        cfg.paths = Paths::under(&d, cfg.paths.output.clone());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.print_config {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Usage(format!("a subcommand is required\n\n{}", Cli::command().render_help())));
    };
    match command {
        Command::Gen { dir } => {
            with_dataset(&mut cfg, dir);
            let m = cmd_gen(&cfg)?;
            println!(
                "wrote {} images ({} objects, {} queries) to {} and {}",
                m.image_count(),
                m.objects.len(),
                m.queries.len(),
                cfg.paths.references.display(),
                cfg.paths.queries.display()
            );
        }
        Command::Localize { query, object, dataset, heatmap } => {
            with_dataset(&mut cfg, dataset);
            let (out, _) = cmd_localize(&cfg, &query, object, heatmap.as_deref())?;
            print!("{}", to_json_string(&out));
        }
        Command::Eval { dir, oracle_predictions } => {
            with_dataset(&mut cfg, dir);
            let (m, _) = cmd_eval(&cfg, oracle_predictions.as_deref())?;
            println!("queries            {}", m.n);
            println!("mAP@[.5:.95]       {:.2}%", m.map_50_95);
            println!("AP per IoU         {:?}", m.per_threshold_ap.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>());
            println!("centre MAE         {:.2} px", m.center_mae_px);
            println!("size relative MAE  {:.3}", m.size_rel_mae);
            println!("metrics written to {}", cfg.paths.output.join(METRICS_FILE).display());
        }
        Command::Bench { repeats, warmup } => {
            if let Some(r) = repeats {
                cfg.perf.repeats = r;
            }
            if let Some(w) = warmup {
                cfg.perf.warmup = w;
            }
            let report = cmd_bench(&cfg)?;
            println!("{:>8} {:<20} {:>14} {:>14} {:>12}", "n_scales", "strategy", "total_macs", "backbone_macs", "wall_us");
            for r in &report.reports {
                println!(
                    "{:>8} {:<20} {:>14} {:>14} {:>12.1}",
                    r.n_scales,
                    r.strategy.name(),
                    r.total_macs,
                    r.backbone_macs,
                    r.wall_ns as f64 / 1e3
                );
            }
            println!(
                "reports written to {} and {}",
                cfg.paths.output.join(BENCH_JSON).display(),
                cfg.paths.output.join(BENCH_CSV).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
