use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use twra::harness::{self, ExperimentConfig};
use twra::metrics::HammingMode;
use twra::{Error, RatingFormat, Result, ScorePrecision, ScorerSpec, UserStep};

#[derive(Parser)]
#[command(
    name = "twra",
    version,
    about = "Diffusion recommenders with two-way rank aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rating file, apply the threshold and summarize the graph
    Ingest(Overrides),
    /// Split the links into training and probe sets and write them out
    Split(Overrides),
    /// Run one (scorer, lambda, L) configuration end to end
    Run(Overrides),
    /// Sweep the aggregation lambda over a grid
    Sweep(Overrides),
    /// Emit figure data from earlier run/sweep output
    Figures(Overrides),
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerKind {
    P3,
    P3alpha,
    Rp3beta,
    Hhp,
}

#[derive(Args)]
struct Overrides {
    /// JSON experiment config; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rating file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Rating file format: ml-100k, ml-1m or csv
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    min_rating: Option<u8>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Split seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    scorer: Option<ScorerKind>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    hybrid_lambda: Option<f64>,
    /// TWRA weight of the backward rank
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated lambda grid for `sweep`
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Recommendation list length L
    #[arg(long)]
    list_length: Option<usize>,
    /// Score storage: single or double
    #[arg(long)]
    precision: Option<String>,
    /// Keep (included) or drop (omitted) the 1/k_u first step before ranking
    #[arg(long)]
    user_step: Option<String>,
    /// Use sampled Hamming distance with this many pairs
    #[arg(long)]
    hamming_pairs: Option<u64>,
    /// Comma-separated item degrees for the rank scatter export
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<u32>>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_scorer(base: ScorerSpec, o: &Overrides) -> Result<ScorerSpec> {
    let missing = |flag: &str, kind: &str| Error::InvalidConfig(format!("--scorer {kind} requires --{flag}"));
    let spec = match o.scorer {
        None => match base {
            ScorerSpec::P3 => ScorerSpec::P3,
            ScorerSpec::P3Alpha { alpha } => ScorerSpec::P3Alpha {
                alpha: o.alpha.unwrap_or(alpha),
            },
            ScorerSpec::RP3Beta { beta } => ScorerSpec::RP3Beta {
                beta: o.beta.unwrap_or(beta),
            },
            ScorerSpec::HHP { hybrid_lambda } => ScorerSpec::HHP {
                hybrid_lambda: o.hybrid_lambda.unwrap_or(hybrid_lambda),
            },
        },
        Some(ScorerKind::P3) => ScorerSpec::P3,
        Some(ScorerKind::P3alpha) => ScorerSpec::P3Alpha {
            alpha: o
                .alpha
                .or(match base {
                    ScorerSpec::P3Alpha { alpha } => Some(alpha),
                    _ => None,
                })
                .ok_or_else(|| missing("alpha", "p3alpha"))?,
        },
        Some(ScorerKind::Rp3beta) => ScorerSpec::RP3Beta {
            beta: o
                .beta
                .or(match base {
                    ScorerSpec::RP3Beta { beta } => Some(beta),
                    _ => None,
                })
                .ok_or_else(|| missing("beta", "rp3beta"))?,
        },
        Some(ScorerKind::Hhp) => ScorerSpec::HHP {
            hybrid_lambda: o
                .hybrid_lambda
                .or(match base {
                    ScorerSpec::HHP { hybrid_lambda } => Some(hybrid_lambda),
                    _ => None,
                })
                .ok_or_else(|| missing("hybrid-lambda", "hhp"))?,
        },
    };
    spec.validate()?;
    Ok(spec)
}

fn resolve(o: &Overrides) -> Result<ExperimentConfig> {
    let mut c = match &o.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &o.data {
        c.data_path = Some(d.clone());
    }
    if let Some(f) = &o.format {
        c.format = f.parse::<RatingFormat>()?;
    }
    if let Some(v) = o.min_rating {
        c.min_rating = v;
    }
    if let Some(v) = o.train_fraction {
        c.train_fraction = v;
    }
    if let Some(v) = o.seed {
        c.split_seed = v;
    }
    c.scorer = resolve_scorer(c.scorer, o)?;
    if let Some(v) = o.lambda {
        c.twra_lambda = v;
    }
    if let Some(g) = &o.grid {
        c.lambda_grid = g.clone();
    }
    if let Some(v) = o.list_length {
        c.list_len = v;
    }
    if let Some(p) = &o.precision {
        c.score_precision = match p.as_str() {
            "single" | "f32" => ScorePrecision::Single,
            "double" | "f64" => ScorePrecision::Double,
            other => return Err(Error::InvalidConfig(format!("unknown precision {other:?}"))),
        };
    }
    if let Some(step) = &o.user_step {
        c.user_step = match step.as_str() {
            "included" | "include" => UserStep::Included,
            "omitted" | "omit" => UserStep::Omitted,
            other => return Err(Error::InvalidConfig(format!("unknown user step {other:?}"))),
        };
    }
    if let Some(pairs) = o.hamming_pairs {
        c.hamming_mode = Some(HammingMode::Sampled {
            pair_count: pairs,
            seed: c.split_seed,
        });
    }
    if let Some(d) = &o.degrees {
        c.scatter_degrees = d.clone();
    }
    if let Some(out) = &o.out {
        c.output_dir = out.clone();
    }
    Ok(c)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(o) => {
            let s = harness::run_ingest(&resolve(&o)?)?;
            println!(
                "users={} items={} links={} sparsity={:.4}",
                s.users, s.items, s.links, s.sparsity
            );
        }
        Command::Split(o) => {
            let split = harness::run_split(&resolve(&o)?)?;
            let r = split.report;
            println!(
                "train={} probe={} discarded_probe={} users={} items={}",
                r.train_links,
                r.probe_links,
                r.discarded_probe,
                split.train.num_users(),
                split.train.num_items()
            );
        }
        Command::Run(o) => {
            let config = resolve(&o)?;
            let r = harness::run_experiment(&config)?;
            println!(
                "{} lambda={} L={}: precision={:.4} hamming={:.4} gini={:.4}",
                config.scorer,
                config.twra_lambda,
                r.metrics.list_len,
                r.metrics.precision,
                r.metrics.hamming,
                r.metrics.gini
            );
        }
        Command::Sweep(o) => {
            let r = harness::sweep_lambda(&resolve(&o)?)?;
            println!("lambda\tprecision\thamming\tgini");
            for rec in &r.records {
                println!(
                    "{:.3}\t{:.4}\t{:.4}\t{:.4}",
                    rec.lambda, rec.precision, rec.hamming, rec.gini
                );
            }
        }
        Command::Figures(o) => {
            for path in harness::emit_figures(&resolve(&o)?)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
