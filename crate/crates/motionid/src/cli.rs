//! Command-line front end. Each subcommand runs one pipeline stage against a
//! workspace directory.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use motionid_core::gbdt::GbdtConfig;

use crate::error::{Error, Result};
use crate::pipeline::{self, EvaluateConfig, FeaturizeConfig, Outcome, SynthConfig, TrainConfig, Workspace};

#[derive(Debug, Parser)]
#[command(name = "motionid", version, about = "Identify VR users from head and hand motion")]
pub struct Cli {
    /// Workspace directory; must already exist.
    #[arg(long, env = "MOTIONID_WORKSPACE", global = true)]
    pub workspace: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Copy BSOR or MIDR1 replays into the workspace.
    Import {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Sessionize, split, sample and featurize the workspace replays.
    Featurize(FeaturizeArgs),
    /// Train the hierarchical model.
    Train(TrainArgs),
    /// Rank the known users for a replay or feature file.
    Identify {
        input: PathBuf,
        /// Candidates to print.
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Evaluate the trained model on the test split.
    Evaluate(EvaluateArgs),
    /// Add a new user to the trained model.
    Adduser {
        /// MIDR1 replays of the new user.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 150)]
        samples_per_user: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub users: usize,
    #[arg(long, default_value_t = 10)]
    pub sessions: u32,
    #[arg(long, default_value_t = 1)]
    pub replays_per_session: u32,
    #[arg(long, default_value_t = 60)]
    pub notes: usize,
    #[arg(long, default_value_t = 60.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, default_value = "full232", value_parser = ["euler90", "quat105", "context22", "light127", "full232"])]
    pub variant: String,
    /// Training samples per user.
    #[arg(long, default_value_t = 150)]
    pub samples_per_user: usize,
    /// Samples per user from each evaluation split.
    #[arg(long, default_value_t = 50)]
    pub eval_samples: usize,
    /// Train, cluster, validate and test fractions.
    #[arg(long, value_parser = parse_ratios, default_value = "0.7,0.1,0.1,0.1")]
    pub ratios: [f64; 4],
    #[arg(long, default_value_t = 1.0)]
    pub pre_span: f64,
    #[arg(long, default_value_t = 1.0)]
    pub post_span: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub num_leaves: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_bin: Option<usize>,
    #[arg(long)]
    pub min_data_in_leaf: Option<usize>,
    #[arg(long)]
    pub min_child_weight: Option<f64>,
    #[arg(long)]
    pub max_component_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value_t = 50)]
    pub samples_per_user: usize,
    /// Comma-separated sample counts for the accuracy curve.
    #[arg(long, value_delimiter = ',', default_values_t = motionid_core::eval::DEFAULT_CURVE)]
    pub curve: Vec<usize>,
}

fn parse_ratios(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 4]>::try_from(v).map_err(|v| format!("expected 4 ratios, got {}", v.len()))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Import { .. } => "import",
            Command::Synth(_) => "synth",
            Command::Featurize(_) => "featurize",
            Command::Train(_) => "train",
            Command::Identify { .. } => "identify",
            Command::Evaluate(_) => "evaluate",
            Command::Adduser { .. } => "adduser",
        }
    }
}

fn status(o: Outcome) -> &'static str {
    match o {
        Outcome::Ran => "done",
        Outcome::UpToDate => "up to date",
    }
}

/// Runs a parsed command, writing human-readable output to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let root = cli
        .workspace
        .ok_or_else(|| Error::Workspace("no workspace given (--workspace or MOTIONID_WORKSPACE)".into()))?;
    let ws = Workspace::open(root)?;
    match cli.command {
        Command::Import { files } => {
            for i in pipeline::run_import(&ws, &files)? {
                println!(
                    "{} -> {} (user {}, {} events dropped)",
                    i.source.display(),
                    i.stored.display(),
                    i.user,
                    i.dropped_events
                );
            }
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                users: a.users,
                sessions_per_user: a.sessions,
                replays_per_session: a.replays_per_session,
                notes_per_replay: a.notes,
                fps: a.fps,
                noise_scale: a.noise,
                seed: a.seed,
            };
            let o = pipeline::run_synth(&ws, &cfg)?;
            println!("synth: {} users, {}", cfg.users, status(o));
        }
        Command::Featurize(a) => {
            let cfg = FeaturizeConfig {
                variant: a.variant,
                pre_span: a.pre_span,
                post_span: a.post_span,
                ratios: a.ratios,
                train_samples: a.samples_per_user,
                eval_samples: a.eval_samples,
                seed: a.seed,
                ..FeaturizeConfig::default()
            };
            let (o, s) = pipeline::run_featurize(&ws, &cfg)?;
            match o {
                Outcome::UpToDate => println!("featurize: up to date"),
                Outcome::Ran => println!(
                    "featurize: {} users, {} low-quality replays, samples train={} cluster={} validate={} test={}",
                    s.users, s.low_quality_replays, s.samples[0], s.samples[1], s.samples[2], s.samples[3]
                ),
            }
        }
        Command::Train(a) => {
            let mut g = GbdtConfig::default();
            if let Some(v) = a.rounds {
                g.n_estimators = v;
            }
            if let Some(v) = a.num_leaves {
                g.num_leaves = v;
            }
            if let Some(v) = a.learning_rate {
                g.learning_rate = v;
            }
            if let Some(v) = a.max_bin {
                g.max_bin = v;
            }
            if let Some(v) = a.min_data_in_leaf {
                g.min_data_in_leaf = v;
            }
            if let Some(v) = a.min_child_weight {
                g.min_child_weight = v;
            }
            let mut cfg = TrainConfig::from_gbdt(&g, a.groups, a.seed);
            if let Some(v) = a.max_component_size {
                cfg.max_component_size = v;
            }
            let (o, n) = pipeline::run_train(&ws, &cfg)?;
            match o {
                Outcome::UpToDate => println!("train: up to date"),
                Outcome::Ran => println!("train: {n} models written to {}", ws.model_dir().display()),
            }
        }
        Command::Identify { input, top } => {
            for (rank, (user, score)) in pipeline::run_identify(&ws, &input, top)?.into_iter().enumerate() {
                println!("{}\t{}\t{:.6}", rank + 1, user, score);
            }
        }
        Command::Evaluate(a) => {
            let cfg = EvaluateConfig {
                samples_per_user: a.samples_per_user,
                curve: a.curve,
            };
            let r = pipeline::run_evaluate(&ws, &cfg)?;
            print!("{}", std::fs::read_to_string(ws.path("report.txt"))?);
            log::info!("{} users evaluated", r.users_evaluated);
        }
        Command::Adduser {
            files,
            samples_per_user,
            seed,
        } => {
            let s = pipeline::run_add_user(&ws, &files, samples_per_user, seed)?;
            println!(
                "adduser: {} added with {} samples; retrained {}",
                s.user,
                s.samples,
                s.retrained.join(", ")
            );
        }
    }
    Ok(())
}

/// Parses arguments, configures the thread pool and runs. Errors are printed
/// to stderr prefixed with the command name.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.parallel {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("motionid {name}: {e}");
            ExitCode::FAILURE
        }
    }
}
