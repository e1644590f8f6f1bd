mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use runstyle::evaluation::Scheme;
use runstyle::profile::Profile;

/// Running-style classification workbench.
#[derive(Debug, Parser)]
#[command(name = "runstyle", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic five-sensor dataset.
    Synth(SynthArgs),
    /// Run an evaluation scheme for one model family.
    Eval(EvalArgs),
    /// Fine-tune the models of a leave-subjects-out run on held-out subjects.
    Finetune(FinetuneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ProfileArg {
    Desk,
    Full,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Full => Profile::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SchemeArg {
    RandomSegments,
    LeaveSubjectsOut,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::RandomSegments => Scheme::RandomSegments,
            SchemeArg::LeaveSubjectsOut => Scheme::LeaveSubjectsOut,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModelArg {
    CnnLstm,
    Cnn,
    NaiveBayes,
    DecisionTree,
    Svm,
    BaggedTreeEnsemble,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for the CSVs and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Personalization strength.
    #[arg(long = "p", default_value_t = 0.15)]
    personalization: f64,
    #[arg(long, default_value_t = 10)]
    subjects: usize,
    /// Seconds per recording; defaults to the profile's length.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    /// Generator configuration JSON, used in place of the generator flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset manifest or directory; without it the profile's default
    /// synthetic dataset is generated in memory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Root under which a run directory is created.
    #[arg(long, env = "RUNSTYLE_OUT", default_value = "runs")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    /// Trials for random_segments.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long)]
    epochs: Option<usize>,
    /// Skip writing model artifacts.
    #[arg(long)]
    no_models: bool,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Run directory of a leave-subjects-out evaluation.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = runstyle::evaluation::LADDER.to_vec())]
    fractions: Vec<f64>,
    #[arg(long)]
    tune_epochs: Option<usize>,
}

/// Parses the command line; rejected values also print the subcommand usage.
fn parse() -> Cli {
    match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.kind() == ErrorKind::InvalidValue => {
            let _ = e.print();
            let mut cmd = Cli::command();
            cmd.build();
            let sub = std::env::args().nth(1).unwrap_or_default();
            let usage = match cmd.find_subcommand_mut(&sub) {
                Some(sub) => sub.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("\n{usage}");
            std::process::exit(2)
        }
        Err(e) => e.exit(),
    }
}

fn main() -> ExitCode {
    let cli = parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
        Command::Finetune(a) => commands::finetune(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
