//! `cascade-ids`: preprocess, train, calibrate, evaluate and run the cascade
//! detector from the command line.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 artifact error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use cascade_ids::ingest::ColumnSchema;
use cascade_ids::nn::{ModelKind, Regularizer};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "cascade-ids", version, about = "Two-stage autoencoder intrusion detector")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Artifact directory [default: ./artifacts].
    #[arg(long, global = true, value_name = "DIR")]
    artifacts: Option<PathBuf>,
    /// Attack-name to category table replacing the built-in one.
    #[arg(long, global = true, value_name = "FILE")]
    categories: Option<PathBuf>,
    /// Skip malformed records instead of stopping at the first one.
    #[arg(long, global = true)]
    lenient: bool,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Schema {
    /// 41 features, label, difficulty.
    NslKdd,
    /// 41 features and a label.
    Labeled,
    /// 41 features only.
    Unlabeled,
}

impl From<Schema> for ColumnSchema {
    fn from(s: Schema) -> Self {
        match s {
            Schema::NslKdd => ColumnSchema::NSL_KDD,
            Schema::Labeled => ColumnSchema::LABELED,
            Schema::Unlabeled => ColumnSchema::UNLABELED,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Sparse,
    Plain,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Sparse => ModelKind::Sparse,
            Kind::Plain => ModelKind::Plain,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegularizerArg {
    Kl,
    L1Activity,
}

impl From<RegularizerArg> for Regularizer {
    fn from(r: RegularizerArg) -> Self {
        match r {
            RegularizerArg::Kl => Regularizer::Kl,
            RegularizerArg::L1Activity => Regularizer::L1Activity,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct TrainFile {
    /// Labeled training file [env: CASCADE_IDS_TRAIN].
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Schema::NslKdd)]
    schema: Schema,
}

#[derive(Args, Debug, Clone)]
struct TestFile {
    /// Labeled test file [env: CASCADE_IDS_TEST].
    #[arg(long, value_name = "FILE")]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Schema::NslKdd)]
    schema: Schema,
}

#[derive(Args, Debug, Clone, Default)]
struct TrainingOverrides {
    /// Epochs for every network trained by this command.
    #[arg(long)]
    epochs: Option<usize>,
    /// Sparsity penalty of the sparse network.
    #[arg(long, value_enum)]
    regularizer: Option<RegularizerArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the feature transform on a training file.
    Preprocess {
        #[command(flatten)]
        data: TrainFile,
        /// Where to write the spec [default: <artifacts>/spec.json].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train one network on the normal flows of a training file.
    Train {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        data: TrainFile,
        #[command(flatten)]
        overrides: TrainingOverrides,
    },
    /// Choose the sparsity band and reconstruction thresholds.
    Calibrate {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        data: TrainFile,
    },
    /// Score the cascade on a labeled test file.
    Evaluate {
        #[command(flatten)]
        data: TestFile,
    },
    /// Compare the cascade with each detector on its own.
    Ablate {
        #[command(flatten)]
        data: TestFile,
    },
    /// Classify records from a file or standard input, one verdict per line.
    Classify {
        /// Input file; standard input when absent or "-".
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Schema::Unlabeled)]
        schema: Schema,
    },
    /// Time the cascade against each detector alone, single-threaded.
    Bench {
        #[command(flatten)]
        data: TestFile,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Machine description recorded in the report.
        #[arg(long)]
        hardware: Option<String>,
    },
    /// Cascade F-score as the share of anomalies in the test set varies.
    RatioSweep {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        data: TestFile,
        /// Anomalies as a percentage of normal flows.
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
        ratios: Vec<u32>,
    },
    /// Train, calibrate and test on disjoint parts of one labeled file.
    SplitExperiment {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        data: TrainFile,
        #[command(flatten)]
        overrides: TrainingOverrides,
    },
    /// Preprocess, train, calibrate and ablate in one run.
    Experiment {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        train: TrainFile,
        /// Labeled test file [env: CASCADE_IDS_TEST].
        #[arg(long, value_name = "FILE")]
        test: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainingOverrides,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl Cli {
    fn context(&self) -> Result<commands::Context, CliError> {
        commands::Context::new(
            self.config.as_deref(),
            self.artifacts.clone(),
            self.categories.clone(),
            self.lenient,
        )
    }
}
