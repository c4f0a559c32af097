use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use commands::Failure;

#[derive(Parser, Debug)]
#[command(author, version, about = "Map extracted biomedical relations onto ontology predicates")]
struct Options {
    /// Seed for the deterministic embedder. Overrides `seed` in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand, Debug)]
enum Commands {
    /// Generate negated descriptors and build the embedding stores.
    Preprocess {
        /// Predicate catalog JSON.
        #[arg(long)]
        catalog: PathBuf,

        /// Directory for the augmented catalog, skip report and default store locations.
        #[arg(long)]
        out: PathBuf,

        /// TOML file describing the embedding and chat providers.
        #[arg(long)]
        providers: PathBuf,

        /// Ontology the catalog belongs to. Defaults to the config, then the catalog file.
        #[arg(long)]
        ontology: Option<String>,
    },
    /// Map a JSON-lines file of relations onto catalog predicates.
    Map {
        #[arg(long)]
        config: PathBuf,

        /// JSON-lines relations with `id`, `subject`, `object`, `relation`, `abstract`.
        #[arg(long)]
        input: PathBuf,

        #[arg(long)]
        out: PathBuf,

        /// Continue an interrupted run in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Score a finished run against gold predicates.
    Eval {
        /// Output directory of `map`.
        #[arg(long)]
        results: PathBuf,

        /// JSON-lines gold pairs with `id`, `predicate` and optional `negated`.
        #[arg(long)]
        gold: PathBuf,

        #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
        k: Vec<usize>,

        /// Metrics file. Defaults to `metrics.json` in the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let options = Options::parse();
    log::debug!("{options:?}");

    let outcome = match options.command {
        Commands::Preprocess {
            catalog,
            out,
            providers,
            ontology,
        } => commands::preprocess(&catalog, &out, &providers, ontology.as_deref(), options.seed),
        Commands::Map {
            config,
            input,
            out,
            resume,
        } => commands::map(&config, &input, &out, resume, options.seed),
        Commands::Eval { results, gold, k, out } => commands::eval(&results, &gold, &k, out.as_deref()),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
