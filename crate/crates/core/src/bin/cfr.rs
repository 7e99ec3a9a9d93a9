use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfr::commands::{self, DataOptions, EXIT_INPUT, EXIT_PARTIAL};
use cfr::model::RandomInit;
use cfr::{MaConfig, NmConfig};

#[derive(Parser)]
#[command(name = "cfr", version, about = "Continued fraction regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model to a dataset.
    Train {
        dataset: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "cfr-out")]
        out: PathBuf,
    },
    /// Repeated runs over one or more datasets or directories of datasets.
    Benchmark {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "cfr-benchmark")]
        out: PathBuf,
    },
    /// Fit the Gamma function at several depths.
    GammaDemo {
        #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
        depths: Vec<usize>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "cfr-gamma")]
        out: PathBuf,
        /// Also write the generated dataset as gamma.tsv.
        #[arg(long)]
        write_dataset: bool,
    },
    /// Performance profiles from an algorithm-by-dataset error table.
    Profile {
        table: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a saved model as a formula.
    Render {
        model: PathBuf,
        #[arg(long)]
        latex: bool,
        /// Comma-separated variable names.
        #[arg(long, value_delimiter = ',')]
        names: Option<Vec<String>>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, default_value = "target")]
    target_column: String,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
}

impl DataArgs {
    fn options(&self) -> DataOptions {
        DataOptions {
            target_column: self.target_column.clone(),
            train_fraction: self.train_fraction,
            delimiter: None,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 0.10)]
    delta: f64,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 200)]
    generations: usize,
    #[arg(long, default_value_t = 0.10)]
    mutation_rate: f64,
    #[arg(long, default_value_t = 4)]
    nm_instances: usize,
    #[arg(long, default_value_t = 250)]
    nm_iterations: usize,
    #[arg(long, default_value_t = 10)]
    nm_stagnation: usize,
    /// Fraction of training rows each local search sees on large datasets.
    #[arg(long, default_value_t = 0.20)]
    subsample: f64,
    #[arg(long, default_value_t = 5)]
    reset_stagnation: usize,
    #[arg(long, env = "CFR_SEED", default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn config(&self) -> MaConfig {
        MaConfig {
            delta: self.delta,
            depth: self.depth,
            generations: self.generations,
            mutation_rate: self.mutation_rate,
            nm_instances: self.nm_instances,
            nm: NmConfig {
                max_iterations: self.nm_iterations,
                stagnation_limit: self.nm_stagnation,
                ..NmConfig::default()
            },
            subsample_fraction: self.subsample,
            reset_stagnation: self.reset_stagnation,
            init: RandomInit::default(),
            seed: self.seed,
            ..MaConfig::default()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}

fn dispatch(command: Command) -> cfr::Result<ExitCode> {
    match command {
        Command::Train { dataset, data, config, out } => {
            let cfg = config.config();
            cfg.validate()?;
            eprintln!("{} seed={}", cfg.describe(), cfg.seed);
            let res = commands::cmd_train(&dataset, &data.options(), &cfg, &out)?;
            println!("{}", res.formula);
            println!(
                "train_mse={:?} test_mse={:?} train_nmse={:?} test_nmse={:?}",
                res.row.train_mse, res.row.test_mse, res.row.train_nmse, res.row.test_nmse
            );
            eprintln!("wrote {}", res.model_path.display());
        }
        Command::Benchmark { inputs, data, config, runs, jobs, out } => {
            let cfg = config.config();
            eprintln!("{} seed={} runs={runs}", cfg.describe(), cfg.seed);
            let res = commands::cmd_benchmark(&inputs, &data.options(), &cfg, runs, jobs, &out)?;
            for m in &res.medians {
                println!("{}\tmedian test nmse {:?}", m.dataset, m.test_nmse);
            }
            for (path, why) in &res.failures {
                eprintln!("skipped {}: {why}", path.display());
            }
            if !res.failures.is_empty() {
                return Ok(ExitCode::from(EXIT_PARTIAL as u8));
            }
        }
        Command::GammaDemo { depths, config, runs, jobs, out, write_dataset } => {
            let cfg = config.config();
            eprintln!("{} seed={} runs={runs}", cfg.describe(), cfg.seed);
            let res = commands::cmd_gamma_demo(&depths, runs, &cfg, jobs, &out, write_dataset)?;
            for s in &res.depths {
                println!("depth {}\tmedian train mse {:?}", s.depth, s.median_train_mse);
            }
        }
        Command::Profile { table, out } => {
            let curves = commands::cmd_profile(&table, out.as_deref())?;
            if out.is_none() {
                cfr::report::write_profiles(std::io::stdout().lock(), &curves)?;
            }
        }
        Command::Render { model, latex, names } => {
            println!("{}", commands::cmd_render(&model, latex, names.as_deref())?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
