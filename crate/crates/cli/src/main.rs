//! `texsim` command-line tool: dataset preparation, cached feature
//! extraction, pairwise similarity and retrieval benchmarks.

mod cache;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use texsim::imgprep::DatasetKind;

use cache::TransformOptions;
use commands::{BenchmarkRun, CliResult, Measure, CACHE_ENV};

const EXIT_USAGE: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "texsim", version, about = "Curvelet singular-value texture similarity")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Args)]
struct TransformArgs {
    /// Number of scales, including the coarsest and finest.
    #[arg(long)]
    scales: Option<usize>,
    /// Orientations at the coarsest directional scale (multiple of 4).
    #[arg(long)]
    angles: Option<usize>,
}

impl From<TransformArgs> for TransformOptions {
    fn from(a: TransformArgs) -> Self {
        Self {
            scales: a.scales,
            angles: a.angles,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Curet,
    Pertex,
}

impl From<Kind> for DatasetKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Curet => DatasetKind::Curet,
            Kind::Pertex => DatasetKind::Pertex,
        }
    }
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Dataset manifest written by `prepare`.
    manifest: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
    #[arg(long, value_enum, default_value_t)]
    measure: Measure,
    /// Feature cache directory [default: <dataset>/features].
    #[arg(long, env = CACHE_ENV)]
    cache: Option<PathBuf>,
    /// Output directory [default: the dataset directory].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl BenchmarkArgs {
    fn split(self) -> (BenchmarkRun, Option<PathBuf>) {
        let run = BenchmarkRun {
            manifest: self.manifest,
            options: self.transform.into(),
            measure: self.measure,
            cache: self.cache,
        };
        (run, self.out)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut source images into 128x128 patches and write manifest.json.
    Prepare {
        /// Directory of source images, one texture class per image.
        source: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract feature files for every image of a dataset.
    Features {
        manifest: PathBuf,
        #[command(flatten)]
        transform: TransformArgs,
        /// Feature cache directory [default: <dataset>/features].
        #[arg(long, env = CACHE_ENV)]
        cache: Option<PathBuf>,
    },
    /// Print the similarity of two images.
    Sim {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        transform: TransformArgs,
        #[arg(long, value_enum, default_value_t)]
        measure: Measure,
    },
    /// Leave-one-out retrieval; writes report.json and roc.csv.
    Benchmark(BenchmarkArgs),
    /// Leave-one-out retrieval; writes only the ROC curve (stdout without --out).
    Roc(BenchmarkArgs),
    /// Per-wedge energy table of one image as CSV.
    Wedges {
        image: PathBuf,
        #[command(flatten)]
        transform: TransformArgs,
    },
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Prepare { source, kind, out } => commands::prepare(&source, kind.into(), &out),
        Command::Features {
            manifest,
            transform,
            cache,
        } => commands::features(&manifest, transform.into(), cache),
        Command::Sim {
            a,
            b,
            transform,
            measure,
        } => commands::sim(&a, &b, transform.into(), measure),
        Command::Benchmark(args) => {
            let (run, out) = args.split();
            commands::benchmark(&run, out)
        }
        Command::Roc(args) => {
            let (run, out) = args.split();
            commands::roc(&run, out)
        }
        Command::Wedges { image, transform } => commands::wedges(&image, transform.into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(jobs))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
