use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use handsoff::experiment::{
    emit_table, load_config, run_case, run_dir_name, write_infeasibility_report, CaseRegistry,
    ConfigError, ExperimentConfig, RunError, WriteOptions,
};
use handsoff::metrics::{comparison_table, format_comparison, DensityEntry};
use handsoff::plant::Realization;
use handsoff::solver::Method;

const EXIT_FAILURE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

/// Sparse (hands-off) control of linear plants by L1, elastic-net and CLOT
/// regularized optimal control.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve built-in cases or configuration files and write their outputs.
    Run(RunArgs),
    /// Merge the summaries of finished runs into one table.
    Table(TableArgs),
    /// Write the built-in cases as configuration files.
    Export {
        #[arg(long, default_value = "configs")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lasso,
    En,
    Clot,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Lasso => vec![Method::Lasso],
            MethodArg::En => vec![Method::En],
            MethodArg::Clot => vec![Method::Clot],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Built-in case numbers (1-9); repeat or separate with commas.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=9))]
    case: Vec<u8>,
    /// Run all nine built-in cases.
    #[arg(long, conflicts_with = "case")]
    all_cases: bool,
    /// Configuration files.
    #[arg(long)]
    config: Vec<PathBuf>,
    /// Overrides the methods of every case.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Number of samples N.
    #[arg(long)]
    samples: Option<usize>,
    /// Horizon T in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Magnitude at or below which a sample counts as zero.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    realization: Option<RealizationArg>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output root; each case writes to its own subdirectory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Cases solved concurrently (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Write 0 for solve times so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RealizationArg {
    Companion,
    Balanced,
}

#[derive(Args)]
struct TableArgs {
    /// Run directories, or roots containing them.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Also write the merged summary CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => run(args),
        Command::Table(args) => table(args),
        Command::Export { out } => export(&out),
    };
    ExitCode::from(code)
}

fn configs_for(args: &RunArgs) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let mut configs: Vec<ExperimentConfig> = if args.all_cases {
        CaseRegistry::all()
    } else {
        args.case.iter().map(|&c| CaseRegistry::get(c as usize).unwrap()).collect()
    };
    for path in &args.config {
        configs.push(load_config(path)?);
    }
    if configs.is_empty() {
        return Err(ConfigError::Invalid("nothing to run: give --case, --all-cases or --config".into()));
    }
    for c in configs.iter_mut() {
        if let Some(m) = args.method {
            c.methods = m.methods();
        }
        if let Some(n) = args.samples {
            c.steps = n;
        }
        if let Some(t) = args.horizon {
            c.horizon = t;
        }
        if let Some(t) = args.threshold {
            c.threshold = t;
        }
        if let Some(r) = args.realization {
            c.realization = match r {
                RealizationArg::Companion => Realization::Companion,
                RealizationArg::Balanced => Realization::Balanced,
            };
        }
        if args.rho.is_some() {
            c.solver.rho = args.rho;
        }
        if args.max_iter.is_some() {
            c.solver.max_iter = args.max_iter;
        }
        c.validate()?;
    }
    Ok(configs)
}

fn run(args: RunArgs) -> u8 {
    let configs = match configs_for(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let write = WriteOptions { timing: !args.no_timing };
    let mut dirs: Vec<PathBuf> = Vec::new();
    for c in &configs {
        let mut dir = args.out.join(run_dir_name(c));
        let mut k = 2;
        while dirs.contains(&dir) {
            dir = args.out.join(format!("{}_{k}", run_dir_name(c)));
            k += 1;
        }
        dirs.push(dir);
    }
    let results: Vec<_> = pool.install(|| {
        configs.par_iter().zip(dirs.par_iter()).map(|(c, d)| run_case(c, d, write)).collect()
    });

    let mut code = 0;
    let mut entries = Vec::new();
    for ((config, dir), result) in configs.iter().zip(&dirs).zip(results) {
        match result {
            Ok(runs) => {
                for r in runs {
                    if !r.solution.converged {
                        eprintln!(
                            "warning: case {} {} stopped at {} iterations without converging",
                            config.case_no, r.method, r.solution.iterations
                        );
                    }
                    entries.push(DensityEntry { case_no: config.case_no, method: r.method, density: r.metrics.sparsity_density });
                }
                println!("wrote {}", dir.display());
            }
            Err(e) => {
                eprintln!("error: {e}");
                if e.infeasibility().is_some() {
                    if let Ok(Some(path)) = write_infeasibility_report(dir, &e) {
                        eprintln!("residual history in {}", path.display());
                    }
                    code = code.max(EXIT_INFEASIBLE);
                } else {
                    code = EXIT_FAILURE.max(code);
                }
            }
        }
    }
    if !entries.is_empty() {
        print!("{}", format_comparison(&comparison_table(&entries)));
    }
    code
}

fn table(args: TableArgs) -> u8 {
    match emit_table(&args.dirs) {
        Ok((csv, text)) => {
            if let Some(path) = &args.csv {
                if let Err(e) = std::fs::write(path, &csv) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return EXIT_FAILURE;
                }
            }
            print!("{text}");
            0
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn export(out: &Path) -> u8 {
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_FAILURE;
    }
    for c in CaseRegistry::all() {
        let path = out.join(format!("case{}.json", c.case_no));
        if let Err(e) = std::fs::write(&path, c.to_json() + "\n") {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_FAILURE;
        }
        println!("wrote {}", path.display());
    }
    0
}
