use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fracmix::fraclap::ExtensionProblem;
use fracmix::system::SolveMethod;
use fracmix::study::{emit_csv, emit_plotdata, run_study, Mode, StudyConfig, StudyResult, ERROR_KINDS};

#[derive(Parser)]
#[command(name = "fracmix", version, about = "Weighted mixed FEM convergence studies for the fractional Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a refinement study and print errors and rates.
    Study(StudyArgs),
    /// Write the graded cylinder mesh of one level in text form.
    Mesh(MeshArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// JSON configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma separated refinement levels, e.g. 8,16,32.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    tol: Option<f64>,
    /// auto, dense, sparse-lu or minres.
    #[arg(long)]
    solver: Option<SolveMethod>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prefix for `log10(h) log10(err)` plot files.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Record zero wall times for reproducible output.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl StudyArgs {
    fn into_config(self) -> Result<StudyConfig> {
        let mut c = match (&self.config, self.mode) {
            (Some(path), _) => StudyConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            (None, Some(mode)) => StudyConfig::new(mode, Vec::new()),
            (None, None) => bail!("either --config or --mode is required"),
        };
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if let Some(s) = self.s {
            c.s = Some(s);
            c.alpha = None;
        }
        if let Some(a) = self.alpha {
            c.alpha = Some(a);
            c.s = None;
        }
        if let Some(v) = self.c1 {
            c.c1 = v;
        }
        if let Some(v) = self.beta {
            c.beta = Some(v);
        }
        if let Some(v) = self.n_list {
            c.n_list = v;
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.solver {
            c.solver = v;
        }
        if let Some(v) = self.out {
            c.out = Some(v);
        }
        c.deterministic |= self.deterministic;
        c.validate()?;
        Ok(c)
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

fn print_result(res: &StudyResult) {
    println!(
        "{:>6} {:>10} {:>8} {:>10} {:>12} {:>12} {:>12} {:>9}",
        "N", "h", "L", "dof", "err_sigma", "err_u", "err_v", "seconds"
    );
    for r in &res.rows {
        println!(
            "{:>6} {:>10.4e} {:>8.4} {:>10} {:>12.4e} {:>12.4e} {:>12.4e} {:>9.2}",
            r.n, r.h, r.l, r.dof, r.err_sigma, r.err_u, r.err_v, r.seconds
        );
    }
    println!();
    for (k, kind) in ERROR_KINDS.iter().enumerate() {
        let pairs: Vec<String> = res.rates.pairwise.iter().map(|p| fmt_rate(p[k])).collect();
        println!(
            "{kind:>10}: global slope {}  pairwise [{}]",
            fmt_rate(res.rates.global[k]),
            pairs.join(", ")
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Study(args) => {
            let plot = args.plot.clone();
            let config = args.into_config()?;
            let res = run_study(&config)?;
            print_result(&res);
            if let Some(path) = &config.out {
                emit_csv(&res.rows, path)?;
            }
            if let Some(prefix) = plot {
                for f in emit_plotdata(&res.rows, &prefix)? {
                    log::info!("wrote {}", f.display());
                }
            }
        }
        Command::Mesh(args) => {
            let mesh = ExtensionProblem::new(args.s, args.dim)?.mesh(args.n)?;
            match args.out {
                Some(path) => mesh.write_dump(&path)?,
                None => print!("{}", mesh.dump()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
