mod commands;
mod config;
mod output;
mod scene;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{ConfigArgs, RunConfig, UsageError};
use output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "splatlbo", version, about = "Laplace-Beltrami operators on Gaussian splatting scenes")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Heat,
    Dijkstra,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Keep the largest connected components of the splat graph
    Filter { input: PathBuf, output: PathBuf },
    /// Assemble the operator and export W and M in Matrix Market format
    Laplacian {
        input: PathBuf,
        #[arg(long)]
        w: PathBuf,
        #[arg(long)]
        m: PathBuf,
        /// Triangle soup as PLY faces
        #[arg(long)]
        soup: Option<PathBuf>,
        /// Graph edge list CSV (splat input only)
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Component labels CSV (splat input only)
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Smallest eigenpairs of the operator
    Spectrum {
        input: PathBuf,
        /// Eigenvalue CSV
        #[arg(long)]
        out: PathBuf,
        /// Raw eigenvector matrix (plus a JSON shape sidecar)
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Geodesic distance from one or more source vertices
    Geodesic {
        input: PathBuf,
        /// Source indices into the input file
        #[arg(long = "source", required = true, num_args = 1..)]
        sources: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Colored PLY of the field
        #[arg(long)]
        ply: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Heat)]
        method: Method,
    },
    /// Mean curvature magnitude per vertex
    Curvature {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ply: Option<PathBuf>,
    },
    /// Low-pass filter positions with the first k_smooth eigenfunctions
    Smooth { input: PathBuf, output: PathBuf },
    /// Functional map and correspondence error between two representations
    MatchEval {
        source: PathBuf,
        target: PathBuf,
        /// Ground-truth correspondence CSV (source_index,target_index)
        #[arg(long)]
        gt: PathBuf,
        /// Basis size of the functional map
        #[arg(long, default_value_t = 30)]
        fmap_k: usize,
        /// Sampled source vertices
        #[arg(long, default_value_t = splatlbo::apps::functional_maps::DEFAULT_CORR_SAMPLES)]
        samples: usize,
        /// Geodesics on the target used for the error
        #[arg(long, value_enum, default_value_t = Method::Heat)]
        method: Method,
        #[arg(long)]
        pred_out: Option<PathBuf>,
        #[arg(long)]
        fmap_out: Option<PathBuf>,
        /// Per-sample errors CSV
        #[arg(long)]
        errors_out: Option<PathBuf>,
    },
    /// Spectrum drift over a sequence of checkpoints, one JSON line each
    Monitor {
        paths: Vec<PathBuf>,
        /// Glob pattern; matches are processed in sorted order after `paths`
        #[arg(long)]
        glob: Option<String>,
    },
    /// Compare a splat scene with a reference mesh of the same object
    Evaluate {
        mesh: PathBuf,
        splats: PathBuf,
        /// Also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Heat)]
        reference: Method,
        #[arg(long, default_value_t = 10)]
        eigenfunctions: usize,
        #[arg(long, default_value_t = 100)]
        geodesic_sources: usize,
        #[arg(long, default_value_t = splatlbo::apps::functional_maps::DEFAULT_CORR_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 30)]
        fmap_k: usize,
    },
}

fn run(cli: Cli, outputs: &mut Outputs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&cli.config)?;
    log::debug!("{cfg:?}");
    match cli.command {
        Command::Filter { input, output } => commands::filter(&cfg, &input, &output, outputs),
        Command::Laplacian {
            input,
            w,
            m,
            soup,
            edges,
            labels,
        } => commands::laplacian(&cfg, &input, &w, &m, soup.as_deref(), edges.as_deref(), labels.as_deref(), outputs),
        Command::Spectrum { input, out, vectors } => commands::spectrum(&cfg, &input, &out, vectors.as_deref(), outputs),
        Command::Geodesic {
            input,
            sources,
            out,
            ply,
            method,
        } => commands::geodesic(&cfg, &input, &sources, &out, ply.as_deref(), method, outputs),
        Command::Curvature { input, out, ply } => commands::curvature(&cfg, &input, &out, ply.as_deref(), outputs),
        Command::Smooth { input, output } => commands::smooth(&cfg, &input, &output, outputs),
        Command::MatchEval {
            source,
            target,
            gt,
            fmap_k,
            samples,
            method,
            pred_out,
            fmap_out,
            errors_out,
        } => commands::match_eval(
            &cfg,
            commands::MatchArgs {
                source: &source,
                target: &target,
                gt: &gt,
                fmap_k,
                samples,
                method,
                pred_out: pred_out.as_deref(),
                fmap_out: fmap_out.as_deref(),
                errors_out: errors_out.as_deref(),
            },
            outputs,
        ),
        Command::Monitor { paths, glob } => commands::monitor(&cfg, paths, glob.as_deref()),
        Command::Evaluate {
            mesh,
            splats,
            out,
            reference,
            eigenfunctions,
            geodesic_sources,
            samples,
            fmap_k,
        } => {
            let opts = splatlbo::apps::evaluation::EvaluationOptions {
                k_eigen: cfg.k_eigen,
                laplacian: cfg.laplacian(),
                keep_components: cfg.keep_components,
                opacity_min: cfg.opacity_min,
                eigenfunctions,
                geodesic_sources,
                corr_samples: samples,
                fmap_k,
                heat_c: cfg.heat_c,
                reference: match reference {
                    Method::Heat => splatlbo::apps::evaluation::ReferenceGeodesics::Heat,
                    Method::Dijkstra => splatlbo::apps::evaluation::ReferenceGeodesics::Dijkstra,
                },
                seed: cfg.seed,
            };
            commands::evaluate(&mesh, &splats, &opts, out.as_deref(), outputs)
        }
    }
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
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info })
        .parse_env("SPLATLBO_LOG")
        .format_timestamp(None)
        .init();

    let mut outputs = Outputs::default();
    match run(cli, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.cleanup();
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
