use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fpcsel::clustering::{Bandwidth, KmeansConfig, SpectralConfig};
use fpcsel::config::{self, Clusterer, PipelineConfig};
use fpcsel::pipeline::{self, TruthSource};
use fpcsel::synthetic::{PlantedImageSpec, PlantedSpec};
use fpcsel::Error;

#[derive(Parser)]
#[command(name = "fpcsel", version, about = "Cluster grayscale images by functional principal components")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit basis coefficients and an FPCA model; write model, scores and variance table.
    FpcaFit {
        #[arg(long)]
        manifest: PathBuf,
        /// Basis functions per axis (odd).
        #[arg(long, default_value_t = 5)]
        basis_k: usize,
        /// Retained components J.
        #[arg(long, short = 'j')]
        components: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score images against a saved model.
    FpcaTransform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild one image from its leading scores.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: String,
        /// Components to use; all retained ones by default.
        #[arg(long)]
        j_use: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the error for every J_use to this CSV.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Randomized leverage-score feature selection.
    Select {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Accuracy parameter in (0, 1]; fractions like 1/3 are accepted.
        #[arg(long, value_parser = parse_fraction, default_value = "0.5")]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the plan JSON.
        #[arg(long, required_unless_present = "from_plan")]
        plan: Option<PathBuf>,
        /// Where to write the reduced feature table.
        #[arg(long)]
        reduced: Option<PathBuf>,
        /// Replay a saved plan instead of drawing a new one.
        #[arg(long, conflicts_with = "plan", requires = "reduced")]
        from_plan: Option<PathBuf>,
    },
    /// k-means or spectral clustering of a feature table.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        clusterer: ClusterArgs,
        /// Assignment CSV (`id,label`).
        #[arg(long)]
        out: PathBuf,
        /// Run report JSON; defaults to the assignment path with `.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Align an assignment with ground truth and report rates.
    Evaluate {
        #[arg(long)]
        assignment: PathBuf,
        /// Labelled image manifest.
        #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
        manifest: Option<PathBuf>,
        /// `id,label` CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Label value of the positive class (binary problems).
        #[arg(long)]
        positive_class: Option<usize>,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured end-to-end pipeline into a run directory.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Override a config entry, e.g. `--set selector.k=3`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate planted synthetic data.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Subcommand)]
enum SynthKind {
    /// PGM images with group structure in coefficient space, plus manifest.
    Images {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 5)]
        basis_k: usize,
        #[arg(long, default_value_t = 2)]
        groups: usize,
        #[arg(long, default_value_t = 20.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// A feature table with planted clusters and its truth labels.
    Features {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        m: usize,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        informative: usize,
        #[arg(long, default_value_t = 20.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Kmeans,
    Spectral,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, value_enum, default_value_t = Method::Kmeans)]
    method: Method,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectral kernel bandwidth: `median` or a positive number.
    #[arg(long, default_value = "median")]
    sigma: String,
}

impl ClusterArgs {
    fn to_clusterer(&self) -> fpcsel::Result<Clusterer> {
        let inner = KmeansConfig {
            k: self.k,
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
        };
        inner.validate()?;
        Ok(match self.method {
            Method::Kmeans => Clusterer::Kmeans(inner),
            Method::Spectral => {
                let sigma = match self.sigma.as_str() {
                    "median" => Bandwidth::Median,
                    s => Bandwidth::Fixed(
                        s.parse()
                            .ok()
                            .filter(|v: &f64| *v > 0.0 && v.is_finite())
                            .ok_or_else(|| Error::InvalidConfig(format!("--sigma: expected `median` or a number > 0, got `{s}`")))?,
                    ),
                };
                Clusterer::Spectral(SpectralConfig { k: self.k, sigma, inner })
            }
        })
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    Ok(v)
}

fn run(cli: Cli) -> fpcsel::Result<()> {
    match cli.command {
        Command::FpcaFit {
            manifest,
            basis_k,
            components,
            out,
        } => {
            let rows = pipeline::cmd_fpca_fit(&manifest, basis_k, components, &out)?;
            println!("{:>9} {:>14} {:>9} {:>10}", "component", "eigenvalue", "fraction", "cumulative");
            for r in rows {
                println!(
                    "{:>9} {:>14.6e} {:>8.2}% {:>9.2}%",
                    r.component,
                    r.eigenvalue,
                    100.0 * r.fraction,
                    100.0 * r.cumulative
                );
            }
        }
        Command::FpcaTransform { model, manifest, out } => {
            let t = pipeline::cmd_fpca_transform(&model, &manifest, &out)?;
            println!("wrote {} x {} scores to {}", t.features.nrows(), t.features.ncols(), out.display());
        }
        Command::Reconstruct {
            model,
            manifest,
            id,
            j_use,
            out,
            sweep,
        } => {
            let err = pipeline::cmd_reconstruct(&model, &manifest, &id, j_use, &out, sweep.as_deref())?;
            println!("{err}");
        }
        Command::Select {
            features,
            k,
            epsilon,
            seed,
            plan,
            reduced,
            from_plan,
        } => match (from_plan, plan) {
            (Some(saved), _) => {
                let out = reduced.expect("clap requires --reduced");
                let t = pipeline::cmd_apply_plan(&features, &saved, &out)?;
                println!("wrote {} selected features to {}", t.features.ncols(), out.display());
            }
            (None, Some(plan)) => {
                let p = pipeline::cmd_select(&features, k, epsilon, seed, &plan, reduced.as_deref())?;
                let distinct: std::collections::BTreeSet<_> = p.sampled_indices.iter().collect();
                println!("r = {} draws, {} distinct features; plan written to {}", p.r, distinct.len(), plan.display());
            }
            (None, None) => unreachable!("clap requires --plan or --from-plan"),
        },
        Command::Cluster {
            features,
            clusterer,
            out,
            report,
        } => {
            let c = clusterer.to_clusterer()?;
            let report = report.unwrap_or_else(|| out.with_extension("json"));
            let r = pipeline::cmd_cluster(&features, &c, &out, &report)?;
            println!("objective = {:.9e}, cluster sizes = {:?}", r.objective, r.cluster_sizes);
        }
        Command::Evaluate {
            assignment,
            manifest,
            truth,
            positive_class,
            out,
        } => {
            let source = match (&manifest, &truth) {
                (Some(m), _) => TruthSource::Manifest(m),
                (None, Some(t)) => TruthSource::Labels(t),
                (None, None) => unreachable!("clap requires a truth source"),
            };
            let report = pipeline::cmd_evaluate(&assignment, source, positive_class)?;
            if let Some(out) = out {
                write(&out, &(report.to_json() + "\n"))?;
            }
            print!("{}", report.to_table());
        }
        Command::Pipeline {
            config: path,
            overrides,
            manifest,
            output_dir,
        } => {
            let mut pairs = overrides
                .iter()
                .map(|s| config::parse_override(s))
                .collect::<fpcsel::Result<Vec<_>>>()?;
            if let Some(m) = manifest {
                pairs.push(("manifest".into(), m.to_string_lossy().into_owned()));
            }
            if let Some(o) = output_dir {
                pairs.push(("output_dir".into(), o.to_string_lossy().into_owned()));
            }
            let cfg = PipelineConfig::load(&path, &pairs)?;
            let s = pipeline::run_pipeline(&cfg)?;
            print!("{}", pipeline::summary_csv(s.features_used, s.evaluation.as_ref()));
            eprintln!("run directory: {}", s.run_dir.display());
        }
        Command::Synth { kind } => match kind {
            SynthKind::Images {
                out,
                n,
                height,
                width,
                basis_k,
                groups,
                separation,
                noise_sd,
                seed,
            } => {
                let spec = PlantedImageSpec {
                    n_images: n,
                    height,
                    width,
                    basis_k,
                    groups,
                    separation,
                    noise_sd,
                    seed,
                };
                let manifest = pipeline::cmd_synth_images(&spec, &out)?;
                println!("{}", manifest.display());
            }
            SynthKind::Features {
                out,
                m,
                n,
                k,
                informative,
                separation,
                noise_sd,
                seed,
            } => {
                let spec = PlantedSpec {
                    m,
                    n,
                    k,
                    informative,
                    separation,
                    noise_sd,
                    seed,
                };
                let features = pipeline::cmd_synth_features(&spec, &out)?;
                println!("{}", features.display());
            }
        },
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> fpcsel::Result<()> {
    std::fs::write(path, text).map_err(|source| Error::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
