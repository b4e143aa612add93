//! Command-line driver: generate, sample, learn and evaluate tree models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use treespec::eval::{align_labels, noisy_parity_oracle, parity_hmm, smoothed_parity_model, tv_leaf_distance, ParitySpec};
use treespec::io::{self, Mode, RunConfig, RunReport};
use treespec::learner::fullrecon;
use treespec::model::generate::{random_model, GeneratorConfig, Shape};
use treespec::model::{LeafSamples, MarkovTreeModel, ModelConfig, TreeTopology};
use treespec::spectral::{ExactMoments, MomentSource, SampleMoments};
use treespec::topology::{reconstruct_binary, reconstruct_caterpillar, LogDetMetric};
use treespec::{Error, Result};

#[derive(Parser)]
#[command(name = "treespec", version, about = "Learn Markov models on trees from leaf samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Binary,
    Caterpillar,
    Balanced,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ExactOracle,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Binary,
    Caterpillar,
}

/// Inputs shared by the learning commands.
#[derive(clap::Args)]
struct Source {
    /// Sample file (sampled mode).
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Model whose exact leaf law replaces the samples (exact-oracle mode).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; stderr when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record wall-clock stage timings in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random nonsingular model.
    GenModel {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value = "binary")]
        shape: ShapeArg,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.5, 0.9])]
        det_range: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Draw i.i.d. leaf samples from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover all transition matrices on a topology.
    Learn {
        #[command(flatten)]
        source: Source,
        /// Newick topology; reconstructed from the same moments when absent.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the topology from log-det distances.
    LearnTopology {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "caterpillar")]
        method: Method,
        /// Newick output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Distance matrix output.
        #[arg(long)]
        dist_out: Option<PathBuf>,
    },
    /// Compare an estimated model with the truth.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Emit the noisy-parity model.
    Parity {
        #[arg(long)]
        n: usize,
        /// Comma-separated bits entering the parity.
        #[arg(long, value_delimiter = ',')]
        t: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Identity-mixing weight; unsmoothed when absent.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also draw this many samples.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        samples_out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(path: Option<&Path>, report: &RunReport) -> Result<()> {
    match path {
        Some(p) => Ok(std::fs::write(p, report.to_text())?),
        None => {
            eprint!("{}", report.to_text());
            Ok(())
        }
    }
}

/// Wall-clock stage timer; silent unless enabled.
struct Timer {
    enabled: bool,
    start: Instant,
}

impl Timer {
    fn new(enabled: bool) -> Self {
        Timer {
            enabled,
            start: Instant::now(),
        }
    }

    fn lap(&mut self, report: &mut RunReport, stage: &str) {
        if self.enabled {
            report.set(format!("timing.{stage}_ms"), self.start.elapsed().as_millis());
            self.start = Instant::now();
        }
    }
}

enum Moments {
    Exact(ExactMoments),
    Sampled(LeafSamples),
}

struct Loaded {
    config: RunConfig,
    moments: Moments,
    strict: bool,
}

impl Loaded {
    fn source(&self) -> Box<dyn MomentSource + '_> {
        match &self.moments {
            Moments::Exact(e) => Box::new(e.clone()),
            Moments::Sampled(s) => Box::new(SampleMoments::new(s, self.strict)),
        }
    }
}

fn load(src: &Source, report: &mut RunReport) -> Result<Loaded> {
    let mut config = match &src.config {
        Some(p) => RunConfig::from_toml(&read(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = src.seed {
        config.seed = seed;
    }
    config.mode = match (src.mode, &src.samples, &src.truth) {
        (Some(ModeArg::ExactOracle), ..) => Mode::ExactOracle,
        (Some(ModeArg::Sampled), ..) => Mode::Sampled,
        (None, Some(_), None) => Mode::Sampled,
        (None, None, Some(_)) => Mode::ExactOracle,
        (None, ..) => config.mode,
    };
    let strict = config.strictness == io::Strictness::Strict;
    let moments = match config.mode {
        Mode::ExactOracle => {
            let path = src
                .truth
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("exact-oracle mode needs --truth".into()))?;
            Moments::Exact(ExactMoments::new(io::parse_model(&read(path)?)?))
        }
        Mode::Sampled => {
            let path = src
                .samples
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("sampled mode needs --samples".into()))?;
            Moments::Sampled(io::parse_samples(&read(path)?)?)
        }
    };
    report.set(
        "mode",
        match config.mode {
            Mode::ExactOracle => "exact-oracle",
            Mode::Sampled => "sampled",
        },
    );
    report.set("seed", config.seed);
    Ok(Loaded { config, moments, strict })
}

fn learn_topology(
    loaded: &Loaded,
    method: Method,
    report: &mut RunReport,
) -> Result<(TreeTopology, LogDetMetric)> {
    let metric = LogDetMetric::from_moments(loaded.source().as_ref())?;
    let params = &loaded.config.topology;
    let topology = match method {
        Method::Binary => {
            let out = reconstruct_binary(&metric, params)?;
            report.set("topology.decided", out.decided);
            report.set("topology.undecided", out.undecided);
            out.topology
        }
        Method::Caterpillar => {
            let out = reconstruct_caterpillar(&metric, params)?;
            report.add_caterpillar(&out);
            out.topology
        }
    };
    report.set("topology.newick", topology.to_newick_default());
    Ok((topology, metric))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenModel {
            n,
            k,
            shape,
            det_range,
            sigma,
            seed,
            out,
            report,
        } => {
            let cfg = GeneratorConfig {
                n,
                k,
                shape: match shape {
                    ShapeArg::Binary => Shape::Binary,
                    ShapeArg::Caterpillar => Shape::Caterpillar,
                    ShapeArg::Balanced => Shape::Balanced,
                },
                det_lo: det_range[0],
                det_hi: det_range[1],
                sigma,
                ..GeneratorConfig::default()
            };
            let model = random_model(&cfg, seed)?;
            let check = ModelConfig {
                beta: cfg.det_lo,
                beta_prime: 1.0 - cfg.det_hi,
                sigma: cfg.sigma,
            };
            let validation = model.validate(&check);
            let mut r = RunReport::new("gen-model");
            r.set("seed", seed);
            r.set("validation.pass", validation.pass);
            emit(out.as_deref(), &io::write_model(&model))?;
            emit_report(report.as_deref(), &r)
        }
        Command::Sample { model, m, seed, out } => {
            let model = io::parse_model(&read(&model)?)?;
            emit(out.as_deref(), &io::write_samples(&model.sample(m, seed)))
        }
        Command::Learn { source, topology, out } => {
            let mut r = RunReport::new("learn");
            let mut timer = Timer::new(source.timings);
            let loaded = load(&source, &mut r)?;
            timer.lap(&mut r, "load");
            let topology = match &topology {
                Some(p) => TreeTopology::parse_newick(read(p)?.trim())?,
                None => learn_topology(&loaded, Method::Binary, &mut r)?.0,
            };
            timer.lap(&mut r, "topology");
            let moments = loaded.source();
            let cfg = loaded.config.learner(moments.k(), moments.sample_count());
            let result = fullrecon(&topology, moments.as_ref(), &cfg);
            timer.lap(&mut r, "learn");
            let result = match result {
                Ok(res) => res,
                Err(e) => {
                    r.set("error", &e);
                    emit_report(source.report.as_deref(), &r)?;
                    return Err(e);
                }
            };
            r.add_reconstruction(&topology, &result);
            if let Moments::Exact(e) = &loaded.moments {
                r.add_alignment(&topology, &align_labels(&result.model_hat, e.model())?);
                r.add_tv(&tv_leaf_distance(&result.model_hat, e.model())?);
                timer.lap(&mut r, "eval");
            }
            emit(out.as_deref(), &io::write_model(&result.model_hat))?;
            emit_report(source.report.as_deref(), &r)
        }
        Command::LearnTopology {
            source,
            method,
            out,
            dist_out,
        } => {
            let mut r = RunReport::new("learn-topology");
            let mut timer = Timer::new(source.timings);
            let loaded = load(&source, &mut r)?;
            timer.lap(&mut r, "load");
            let (topology, metric) = learn_topology(&loaded, method, &mut r)?;
            timer.lap(&mut r, "topology");
            if let Some(p) = &dist_out {
                std::fs::write(p, io::write_dist(&metric))?;
            }
            emit(out.as_deref(), &format!("{}\n", topology.to_newick_default()))?;
            emit_report(source.report.as_deref(), &r)
        }
        Command::Eval { model, truth, report } => {
            let est = io::parse_model(&read(&model)?)?;
            let truth = io::parse_model(&read(&truth)?)?;
            if est.topology().leaf_count() != truth.topology().leaf_count() {
                return Err(Error::TopologyMismatch(format!(
                    "estimate has {} leaves, truth has {}",
                    est.topology().leaf_count(),
                    truth.topology().leaf_count()
                )));
            }
            let mut r = RunReport::new("eval");
            r.add_tv(&tv_leaf_distance(&est, &truth)?);
            r.add_alignment(truth.topology(), &align_labels(&est, &truth)?);
            emit_report(report.as_deref(), &r)
        }
        Command::Parity {
            n,
            t,
            alpha,
            tau,
            out,
            m,
            seed,
            samples_out,
            report,
        } => {
            let spec = ParitySpec::new(n, t, alpha)?;
            let model: MarkovTreeModel = match tau {
                Some(tau) => smoothed_parity_model(&spec, tau)?,
                None => parity_hmm(&spec)?,
            };
            let mut r = RunReport::new("parity");
            r.set("parity.n", n);
            r.set_f64("parity.alpha", alpha);
            let max_det = model
                .directed_edges()
                .into_iter()
                .map(|(u, v)| model.edge_matrix(u, v).unwrap().det_abs())
                .fold(0.0f64, f64::max);
            r.set_f64("parity.max_det", max_det);
            if tau.is_none() && n <= 16 {
                let law = noisy_parity_oracle(&spec)?;
                let mut worst = 0.0f64;
                for idx in 0..1usize << n {
                    let x: Vec<usize> = (0..n).map(|i| (idx >> (n - 1 - i)) & 1).collect();
                    for y in 0..2 {
                        let mut states = x.clone();
                        states.push(y);
                        worst = worst.max((model.leaf_probability(&states) - law.get(&x, y)).abs());
                    }
                }
                r.set_f64("parity.oracle_max_error", worst);
            }
            emit(out.as_deref(), &io::write_model(&model))?;
            if let Some(m) = m {
                let text = io::write_samples(&model.sample(m, seed));
                match &samples_out {
                    Some(p) => std::fs::write(p, text)?,
                    None => return Err(Error::InvalidConfig("--m needs --samples-out".into())),
                }
            }
            emit_report(report.as_deref(), &r)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
