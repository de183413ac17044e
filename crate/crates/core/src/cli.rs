//! Command-line front end: `check`, `mcmc`, `mcem` and `is`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::algorithms::{
    draw_prior_samples, ImportanceSampler, Mcem, Mcmc, McmcConfiguration, SamplerKind,
};
use crate::config::{OverrideAction, RunConfig};
use crate::data::{read_json, NamedArrays};
use crate::diagnostics::{summarize, ChainSummary};
use crate::error::{Error, ErrorClass, Result};
use crate::graph::{ModelDefinition, NodeFilter};
use crate::runtime::{format_value, Model, ModelValues};

const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "bugsgraph",
    version,
    about = "Compile BUGS-dialect models and run inference on them"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a model and print its structure.
    Check(Inputs),
    /// Run adaptive random-walk MCMC.
    Mcmc(McmcArgs),
    /// Estimate top-level parameters by Monte Carlo EM.
    Mcem(Inputs),
    /// Importance-sampling estimate of a marginal probability.
    Is(IsArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Inputs {
    /// Model source file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON file of constants.
    #[arg(long)]
    pub constants: Option<PathBuf>,
    /// JSON file of observed data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON file of initial values.
    #[arg(long)]
    pub inits: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct McmcArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Number of independent chains, run concurrently with seeds
    /// `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long)]
    pub niter: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct IsArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Nodes to sample from their prior, e.g. `theta[1:3]`.
    #[arg(long = "sample-nodes", value_delimiter = ';')]
    pub sample_nodes: Vec<String>,
    /// Number of prior draws.
    #[arg(long)]
    pub m: Option<usize>,
}

struct Setup {
    cfg: RunConfig,
    model_path: PathBuf,
    def: Arc<ModelDefinition>,
    data: NamedArrays,
    inits: NamedArrays,
    seed: u64,
    out: PathBuf,
}

fn setup(inputs: &Inputs) -> Result<Setup> {
    let mut cfg = match &inputs.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let pick = |flag: &Option<PathBuf>, conf: &mut Option<PathBuf>| {
        if flag.is_some() {
            *conf = flag.clone();
        }
    };
    pick(&inputs.model, &mut cfg.model);
    pick(&inputs.constants, &mut cfg.constants);
    pick(&inputs.data, &mut cfg.data);
    pick(&inputs.inits, &mut cfg.inits);
    pick(&inputs.out, &mut cfg.out);
    if inputs.seed.is_some() {
        cfg.seed = inputs.seed;
    }
    let model_path = cfg.model.clone().ok_or_else(|| {
        Error::Config("no model file given (use --model or `model` in the config)".into())
    })?;
    let src = fs::read_to_string(&model_path)
        .map_err(|e| Error::io(model_path.display().to_string(), e))?;
    let load = |p: &Option<PathBuf>| -> Result<NamedArrays> {
        p.as_ref().map_or_else(|| Ok(NamedArrays::new()), read_json)
    };
    let constants = load(&cfg.constants)?;
    let data = load(&cfg.data)?;
    let inits = load(&cfg.inits)?;
    let def = Arc::new(ModelDefinition::from_source(&src, &constants)?);
    Ok(Setup {
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        out: cfg.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        cfg,
        model_path,
        def,
        data,
        inits,
    })
}

impl Setup {
    fn model(&self, seed: u64) -> Result<Model> {
        Model::new(self.def.clone(), &self.data, &self.inits, seed)
    }

    fn create_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(self.out.display().to_string(), e))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        fs::write(&p, contents).map_err(|e| Error::io(p.display().to_string(), e))?;
        Ok(p)
    }
}

fn list(def: &ModelDefinition, ids: &[usize]) -> String {
    if ids.is_empty() {
        "(none)".into()
    } else {
        def.node_names(ids).join(", ")
    }
}

/// Structure report of a model.
pub fn check_report(def: &ModelDefinition, data: &[bool], model_path: &Path) -> String {
    let class = |f: &[NodeFilter]| def.classify(f, data);
    let stochastic = class(&[NodeFilter::Stochastic]);
    let deterministic = class(&[NodeFilter::Deterministic]);
    let top = class(&[NodeFilter::Top]);
    let latent = class(&[NodeFilter::Latent]);
    let end = class(&[NodeFilter::End]);
    let data_nodes = class(&[NodeFilter::Data]);
    let lifted = class(&[NodeFilter::Lifted]);
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", model_path.display());
    let _ = writeln!(
        s,
        "nodes: {} ({} stochastic, {} deterministic)",
        def.len(),
        stochastic.len(),
        deterministic.len()
    );
    let _ = writeln!(s, "top: {} [{}]", top.len(), list(def, &top));
    let _ = writeln!(s, "latent: {}", latent.len());
    let _ = writeln!(s, "end: {}", end.len());
    let _ = writeln!(s, "data: {}", data_nodes.len());
    let _ = writeln!(s, "deterministic: {}", deterministic.len());
    let _ = writeln!(s, "lifted: {} [{}]", lifted.len(), list(def, &lifted));
    let _ = writeln!(s, "topological order:");
    for node in def.nodes() {
        let what = match node.distribution() {
            Some(d) => format!("~ {}", d.name()),
            None => "<- expression".to_string(),
        };
        let _ = writeln!(s, "  {} {}", node.name, what);
    }
    s
}

fn cmd_check(inputs: &Inputs) -> Result<String> {
    let st = setup(inputs)?;
    let flags = if st.data.is_empty() {
        Vec::new()
    } else {
        st.model(st.seed)?.data_flags().to_vec()
    };
    Ok(check_report(&st.def, &flags, &st.model_path))
}

fn configure(st: &Setup, model: &Model) -> Result<McmcConfiguration> {
    let mut conf = McmcConfiguration::new(model);
    for o in &st.cfg.mcmc.samplers {
        match o.action {
            OverrideAction::Add => {
                let kind: SamplerKind = o.kind.as_deref().unwrap_or("RW").parse()?;
                conf.add_sampler(kind, &o.targets, o.control())?;
            }
            OverrideAction::Remove => {
                for t in &o.targets {
                    conf.remove_samplers_for(t)?;
                }
            }
        }
    }
    if let Some(m) = &st.cfg.mcmc.monitors {
        conf.set_monitors(m)?;
    }
    Ok(conf)
}

struct ChainRun {
    seed: u64,
    samples: ModelValues,
    summary: Option<ChainSummary>,
    samplers: Vec<String>,
    wall: f64,
}

fn run_chain(st: &Setup, seed: u64, niter: usize, burnin: usize, thin: usize) -> Result<ChainRun> {
    let model = st.model(seed)?;
    let conf = configure(st, &model)?;
    let mut mcmc = Mcmc::new(model, &conf)?;
    let samples = mcmc.run(niter, burnin, thin)?;
    let wall = mcmc.wall_seconds();
    let summary = if samples.rows() > 0 {
        Some(summarize(&samples, wall, st.cfg.mcmc.max_lag)?)
    } else {
        None
    };
    let samplers = conf
        .list_samplers()
        .into_iter()
        .zip(mcmc.sampler_stats())
        .map(|(name, s)| {
            format!(
                "{name}: acceptance {:.3}, scale {:.4}, NaN rejections {}",
                s.acceptance_rate(),
                s.scale,
                s.nan_rejections
            )
        })
        .collect();
    Ok(ChainRun {
        seed,
        samples,
        summary,
        samplers,
        wall,
    })
}

fn cmd_mcmc(args: &McmcArgs) -> Result<String> {
    let st = setup(&args.inputs)?;
    let niter = args.niter.unwrap_or(st.cfg.mcmc.niter);
    let burnin = args.burnin.unwrap_or(st.cfg.mcmc.burnin);
    let thin = args.thin.unwrap_or(st.cfg.mcmc.thin);
    if args.chains == 0 {
        return Err(Error::InvalidArgument("--chains must be at least 1".into()));
    }
    let runs: Vec<Result<ChainRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..args.chains)
            .map(|k| {
                let st = &st;
                scope.spawn(move || {
                    run_chain(st, st.seed.wrapping_add(k as u64), niter, burnin, thin)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    st.create_out()?;
    let mut report = String::new();
    for (k, run) in runs.into_iter().enumerate() {
        let run = run?;
        let suffix = if args.chains > 1 {
            format!("_chain{}", k + 1)
        } else {
            String::new()
        };
        run.samples
            .save_csv(st.out.join(format!("samples{suffix}.csv")))?;
        let _ = writeln!(report, "chain {} (seed {})", k + 1, run.seed);
        let _ = writeln!(
            report,
            "iterations: {niter}, burn-in: {burnin}, thin: {thin}"
        );
        let _ = writeln!(report, "samplers: {}", run.samplers.len());
        for s in &run.samplers {
            let _ = writeln!(report, "  {s}");
        }
        let _ = writeln!(report, "wall seconds: {:.3}", run.wall);
        if let Some(summary) = &run.summary {
            let mut buf = Vec::new();
            summary.write_csv(&mut buf)?;
            st.write(
                &format!("summary{suffix}.csv"),
                &String::from_utf8_lossy(&buf),
            )?;
            let mut buf = Vec::new();
            summary.write_acf_csv(&mut buf)?;
            st.write(&format!("acf{suffix}.csv"), &String::from_utf8_lossy(&buf))?;
            report.push_str(&summary.to_text());
        }
        report.push('\n');
    }
    st.write("report.txt", &report)?;
    Ok(report)
}

fn cmd_mcem(inputs: &Inputs) -> Result<String> {
    let st = setup(inputs)?;
    let model = st.model(st.seed)?;
    let latent = match &st.cfg.mcem.latent {
        Some(names) => Some(model.expand_all(names)?),
        None => None,
    };
    let params = match &st.cfg.mcem.params {
        Some(names) => Some(model.expand_all(names)?),
        None => None,
    };
    let mut mcem = Mcem::new(
        model,
        latent.as_deref(),
        params.as_deref(),
        st.cfg.mcem.control(),
    )?;
    let res = mcem.run()?;
    st.create_out()?;
    let mut est = String::from("name,value\n");
    for (n, v) in res.names.iter().zip(&res.estimates) {
        let _ = writeln!(est, "{n},{}", format_value(*v));
    }
    st.write("estimates.csv", &est)?;
    let mut trace = String::from("iteration,samples");
    for n in &res.names {
        let _ = write!(trace, ",{n}");
    }
    trace.push_str(",q_previous,q_new,q_diff_mcse,max_change,optimizer_evals\n");
    for it in &res.trace {
        let _ = write!(trace, "{},{}", it.iteration, it.samples);
        for v in &it.estimates {
            let _ = write!(trace, ",{}", format_value(*v));
        }
        let _ = writeln!(
            trace,
            ",{},{},{},{},{}",
            format_value(it.q_previous),
            format_value(it.q_new),
            format_value(it.q_diff_mcse),
            format_value(it.max_change),
            it.optimizer_evals
        );
    }
    st.write("trace.csv", &trace)?;
    let mut report = format!(
        "converged: {}\niterations: {}\n",
        res.converged, res.iterations
    );
    for (n, v) in res.names.iter().zip(&res.estimates) {
        let _ = writeln!(report, "{n} = {v:.6}");
    }
    st.write("report.txt", &report)?;
    Ok(report)
}

fn cmd_is(args: &IsArgs) -> Result<String> {
    let st = setup(&args.inputs)?;
    let specs = if args.sample_nodes.is_empty() {
        st.cfg.importance.sample_nodes.clone()
    } else {
        args.sample_nodes.clone()
    };
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no sample nodes given".into()));
    }
    if st.cfg.importance.proposal != "prior" {
        return Err(Error::Config(format!(
            "unsupported proposal `{}`; only `prior` is available",
            st.cfg.importance.proposal
        )));
    }
    let m = args.m.unwrap_or(st.cfg.importance.m);
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let mut model = st.model(st.seed)?;
    let nodes = model.expand_all(&specs)?;
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(
            "sample nodes resolve to no nodes".into(),
        ));
    }
    let sampler = ImportanceSampler::new(&model, &nodes)?;
    let (samples, log_probs) = draw_prior_samples(&mut model, &nodes, m)?;
    let est = sampler.run(&mut model, &samples, &log_probs)?;
    st.create_out()?;
    let text = format!(
        "estimate,mcse,log_estimate,m,skipped_nan\n{},{},{},{},{}\n",
        format_value(est.estimate),
        format_value(est.mcse),
        format_value(est.log_estimate),
        est.rows,
        est.skipped_nan
    );
    st.write("estimate.csv", &text)?;
    Ok(format!(
        "estimate: {:e}\nmcse: {:e}\nlog estimate: {}\n",
        est.estimate, est.mcse, est.log_estimate
    ))
}

/// Runs a parsed command and returns the text to print.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Check(i) => cmd_check(i),
        Command::Mcmc(a) => cmd_mcmc(a),
        Command::Mcem(i) => cmd_mcem(i),
        Command::Is(a) => cmd_is(a),
    }
}

/// Exit code of an error class: 1 usage or configuration, 2 model, 3
/// numeric failure.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Model => 2,
        ErrorClass::Numeric => 3,
    }
}

/// Parses arguments, runs the command and reports; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.class())
        }
    }
}
