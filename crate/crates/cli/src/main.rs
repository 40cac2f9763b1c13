use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ecl_core::clause::ModeSet;
use ecl_core::data::{default_modes, generate, parse_stream, render_stream, GeneratorConfig, KeyValues};
use ecl_core::ec::Interpretation;
use ecl_core::experiment::{cross_validate, evaluate, learn, ExperimentError, LearnSettings, Transport};
use ecl_core::node::{LearnFlags, Theory};
use ecl_core::runtime::{Schedule, Topology};
use ecl_core::scoring::HoeffdingParams;

#[derive(Parser)]
#[command(name = "ecl", version, about = "Distributed online learning of Event Calculus theories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a theory from a stream and report training metrics
    Learn(LearnArgs),
    /// Score a theory on a stream
    Eval(EvalArgs),
    /// Cross-validate on contiguous folds
    Cv(CvArgs),
    /// Write a synthetic stream
    Gen(GenArgs),
}

#[derive(Args)]
struct Input {
    /// Fact file
    #[arg(long, conflicts_with = "generate", required_unless_present = "generate")]
    data: Option<PathBuf>,
    /// Generator config (key = value) to use instead of a fact file
    #[arg(long)]
    generate: Option<PathBuf>,
    /// Mode declarations (built-in moving modes if omitted)
    #[arg(long)]
    modes: Option<PathBuf>,
    /// Time points per interpretation for files without delimiters
    #[arg(long, default_value_t = 1)]
    chunk_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportKind {
    Inproc,
    Socket,
}

#[derive(Args)]
struct Training {
    #[arg(long, default_value_t = 1)]
    nodes: u32,
    #[arg(long, value_enum, default_value = "inproc")]
    transport: TransportKind,
    /// Socket addresses (key = value); ephemeral localhost ports if omitted
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Interleave in-process deliveries randomly instead of in lockstep
    #[arg(long)]
    shuffle: bool,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    tie_threshold: f64,
    #[arg(long, default_value_t = 0.3)]
    prune_threshold: f64,
    #[arg(long, default_value_t = 20)]
    warm_up: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    training: Training,
    /// Report path; the theory goes to `<out>.theory`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    theory: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    training: Training,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Generator config (key = value)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Output fact file (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the noise-free stream here
    #[arg(long)]
    clean: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Transport(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Transport(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Transport(e) | Failure::Other(e) => e,
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn config<T>(r: anyhow::Result<T>) -> Outcome<T> {
    r.map_err(Failure::Config)
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) => Failure::Config(e.into()),
            _ if e.is_transport() => Failure::Transport(e.into()),
            _ => Failure::Other(e.into()),
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Other)
}

fn load_modes(input: &Input) -> anyhow::Result<ModeSet> {
    match &input.modes {
        Some(p) => ModeSet::parse(&read(p)?).with_context(|| format!("modes in {}", p.display())),
        None => Ok(default_modes()),
    }
}

fn load_stream(input: &Input, modes: &ModeSet) -> anyhow::Result<Vec<Interpretation>> {
    if let Some(p) = &input.data {
        parse_stream(&read(p)?, input.chunk_size, &modes.target_functors()).with_context(|| format!("{}", p.display()))
    } else {
        let p = input.generate.as_ref().expect("clap requires one input");
        Ok(generate(&generator_config(p)?)?.stream)
    }
}

fn generator_config(p: &Path) -> anyhow::Result<GeneratorConfig> {
    let kv = KeyValues::parse(&read(p)?).with_context(|| format!("{}", p.display()))?;
    GeneratorConfig::from_key_values(&kv).with_context(|| format!("{}", p.display()))
}

fn load(input: &Input) -> Outcome<(ModeSet, Vec<Interpretation>)> {
    let modes = config(load_modes(input))?;
    let stream = config(load_stream(input, &modes))?;
    Ok((modes, stream))
}

fn settings(t: &Training) -> anyhow::Result<LearnSettings> {
    let transport = match t.transport {
        TransportKind::Inproc => {
            if t.topology.is_some() {
                return Err(anyhow!("--topology needs --transport socket"));
            }
            Transport::InProcess(if t.shuffle { Schedule::Random(t.seed) } else { Schedule::Lockstep })
        }
        TransportKind::Socket => Transport::Socket(match &t.topology {
            Some(p) => Topology::parse(&read(p)?).with_context(|| format!("{}", p.display()))?,
            None => Topology::default(),
        }),
    };
    Ok(LearnSettings {
        nodes: t.nodes,
        params: HoeffdingParams {
            delta: t.delta,
            tie_threshold: t.tie_threshold,
            prune_threshold: t.prune_threshold,
            warm_up: t.warm_up,
        },
        flags: LearnFlags::default(),
        transport,
        seed: t.seed,
    })
}

fn run_learn(a: LearnArgs) -> Outcome<()> {
    let (modes, stream) = load(&a.input)?;
    let s = config(settings(&a.training))?;
    log::info!("learning from {} interpretations with {} node(s)", stream.len(), s.nodes);
    let report = learn(&stream, &modes, &s)?;
    print!("{}", report.summary());
    print!("{}", report.final_theory.render());
    if let Some(out) = a.out {
        write(&out, &report.to_key_values().render())?;
        write(&theory_path(&out), &report.final_theory.render())?;
    }
    Ok(())
}

fn theory_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".theory");
    p.into()
}

fn run_eval(a: EvalArgs) -> Outcome<()> {
    let (modes, stream) = load(&a.input)?;
    let theory = config(read(&a.theory).and_then(|src| {
        Theory::parse(&src).with_context(|| format!("{}", a.theory.display()))
    }))?;
    let c = evaluate(&theory, &stream, &modes).map_err(|e| Failure::Other(e.into()))?;
    println!("F1 {:.4} (tp {} fp {} fn {})", c.f1(), c.tp, c.fp, c.fn_);
    if let Some(out) = a.out {
        let mut kv = KeyValues::default();
        kv.insert("f1", format!("{:.6}", c.f1()));
        kv.insert("tp", c.tp);
        kv.insert("fp", c.fp);
        kv.insert("fn", c.fn_);
        kv.insert("theory_size_literals", theory.size_literals());
        write(&out, &kv.render())?;
    }
    Ok(())
}

fn run_cv(a: CvArgs) -> Outcome<()> {
    let (modes, stream) = load(&a.input)?;
    let s = config(settings(&a.training))?;
    let report = cross_validate(&stream, a.folds, &modes, &s)?;
    print!("{}", report.summary());
    if let Some(out) = a.out {
        write(&out, &report.to_key_values().render())?;
    }
    Ok(())
}

fn run_gen(a: GenArgs) -> Outcome<()> {
    let mut cfg = match &a.config {
        Some(p) => config(generator_config(p))?,
        None => GeneratorConfig::default(),
    };
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(n) = a.noise {
        cfg.noise_rate = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.chunk_size {
        cfg.chunk_size = c;
    }
    config(cfg.validate().map_err(anyhow::Error::from))?;
    let g = config(generate(&cfg).map_err(anyhow::Error::from))?;
    let text = render_stream(&g.stream);
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.clean {
        write(p, &render_stream(&g.clean))?;
    }
    log::info!("{} interpretations, {} annotation atoms dropped", g.stream.len(), g.flips.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Learn(a) => run_learn(a),
        Command::Eval(a) => run_eval(a),
        Command::Cv(a) => run_cv(a),
        Command::Gen(a) => run_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
