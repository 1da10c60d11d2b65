//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 on runtime or I/O failure, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{self, format, Dataset, PerturbationMode, SynthConfig};
use crate::eval::{self, Condition, EvalConfig, OnlineConfig};
use crate::nets::{checkpoint, ExtractorConfig, OptimizerConfig, TrainConfig};
use crate::shield::{self, MseTarget, SampleHyper, UserHyper};

#[derive(Debug, Parser)]
#[command(
    name = "eegshield",
    version,
    about = "Identity-unlearnable perturbations for EEG datasets"
)]
struct Cli {
    /// Worker threads for folds and per-trial updates.
    #[arg(long, global = true, env = "EEGSHIELD_THREADS")]
    threads: Option<usize>,

    /// JSON file whose keys mirror flag names; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Generate sample-wise or user-wise perturbations for a dataset.
    Shield(ShieldArgs),
    /// Evaluate identity leakage.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Summarize a dataset, perturbation or model file.
    Inspect(InspectArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Leave-one-session-out evaluation.
    Loso(LosoArgs),
    /// Evaluate with a different extractor than the one that crafted the perturbation.
    Transfer(TransferArgs),
    /// Simulate batches of new users arriving over time.
    Online(OnlineArgs),
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
struct SynthArgs {
    #[arg(long)]
    users: usize,
    #[arg(long)]
    sessions: usize,
    /// Trials per user per session.
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    channels: usize,
    #[arg(long)]
    len: usize,
    #[arg(long)]
    classes: usize,
    #[arg(long, default_value_t = 1.0)]
    identity_amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    task_amplitude: f64,
    #[arg(long, default_value_t = 0.2)]
    session_amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            users: self.users,
            sessions: self.sessions,
            trials_per_user_per_session: self.trials,
            channels: self.channels,
            len: self.len,
            classes: self.classes,
            identity_amplitude: self.identity_amplitude,
            task_amplitude: self.task_amplitude,
            session_amplitude: self.session_amplitude,
            noise_std: self.noise_std,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Sample,
    User,
}

/// Per-dataset trade-off presets.
#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    Mi1,
    Mi2,
    P300,
    Ern,
    Ssvep,
    Ns,
    Tusz,
}

impl Preset {
    fn beta(self) -> f64 {
        match self {
            Preset::Mi1 => 0.03,
            Preset::Mi2 => 0.01,
            Preset::P300 => 1.0,
            Preset::Ern => 0.5,
            Preset::Ssvep => 0.05,
            Preset::Ns => 0.2,
            Preset::Tusz => 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Target {
    Logits,
    Probabilities,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
struct ShieldArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Clean dataset file.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "cfgA")]
    extractor: String,
    /// Sets beta from a named dataset preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Overrides the preset; defaults to 0.1.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.002)]
    eta: f64,
    #[arg(long, default_value_t = 5)]
    n_iter: usize,
    /// Surrogate epochs per round.
    #[arg(long = "L", default_value_t = 5)]
    l: usize,
    /// Perturbation rounds.
    #[arg(long = "M", default_value_t = 30)]
    m: usize,
    #[arg(long, value_enum, default_value_t = Target::Logits)]
    mse_target: Target,
    /// Restart every round from the initial random deltas.
    #[arg(long)]
    no_warm_start: bool,
    /// Rebuild the surrogates at the start of every round.
    #[arg(long)]
    reinit_models: bool,
    /// Defaults to 1e-6 / beta.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 150)]
    m_model: usize,
    #[arg(long, default_value_t = 150)]
    m_pert: usize,
    #[arg(long, default_value_t = 0.001)]
    init_std: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ShieldArgs {
    fn beta(&self) -> f64 {
        self.beta.or(self.preset.map(Preset::beta)).unwrap_or(0.1)
    }

    fn sample_hyper(&self) -> SampleHyper {
        SampleHyper {
            alpha: self.alpha,
            beta: self.beta(),
            epsilon: self.epsilon,
            eta: self.eta,
            n_iter: self.n_iter,
            model_epochs: self.l,
            rounds: self.m,
            seed: self.seed,
            batch_size: self.batch_size,
            optimizer: OptimizerConfig::adam(self.lr),
            mse_target: match self.mse_target {
                Target::Logits => MseTarget::Logits,
                Target::Probabilities => MseTarget::Probabilities,
            },
            warm_start: !self.no_warm_start,
            reinit_models: self.reinit_models,
        }
    }

    fn user_hyper(&self) -> UserHyper {
        UserHyper {
            alpha: self.alpha,
            beta: self.beta(),
            gamma: self.gamma,
            init_std: self.init_std,
            m_model: self.m_model,
            m_pert: self.m_pert,
            batch_size: self.batch_size,
            model_optimizer: OptimizerConfig::adam(self.lr),
            template_optimizer: OptimizerConfig::adam(self.lr),
            seed: self.seed,
        }
    }
}

/// Evaluation model settings shared by the eval subcommands.
#[derive(Debug, Args, Serialize)]
struct EvalTrainArgs {
    /// Stage-1 (extractor and task head) epochs.
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    /// Stage-2 (user head) epochs.
    #[arg(long, default_value_t = 150)]
    head_epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Base seed; repeat r uses seed + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip per-epoch curves (faster).
    #[arg(long)]
    no_curves: bool,
    /// Test on perturbed instead of clean sessions.
    #[arg(long)]
    perturb_test: bool,
}

impl EvalTrainArgs {
    fn config(&self, extractor: ExtractorConfig) -> EvalConfig {
        EvalConfig {
            extractor,
            train: TrainConfig {
                alpha: 0.0,
                batch_size: self.batch_size,
                epochs: self.epochs,
                head_epochs: self.head_epochs,
                seed: self.seed,
                optimizer: OptimizerConfig::adam(self.lr),
            },
            repeats: self.repeats,
            curves: !self.no_curves,
            perturb_test: self.perturb_test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum CondArg {
    SampleWise,
    UserWise,
}

impl From<CondArg> for Condition {
    fn from(c: CondArg) -> Self {
        match c {
            CondArg::SampleWise => Condition::SampleWise,
            CondArg::UserWise => Condition::UserWise,
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
struct LosoArgs {
    #[arg(long)]
    clean: PathBuf,
    /// Perturbed copy of the clean dataset used for training.
    #[arg(long, requires = "condition")]
    perturbed: Option<PathBuf>,
    #[arg(long, value_enum)]
    condition: Option<CondArg>,
    #[arg(long, default_value = "cfgA")]
    extractor: String,
    /// Re-segment a single-session dataset into this many sessions first.
    #[arg(long)]
    split_sessions: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    train: EvalTrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
struct TransferArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    perturbed: PathBuf,
    #[arg(long, value_enum)]
    condition: CondArg,
    /// Extractor that crafted the perturbation.
    #[arg(long, default_value = "cfgA")]
    craft_cfg: String,
    /// Extractor used for evaluation.
    #[arg(long, default_value = "cfgB")]
    eval_cfg: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    train: EvalTrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
struct OnlineArgs {
    #[arg(long, default_value_t = 4)]
    batches: usize,
    #[arg(long, default_value_t = 10)]
    users_per_batch: usize,
    #[arg(long, default_value_t = 2)]
    sessions: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 64)]
    len: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 1.0)]
    identity_amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    task_amplitude: f64,
    #[arg(long, default_value_t = 0.2)]
    session_amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    /// Seed of the synthetic stream.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long, default_value = "cfgA")]
    extractor: String,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 150)]
    m_model: usize,
    #[arg(long, default_value_t = 150)]
    m_pert: usize,
    /// Held-in sessions used as evaluation folds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    held_sessions: Vec<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    train: EvalTrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
struct InspectArgs {
    file: PathBuf,
    /// Print machine-readable JSON.
    #[arg(long)]
    json: bool,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let expanded = match expand_config(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(expanded) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return 2;
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Splices `--config` file values into the argument list right after the
/// subcommand path, so explicit flags (which come later) override them.
fn expand_config(raw: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let strs: Vec<String> = raw
        .iter()
        .map(|s| s.to_string_lossy().into_owned())
        .collect();
    let mut config = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            config = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        }
    }
    let Some(path) = config else { return Ok(raw) };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config file {path}"))?;
    let Value::Object(map) = value else {
        bail!("config file {path} must hold a JSON object")
    };
    let mut injected = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Bool(true) => injected.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined: Vec<String> =
                    items.iter().map(scalar).collect::<anyhow::Result<_>>()?;
                injected.push(flag);
                injected.push(joined.join(","));
            }
            other => {
                injected.push(flag);
                injected.push(scalar(&other)?);
            }
        }
    }
    let at = subcommand_end(&strs);
    let mut out = raw;
    out.splice(at..at, injected.into_iter().map(OsString::from));
    Ok(out)
}

fn scalar(v: &Value) -> anyhow::Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => bail!("unsupported config value {other}"),
    }
}

/// Index just past the subcommand name(s).
fn subcommand_end(args: &[String]) -> usize {
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--config" | "--threads" => i += 2,
            a if a.starts_with('-') => i += 1,
            "eval" => {
                return (i + 2).min(args.len());
            }
            _ => return i + 1,
        }
    }
    args.len()
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a),
        Command::Shield(a) => cmd_shield(&a),
        Command::Eval(EvalCommand::Loso(a)) => cmd_loso(&a),
        Command::Eval(EvalCommand::Transfer(a)) => cmd_transfer(&a),
        Command::Eval(EvalCommand::Online(a)) => cmd_online(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn snapshot(
    dir: &Path,
    command: &str,
    args: &impl Serialize,
    resolved: Value,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let v = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "resolved": resolved,
    });
    write_json(&dir.join("config.json"), &v)
}

fn load(path: &Path) -> anyhow::Result<Dataset> {
    data::read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let cfg = a.config();
    let d = data::synth_generate(&cfg)?;
    data::write_dataset(&d, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut snap = a.out.clone().into_os_string();
    snap.push(".config.json");
    write_json(
        Path::new(&snap),
        &json!({ "command": "synth", "args": a, "resolved": cfg }),
    )?;
    eprintln!(
        "wrote {} ({} trials, {}x{})",
        a.out.display(),
        d.len(),
        d.channels(),
        d.samples()
    );
    Ok(())
}

fn cmd_shield(a: &ShieldArgs) -> anyhow::Result<()> {
    let d = load(&a.input)?;
    let extractor = ExtractorConfig::preset(&a.extractor)?;
    let start = Instant::now();
    let (set, perturbed) = match a.mode {
        Mode::Sample => {
            let hyper = a.sample_hyper();
            snapshot(
                &a.out_dir,
                "shield",
                a,
                json!({ "extractor": extractor, "sample": hyper }),
            )?;
            let out = shield::generate_sample_wise_observed(&d, &extractor, &hyper, &mut |s| {
                eprintln!(
                    "round {}/{}: loss {:.6} -> {:.6} ({:.0}s)",
                    s.round + 1,
                    hyper.rounds,
                    s.mean_loss_before,
                    s.mean_loss_after,
                    start.elapsed().as_secs_f64()
                );
                Ok(())
            })?;
            (out.perturbation, out.perturbed)
        }
        Mode::User => {
            let hyper = a.user_hyper();
            hyper.validate()?;
            snapshot(
                &a.out_dir,
                "shield",
                a,
                json!({ "extractor": extractor, "user": hyper, "gamma": hyper.gamma() }),
            )?;
            let out = shield::generate_user_wise(&d, &extractor, &hyper)?;
            eprintln!(
                "fitted {} templates ({:.0}s)",
                out.perturbation.count(),
                start.elapsed().as_secs_f64()
            );
            (out.perturbation, out.perturbed)
        }
    };
    data::write_perturbation(&set, a.out_dir.join("perturbation.eegd"))?;
    data::write_dataset(&perturbed, a.out_dir.join("perturbed.eegu"))?;
    write_json(&a.out_dir.join("provenance.json"), &set.provenance)?;
    eprintln!("wrote {}", a.out_dir.display());
    Ok(())
}

fn cmd_loso(a: &LosoArgs) -> anyhow::Result<()> {
    let mut clean = load(&a.clean)?;
    let mut perturbed = a.perturbed.as_deref().map(load).transpose()?;
    if let Some(parts) = a.split_sessions {
        clean = data::split_by_index(&clean, parts)?;
        perturbed = perturbed
            .map(|p| data::split_by_index(&p, parts))
            .transpose()?;
    }
    let cfg = a.train.config(ExtractorConfig::preset(&a.extractor)?);
    snapshot(&a.out_dir, "eval loso", a, json!({ "eval": cfg }))?;
    let pair = perturbed.as_ref().zip(a.condition.map(Condition::from));
    let report = eval::run_loso(&clean, pair, &cfg)?;
    eval::write_report(&report, &a.out_dir)?;
    let g = report.aggregate;
    eprintln!(
        "bca {:.4} ± {:.4}, uia {:.4} ± {:.4}",
        g.bca_mean, g.bca_std, g.uia_mean, g.uia_std
    );
    Ok(())
}

fn cmd_transfer(a: &TransferArgs) -> anyhow::Result<()> {
    let clean = load(&a.clean)?;
    let perturbed = load(&a.perturbed)?;
    let craft = ExtractorConfig::preset(&a.craft_cfg)?;
    let cfg = a.train.config(ExtractorConfig::preset(&a.eval_cfg)?);
    snapshot(
        &a.out_dir,
        "eval transfer",
        a,
        json!({ "craft": craft, "eval": cfg }),
    )?;
    let report = eval::run_transfer(&clean, (&perturbed, a.condition.into()), &craft, &cfg)?;
    eval::write_report(&report, &a.out_dir)?;
    if let Some(r) = report.reduction {
        eprintln!("uia reduction {:.4}, bca reduction {:.4}", r.uia, r.bca);
    }
    Ok(())
}

fn cmd_online(a: &OnlineArgs) -> anyhow::Result<()> {
    let synth = SynthConfig {
        users: a.batches * a.users_per_batch,
        sessions: a.sessions,
        trials_per_user_per_session: a.trials,
        channels: a.channels,
        len: a.len,
        classes: a.classes,
        identity_amplitude: a.identity_amplitude,
        task_amplitude: a.task_amplitude,
        session_amplitude: a.session_amplitude,
        noise_std: a.noise_std,
        seed: a.data_seed,
    };
    let stream = eval::synth_stream(&synth, a.batches)?;
    let beta = a.beta.or(a.preset.map(Preset::beta)).unwrap_or(0.1);
    let cfg = OnlineConfig {
        hyper: UserHyper {
            alpha: a.alpha,
            beta,
            gamma: a.gamma,
            m_model: a.m_model,
            m_pert: a.m_pert,
            batch_size: a.train.batch_size,
            seed: a.train.seed,
            ..UserHyper::default()
        },
        eval: a.train.config(ExtractorConfig::preset(&a.extractor)?),
        held_sessions: a.held_sessions.clone(),
    };
    snapshot(
        &a.out_dir,
        "eval online",
        a,
        json!({ "synth": synth, "online": cfg }),
    )?;
    let report = eval::run_online(&stream, &cfg)?;
    write_json(&a.out_dir.join("report.json"), &report)?;
    fs::write(a.out_dir.join("curves.csv"), report.curves_csv())?;
    for s in &report.steps {
        eprintln!(
            "step {}: {} users, clean uia {:.3}, perturbed uia {:.3} (chance {:.3})",
            s.step, s.users, s.clean.all, s.perturbed.all, s.chance
        );
    }
    Ok(())
}

fn histogram(labels: &[usize], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for &l in labels {
        h[l] += 1;
    }
    h
}

fn cmd_inspect(a: &InspectArgs) -> anyhow::Result<()> {
    let bytes = fs::read(&a.file).with_context(|| format!("reading {}", a.file.display()))?;
    let magic = bytes.get(..8).unwrap_or(&[]);
    let summary = if magic == format::DATASET_MAGIC {
        let d = format::decode_dataset(&bytes)?;
        let max_abs = d.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        json!({
            "kind": "dataset",
            "N": d.len(), "c": d.channels(), "t": d.samples(),
            "K": d.classes(), "U": d.users(), "S": d.sessions(),
            "task_histogram": histogram(d.task_labels(), d.classes()),
            "user_histogram": histogram(d.user_labels(), d.users()),
            "session_histogram": histogram(d.session_labels(), d.sessions()),
            "max_abs_value": max_abs,
        })
    } else if magic == format::DELTA_MAGIC {
        let p = format::decode_perturbation(&bytes)?;
        let norms = p.norms();
        let mut v = json!({
            "kind": "perturbation",
            "mode": p.mode(),
            "count": p.count(), "c": p.channels(), "t": p.samples(),
            "epsilon": p.epsilon(),
            "max_abs_delta": p.max_abs(),
            "max_norm": norms.iter().fold(0.0f64, |m, &n| m.max(n)),
            "mean_norm": norms.iter().sum::<f64>() / norms.len().max(1) as f64,
        });
        if p.mode() == PerturbationMode::UserWise {
            v["template_norms"] = json!(norms);
        }
        v
    } else if magic == checkpoint::MODEL_MAGIC {
        let m = checkpoint::decode_models(&bytes)?;
        json!({
            "kind": "model",
            "extractor": m.extractor.config,
            "channels": m.extractor.channels, "len": m.extractor.len,
            "classes": m.classes(), "users": m.users(), "hidden": m.hidden(),
            "parameter_shapes": m.params().iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>(),
        })
    } else {
        bail!("{}: unrecognized file type", a.file.display());
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print_text(&summary, "");
    }
    Ok(())
}

fn print_text(v: &Value, indent: &str) {
    if let Value::Object(map) = v {
        for (k, val) in map {
            match val {
                Value::Object(_) => {
                    println!("{indent}{k}:");
                    print_text(val, &format!("{indent}  "));
                }
                Value::String(s) => println!("{indent}{k}: {s}"),
                other => println!("{indent}{k}: {other}"),
            }
        }
    }
}
