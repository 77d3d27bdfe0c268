//! `rislab`: generate channel datasets, finetune the channel encoder,
//! train agents, run codebook sweeps, and drive method-comparison
//! experiments from one TOML configuration.

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rislab_cli::config::{parse_config, RunConfig};
use rislab_cli::experiment::{
    agent_draw_scores, finetune_model, generate_sets, held_out_sets, mix, run_experiment,
    ExperimentSpec, Method, Sweep,
};
use rislab_cli::io::{read_channels, write_channels};
use rislab_core::baselines::{beam_sweep, dft_codebook, CodebookKind};
use rislab_core::channel::{dbm_to_mw, generate_channels};
use rislab_core::ddpg::{train, Agent};
use rislab_core::env::{RisEnv, StateMode};
use rislab_core::lwm::{load_model, save_model, sidecar_path, LwmModel};
use rislab_core::{Error, Result};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "rislab", version, about = "RIS beam management experiment driver")]
struct Cli {
    /// TOML run configuration; unset keys use built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StateArg {
    /// Flattened channel coefficients.
    Raw,
    /// Encoder summary rows; needs an encoder checkpoint or finetunes one.
    Embedded,
}

impl StateArg {
    fn mode(self) -> StateMode {
        match self {
            StateArg::Raw => StateMode::Raw,
            StateArg::Embedded => StateMode::Embedded,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Fmdrl,
    RawDrl,
    BeamSweep,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Fmdrl => vec![Method::Fmdrl],
            MethodArg::RawDrl => vec![Method::RawDrl],
            MethodArg::BeamSweep => vec![Method::BeamSweep],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel dataset file.
    GenData {
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
        /// Number of channel sets; defaults to `dataset_size`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Finetune the channel encoder and save its checkpoint.
    Finetune {
        /// Output encoder checkpoint (a config sidecar is written next to it).
        #[arg(long)]
        out: PathBuf,
        /// Dataset file to train on; defaults to freshly generated channels.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train an agent; writes a reward trace and an agent checkpoint.
    Train {
        /// Observation construction.
        #[arg(long, value_enum)]
        state: StateArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Encoder checkpoint for embedded state; finetuned fresh if absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare methods across a sweep; one CSV row per (point, seed, method).
    Sweep {
        /// Results CSV (overwritten).
        #[arg(long)]
        out: PathBuf,
        /// Transmit power levels in dBm.
        #[arg(long, value_delimiter = ',')]
        power_dbm: Vec<f64>,
        /// User counts.
        #[arg(long, value_delimiter = ',')]
        users: Vec<usize>,
        /// Seeds, one cell per (sweep point, seed); defaults to --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Method to run, or all three.
        #[arg(long, value_enum, default_value_t = MethodArg::All)]
        method: MethodArg,
    },
    /// Run one exhaustive codebook sweep and dump the per-codeword report.
    Beamsweep {
        /// Report CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained agent checkpoint on held-out channel draws.
    Eval {
        /// Agent checkpoint.
        #[arg(long)]
        agent: PathBuf,
        /// Observation construction the agent was trained with.
        #[arg(long, value_enum)]
        state: StateArg,
        /// Encoder checkpoint; required with embedded state.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Optional per-draw CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenData { out, count } => gen_data(&cfg, cli.seed, &out, count),
        Command::Finetune { out, data } => finetune_cmd(&cfg, cli.seed, &out, data.as_deref()),
        Command::Train { state, out, model } => {
            train_cmd(&cfg, cli.seed, state, &out, model.as_deref())
        }
        Command::Sweep {
            out,
            power_dbm,
            users,
            seeds,
            method,
        } => sweep_cmd(&cfg, cli.seed, &out, power_dbm, users, seeds, method),
        Command::Beamsweep { out } => beamsweep_cmd(&cfg, cli.seed, &out),
        Command::Eval {
            agent,
            state,
            model,
            out,
        } => eval_cmd(&cfg, cli.seed, &agent, state, model.as_deref(), out.as_deref()),
    }
}

fn io_ctx(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => parse_config(&fs::read_to_string(p).map_err(|e| io_ctx(e, p))?),
        None => Ok(RunConfig::default()),
    }
}

fn gen_data(cfg: &RunConfig, seed: u64, out: &Path, count: Option<usize>) -> Result<()> {
    let n = count.unwrap_or(cfg.dataset_size);
    let sets = generate_sets(&cfg.scenario(), n, seed)?;
    write_channels(out, &sets)?;
    println!(
        "wrote {n} channel sets (K={}, {}x{} direct, M={}) to {}",
        cfg.users,
        cfg.n_r,
        cfg.n_t,
        cfg.ris_elements,
        out.display()
    );
    Ok(())
}

fn finetune_cmd(cfg: &RunConfig, seed: u64, out: &Path, data: Option<&Path>) -> Result<()> {
    let sets = match data {
        Some(p) => read_channels(p)?,
        None => generate_sets(&cfg.scenario(), cfg.dataset_size, mix(seed, 1))?,
    };
    let (model, trace) = finetune_model(cfg, &sets, seed)?;
    save_model(&model, out)?;
    let (first, last) = (
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN),
    );
    println!(
        "finetuned {} epochs on the training split of {} sets: masked loss {first:.6} -> {last:.6}",
        trace.len(),
        sets.len()
    );
    println!(
        "saved encoder to {} (sidecar {})",
        out.display(),
        sidecar_path(out).display()
    );
    Ok(())
}

/// Builds the embedded-state encoder for `train`: loads the checkpoint
/// when given, otherwise finetunes a fresh one and saves it under `out`.
fn train_encoder(cfg: &RunConfig, seed: u64, out: &Path, model: Option<&Path>) -> Result<LwmModel> {
    if let Some(p) = model {
        return load_model(p);
    }
    let sets = generate_sets(&cfg.scenario(), cfg.dataset_size, mix(seed, 1))?;
    let (encoder, trace) = finetune_model(cfg, &sets, mix(seed, 2))?;
    let path = out.join("encoder.rbl");
    save_model(&encoder, &path)?;
    println!(
        "finetuned a fresh encoder (masked loss {:.6} -> {:.6}), saved to {}",
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(encoder)
}

fn train_cmd(
    cfg: &RunConfig,
    seed: u64,
    state: StateArg,
    out: &Path,
    model: Option<&Path>,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| io_ctx(e, out))?;
    let embedder = match state.mode() {
        StateMode::Embedded => Some(train_encoder(cfg, seed, out, model)?),
        StateMode::Raw => None,
    };
    let mut env = RisEnv::new(cfg.env_config(state.mode()), embedder)?;
    let (agent, outcome) = train(&mut env, cfg.agent_config(), seed)?;
    let trace_path = out.join("trace.csv");
    fs::write(&trace_path, outcome.to_csv()).map_err(|e| io_ctx(e, &trace_path))?;
    let agent_path = out.join("agent.rbl");
    agent.save(&agent_path)?;
    if let Some(msg) = &outcome.divergence {
        return Err(Error::Numeric(format!(
            "training diverged: {msg} (partial trace kept at {})",
            trace_path.display()
        )));
    }
    let n = outcome.episode_rewards.len();
    let tail = &outcome.episode_rewards[n - (n / 10).max(1)..];
    println!(
        "trained {n} episodes; mean reward over the final {} episodes: {:.6}",
        tail.len(),
        tail.iter().sum::<f64>() / tail.len() as f64
    );
    println!(
        "wrote {} and {}",
        trace_path.display(),
        agent_path.display()
    );
    Ok(())
}

fn sweep_cmd(
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
    power_dbm: Vec<f64>,
    users: Vec<usize>,
    seeds: Vec<u64>,
    method: MethodArg,
) -> Result<()> {
    if !power_dbm.is_empty() && !users.is_empty() {
        return Err(Error::Config(
            "choose either --power-dbm or --users, not both".into(),
        ));
    }
    let sweep = if !power_dbm.is_empty() {
        Sweep::PowerDbm(power_dbm)
    } else if !users.is_empty() {
        Sweep::Users(users)
    } else {
        Sweep::None
    };
    let seeds = if seeds.is_empty() { vec![seed] } else { seeds };
    match fs::remove_file(out) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_ctx(e, out)),
    }
    let mut total = 0;
    for m in method.methods() {
        let spec = ExperimentSpec {
            config: cfg.clone(),
            method: m,
            sweep: sweep.clone(),
            seeds: seeds.clone(),
            out: out.to_path_buf(),
        };
        total += run_experiment(&spec)?.len();
    }
    println!("wrote {total} result rows to {}", out.display());
    Ok(())
}

fn beamsweep_cmd(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let set = generate_channels(&cfg.scenario(), seed)?;
    let bs_book = dft_codebook(CodebookKind::BsBeam, cfg.n_t, cfg.codebook_size)?;
    let ris_book = dft_codebook(CodebookKind::RisPhase, cfg.ris_elements, cfg.codebook_size)?;
    let outcome = beam_sweep(
        &set,
        &bs_book,
        &ris_book,
        dbm_to_mw(cfg.p_max_dbm),
        dbm_to_mw(cfg.noise_dbm),
    )?;
    fs::write(out, outcome.to_csv()).map_err(|e| io_ctx(e, out))?;
    println!(
        "best codeword pair: ris_index={}, bs_indices={:?}, sum SE {:.6} bits/s/Hz ({} evaluations)",
        outcome.ris_index, outcome.bs_indices, outcome.sum_se, outcome.evaluations
    );
    println!("wrote per-codeword report to {}", out.display());
    Ok(())
}

fn eval_cmd(
    cfg: &RunConfig,
    seed: u64,
    agent_path: &Path,
    state: StateArg,
    model: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let embedder = match (state.mode(), model) {
        (StateMode::Embedded, Some(p)) => Some(load_model(p)?),
        (StateMode::Embedded, None) => {
            return Err(Error::Config(
                "--state embedded needs --model <encoder checkpoint>".into(),
            ));
        }
        (StateMode::Raw, _) => None,
    };
    let mut env = RisEnv::new(cfg.env_config(state.mode()), embedder)?;
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut agent = Agent::new(env.state_len(), env.action_len(), cfg.agent_config(), &mut rng)?;
    agent.load(agent_path)?;
    let sets = held_out_sets(cfg, seed)?;
    let scores = agent_draw_scores(&mut env, &agent, &sets)?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!(
        "mean sum SE over {} held-out draws: {mean:.6} bits/s/Hz",
        scores.len()
    );
    if let Some(path) = out {
        let mut csv = String::from("draw,sum_se\n");
        for (i, s) in scores.iter().enumerate() {
            csv.push_str(&format!("{i},{s}\n"));
        }
        fs::write(path, csv).map_err(|e| io_ctx(e, path))?;
        println!("wrote per-draw scores to {}", path.display());
    }
    Ok(())
}
