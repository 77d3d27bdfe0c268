//! Experiment driver: sweeps over transmit power or user count, trains or
//! sweeps each method at every (sweep point, seed) cell, and appends one
//! CSV row per cell.
//!
//! Each cell is self-contained: every random stream it touches (dataset,
//! encoder init and finetune, agent training, held-out evaluation draws)
//! is derived from the cell's `(sweep value, seed)` pair alone, so
//! re-running any single cell reproduces its row byte for byte regardless
//! of which other cells ran. The held-out evaluation draws do not depend
//! on the method either, so methods at the same cell are scored on the
//! same channels. Rows are flushed as they are produced; a failure keeps
//! everything written so far.

use crate::config::RunConfig;
use crate::io::add_path;
use rislab_core::baselines::{beam_sweep, dft_codebook, CodebookKind};
use rislab_core::channel::{dbm_to_mw, generate_channels, ChannelSet, CMatrix, ScenarioConfig};
use rislab_core::ddpg::{train, Agent, TrainOutcome};
use rislab_core::env::{Action, RisEnv, StateMode};
use rislab_core::lwm::{finetune, LwmModel};
use rislab_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Solution method for one experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Finetune the channel encoder, then train on embedded states.
    Fmdrl,
    /// Train directly on flattened channel coefficients.
    RawDrl,
    /// Exhaustive codebook sweep, no learning.
    BeamSweep,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fmdrl, Method::RawDrl, Method::BeamSweep];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Fmdrl => "fmdrl",
            Method::RawDrl => "raw_drl",
            Method::BeamSweep => "beam_sweep",
        }
    }
}

/// What the experiment varies across cells.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Single cell at the configured scenario.
    None,
    /// Transmit power levels in dBm.
    PowerDbm(Vec<f64>),
    /// User counts.
    Users(Vec<usize>),
}

/// One experiment: a method evaluated over `sweep x seeds` cells,
/// appending rows to the CSV at `out`.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub config: RunConfig,
    pub method: Method,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub sweep_value: f64,
    pub seed: u64,
    pub method: Method,
    pub mean_sum_se: f64,
}

pub const RESULT_HEADER: &str = "sweep_value,seed,method,mean_sum_se";

// Stream tags for the per-cell seed derivation.
const TAG_DATA: u64 = 1;
const TAG_EMBED: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_EVAL: u64 = 4;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive two-word mix; seeds every stream in a cell.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        match &self.sweep {
            Sweep::None => {}
            Sweep::PowerDbm(v) if v.is_empty() => {
                return Err(Error::Config("power_dbm sweep list must be nonempty".into()));
            }
            Sweep::Users(v) if v.is_empty() => {
                return Err(Error::Config("users sweep list must be nonempty".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Expands the sweep into `(reported value, cell config)` pairs.
    fn points(&self) -> Vec<(f64, RunConfig)> {
        match &self.sweep {
            Sweep::None => vec![(self.config.p_max_dbm, self.config.clone())],
            Sweep::PowerDbm(levels) => levels
                .iter()
                .map(|&p| {
                    let mut cfg = self.config.clone();
                    cfg.p_max_dbm = p;
                    (p, cfg)
                })
                .collect(),
            Sweep::Users(counts) => counts
                .iter()
                .map(|&k| {
                    let mut cfg = self.config.clone();
                    cfg.users = k;
                    (k as f64, cfg)
                })
                .collect(),
        }
    }
}

/// Fresh channel sets from a counter-free seed stream.
pub fn generate_sets(scenario: &ScenarioConfig, n: usize, seed: u64) -> Result<Vec<ChannelSet>> {
    (0..n)
        .map(|i| generate_channels(scenario, mix(seed, i as u64)))
        .collect()
}

/// Matrices of the training split, in set order: per set, direct user
/// channels ascending, then the BS-RIS link, then RIS-user channels
/// ascending.
pub fn training_matrices(cfg: &RunConfig, sets: &[ChannelSet]) -> Result<Vec<CMatrix>> {
    let (train, _, _) = cfg.splits(sets.len());
    let mut mats = Vec::new();
    for set in &sets[train] {
        for k in 0..set.users() {
            mats.push(set.direct(k)?.clone());
        }
        mats.push(set.bs_ris().clone());
        for k in 0..set.users() {
            mats.push(set.ris_user(k)?.clone());
        }
    }
    Ok(mats)
}

/// Initializes an encoder and finetunes it on the training split of
/// `sets`. Returns the model and its per-epoch loss trace.
pub fn finetune_model(
    cfg: &RunConfig,
    sets: &[ChannelSet],
    seed: u64,
) -> Result<(LwmModel, Vec<f64>)> {
    let mats = training_matrices(cfg, sets)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut model = LwmModel::init(cfg.lwm_config(), &mut rng)?;
    let trace = finetune(&mut model, &mats, &cfg.finetune_config(seed))?;
    Ok((model, trace))
}

/// The held-out channel draws scoring a cell; identical across methods
/// and across power levels at the same seed.
pub fn held_out_sets(cfg: &RunConfig, seed: u64) -> Result<Vec<ChannelSet>> {
    generate_sets(&cfg.scenario(), cfg.eval_draws, mix(seed, TAG_EVAL))
}

/// Sum SE of the agent's noiseless policy on each draw, one environment
/// step per draw.
pub fn agent_draw_scores(env: &mut RisEnv, agent: &Agent, sets: &[ChannelSet]) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(sets.len());
    for set in sets {
        let state = env.reset_with(set.clone())?;
        let a = agent.actor_forward(&state)?;
        let step = env.step(&Action::new(a, env.action_len())?)?;
        scores.push(step.sum_se);
    }
    Ok(scores)
}

/// Mean sum SE of the agent's noiseless policy over the given draws.
pub fn evaluate_agent(env: &mut RisEnv, agent: &Agent, sets: &[ChannelSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Config("need at least one evaluation draw".into()));
    }
    let scores = agent_draw_scores(env, agent, sets)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean beam-sweep sum SE over the given draws with the configured
/// codebook sizes.
pub fn evaluate_sweep(cfg: &RunConfig, sets: &[ChannelSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Config("need at least one evaluation draw".into()));
    }
    let bs_book = dft_codebook(CodebookKind::BsBeam, cfg.n_t, cfg.codebook_size)?;
    let ris_book = dft_codebook(CodebookKind::RisPhase, cfg.ris_elements, cfg.codebook_size)?;
    let p_max = dbm_to_mw(cfg.p_max_dbm);
    let noise = dbm_to_mw(cfg.noise_dbm);
    let mut total = 0.0;
    for set in sets {
        total += beam_sweep(set, &bs_book, &ris_book, p_max, noise)?.sum_se;
    }
    Ok(total / sets.len() as f64)
}

/// Trains one method at one cell and returns `(mean sum SE, training
/// trace)`; the trace is `None` for the sweep baseline.
pub fn run_cell(cfg: &RunConfig, method: Method, seed: u64) -> Result<(f64, Option<TrainOutcome>)> {
    let eval_sets = held_out_sets(cfg, seed)?;
    if method == Method::BeamSweep {
        return Ok((evaluate_sweep(cfg, &eval_sets)?, None));
    }
    let (mode, embedder) = match method {
        Method::Fmdrl => {
            let sets = generate_sets(&cfg.scenario(), cfg.dataset_size, mix(seed, TAG_DATA))?;
            let (model, _) = finetune_model(cfg, &sets, mix(seed, TAG_EMBED))?;
            (StateMode::Embedded, Some(model))
        }
        _ => (StateMode::Raw, None),
    };
    let mut env = RisEnv::new(cfg.env_config(mode), embedder)?;
    let (agent, outcome) = train(&mut env, cfg.agent_config(), mix(seed, TAG_TRAIN))?;
    if let Some(msg) = &outcome.divergence {
        return Err(Error::Numeric(format!(
            "{} training diverged at seed {seed}: {msg}",
            method.label()
        )));
    }
    let mean = evaluate_agent(&mut env, &agent, &eval_sets)?;
    Ok((mean, Some(outcome)))
}

/// Name of the per-cell reward-trace CSV, placed next to the results file.
pub fn trace_filename(method: Method, sweep_value: f64, seed: u64) -> String {
    format!("trace_{}_v{}_s{}.csv", method.label(), sweep_value, seed)
}

/// Runs every `(sweep point, seed)` cell of `spec`, appending one row
/// per cell to the results CSV at `spec.out` (the header is written when
/// the file is new or empty). Training methods also write one reward
/// trace per cell next to the results file. Rows are flushed
/// individually, so a failing cell preserves all earlier rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let out = spec.out.as_path();
    let trace_dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    if !trace_dir.as_os_str().is_empty() {
        fs::create_dir_all(&trace_dir).map_err(|e| add_path(e.into(), &trace_dir))?;
    }
    let need_header = fs::metadata(out).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| add_path(Error::Io(e), out))?;
    if need_header {
        writeln!(file, "{RESULT_HEADER}").map_err(|e| add_path(Error::Io(e), out))?;
    }
    let mut rows = Vec::new();
    for (value, cfg) in spec.points() {
        for &seed in &spec.seeds {
            let (mean, outcome) = run_cell(&cfg, spec.method, seed)?;
            if let Some(outcome) = outcome {
                let path = trace_dir.join(trace_filename(spec.method, value, seed));
                fs::write(&path, outcome.to_csv()).map_err(|e| add_path(e.into(), &path))?;
            }
            writeln!(file, "{value},{seed},{},{mean}", spec.method.label())
                .map_err(|e| add_path(Error::Io(e), out))?;
            file.flush().map_err(|e| add_path(Error::Io(e), out))?;
            rows.push(CellResult {
                sweep_value: value,
                seed,
                method: spec.method,
                mean_sum_se: mean,
            });
        }
    }
    Ok(rows)
}
