//! Drop × frame × SNR Monte Carlo sweeps.
//!
//! A drop fixes the path angles (and, for the random-phase approach, the
//! codebook); frames inside a drop redraw fast fading and noise. Drops are the
//! unit of parallel work. Each drop owns the seed `mix(master_seed, drop)` and
//! everything it draws descends from that seed, so results do not depend on
//! the number of worker threads.
//!
//! Two missed-detection estimators are provided. The full one synthesizes
//! frames and runs the GLRT. The reduced one draws the sufficient statistics
//! directly: with `X Xᴴ = (L/N_t) I` and `Fᴴ F = I` a frame is missed iff
//! `‖sqrt(L/N_t) g + z₂‖² < γ/(1-γ) ‖z₁‖²`, where `g ~ CN(0, R)`,
//! `z₂ ~ CN(0, ν I_{K N_r N_t})` and `z₁ ~ CN(0, ν I_{K N_r (L-N_t)})`.
//! Only `‖z₁‖²/ν ~ Gamma(K N_r (L-N_t), 1)` matters, so it is drawn as one
//! gamma variate. Frame draws are reused across the SNR list.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    build_r_general, build_r_iid, fa_closed_form, lemma1_cdf, ln_fa_closed_form, log_sum_exp, AsymptoticMd,
    EffectiveCovariance, GeneralizedFRatio,
};
use crate::channel::{
    correlation_matrix, doppler_hz, iid_channel, realize_channel, sample_paths, ChannelConfig, ChannelModel,
    ChannelRealization, PathSet, TemporalCorrelation,
};
use crate::codebook::{
    build_omni_codebook, dft_sweep_codebook, random_phase_side, zc_codebook, Codebook, Design, SlotSchedule,
};
use crate::detector::{glrt_statistic, make_sync_signal, synthesize, threshold_from_fa, Hypothesis, SyncSignal};
use crate::{domain, rng, CMatrix, Complex, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "approach,k,snr_db,gamma,p_fa_target,p_md_hat,p_md_stderr,p_md_asym,trials,seed";

const LABEL_PATHS: u64 = 0;
const LABEL_FRAMES: u64 = 1;
const LABEL_RANDOM_TX: u64 = 2;
const LABEL_RANDOM_RX: u64 = 3;
const LABEL_CHANNEL: u64 = 4;
const LABEL_NOISE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    /// Golay omni precoding and combining.
    OmniGolay,
    /// ZC quasi-omni precoding (`N_t = 1`), omni combining.
    QuasiOmniZc,
    /// DFT beam sweep (`N_t = 1`), omni combining.
    DftSweep,
    /// Random-phase precoding and combining (`N_t = N_r = 1`), redrawn per drop.
    RandomPhase,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::OmniGolay,
        Approach::QuasiOmniZc,
        Approach::DftSweep,
        Approach::RandomPhase,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Approach::OmniGolay => "omni-golay",
            Approach::QuasiOmniZc => "quasi-omni-zc",
            Approach::DftSweep => "dft-sweep",
            Approach::RandomPhase => "random-phase",
        }
    }

    /// `(N_t, N_r)` actually used given the configured stream counts.
    pub fn streams(self, nt: usize, nr: usize) -> (usize, usize) {
        match self {
            Approach::OmniGolay => (nt, nr),
            Approach::QuasiOmniZc | Approach::DftSweep => (1, nr),
            Approach::RandomPhase => (1, 1),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::Domain(format!("unknown approach `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Full,
    #[default]
    Reduced,
}

fn default_doppler() -> f64 {
    doppler_hz(30.0, 30e9)
}

fn default_slot_interval() -> f64 {
    0.5e-3
}

fn default_paths() -> usize {
    1
}

fn default_zc_root() -> u64 {
    1
}

fn default_workers() -> usize {
    1
}

/// Channel section of an experiment. Path powers default to `1/P` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub model: ChannelModel,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_doppler")]
    pub doppler_hz: f64,
    #[serde(default = "default_slot_interval")]
    pub slot_interval_s: f64,
}

impl ChannelParams {
    pub fn geometric(paths: usize) -> Self {
        Self {
            model: ChannelModel::Geometric,
            paths,
            beta: None,
            doppler_hz: default_doppler(),
            slot_interval_s: default_slot_interval(),
        }
    }

    pub fn iid() -> Self {
        Self {
            model: ChannelModel::Iid,
            ..Self::geometric(1)
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.paths as f64; self.paths])
    }
}

/// One JSON document describing a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub approaches: Vec<Approach>,
    pub k: usize,
    pub mt: usize,
    pub mr: usize,
    pub nt: usize,
    pub nr: usize,
    pub l: usize,
    pub channel: ChannelParams,
    pub snr_db: Vec<f64>,
    pub p_fa_target: f64,
    pub drops: usize,
    pub frames_per_drop: usize,
    #[serde(default)]
    pub estimator: Estimator,
    pub master_seed: u64,
    #[serde(default = "default_zc_root")]
    pub zc_root: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

/// A validation failure located by JSON path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid experiment config:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
pub struct ConfigError(pub Vec<ConfigIssue>);

impl ExperimentConfig {
    /// Defaults of the outdoor evaluation: 64 × 16 arrays, `L = 64`, 500
    /// drops of 10000 frames and a `1e-4` false-alarm target.
    pub fn paper_sec6() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            approaches: vec![Approach::OmniGolay, Approach::QuasiOmniZc, Approach::RandomPhase],
            k: 1,
            mt: 64,
            mr: 16,
            nt: 2,
            nr: 2,
            l: 64,
            channel: ChannelParams::geometric(1),
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            p_fa_target: 1e-4,
            drops: 500,
            frames_per_drop: 10_000,
            estimator: Estimator::Reduced,
            master_seed: 1,
            zc_root: 1,
            workers: 1,
        }
    }

    /// The same setup at desk scale: 100 drops of 1000 frames, `P_FA = 1e-2`.
    pub fn desk() -> Self {
        Self {
            drops: 100,
            frames_per_drop: 1000,
            p_fa_target: 1e-2,
            ..Self::paper_sec6()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-sec6" => Some(Self::paper_sec6()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError(vec![ConfigIssue {
                path: if path == "." { "$".into() } else { format!("$.{path}") },
                message: e.inner().to_string(),
            }])
        })?;
        let issues = cfg.validate();
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError(issues))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every semantic problem, each tagged with the offending JSON path.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |path: &str, message: String| {
            out.push(ConfigIssue {
                path: format!("$.{path}"),
                message,
            })
        };
        if self.schema != SCHEMA_VERSION {
            bad(
                "schema",
                format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema),
            );
        }
        if self.approaches.is_empty() {
            bad("approaches", "need at least one approach".into());
        }
        if self.k == 0 {
            bad("k", "must be at least 1".into());
        }
        for (name, m) in [("mt", self.mt), ("mr", self.mr)] {
            if m < 2 || !m.is_power_of_two() {
                bad(name, format!("{m} is not a power of two >= 2"));
            }
        }
        for (name, n, m) in [("nt", self.nt, self.mt), ("nr", self.nr, self.mr)] {
            if n < 2 || n % 2 != 0 || n > m {
                bad(name, format!("{n} must be even with 2 <= N <= M = {m}"));
            }
        }
        if self.l <= self.nt {
            bad("l", format!("signal length {} must exceed N_t = {}", self.l, self.nt));
        }
        if self.approaches.contains(&Approach::DftSweep) && self.k > self.mt {
            bad(
                "k",
                format!("dft-sweep needs K <= M_t, got K = {} > {}", self.k, self.mt),
            );
        }
        if self.channel.paths == 0 {
            bad("channel.paths", "must be at least 1".into());
        }
        if let Some(beta) = &self.channel.beta {
            if beta.len() != self.channel.paths {
                bad(
                    "channel.beta",
                    format!("{} powers for {} paths", beta.len(), self.channel.paths),
                );
            }
            if beta.iter().any(|b| !(*b >= 0.0)) || (beta.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                bad("channel.beta", "powers must be nonnegative and sum to 1".into());
            }
        }
        if !(self.channel.doppler_hz >= 0.0) || !self.channel.doppler_hz.is_finite() {
            bad("channel.doppler_hz", "must be finite and >= 0".into());
        }
        if !(self.channel.slot_interval_s > 0.0) || !self.channel.slot_interval_s.is_finite() {
            bad("channel.slot_interval_s", "must be finite and > 0".into());
        }
        for (i, s) in self.snr_db.iter().enumerate() {
            if !s.is_finite() {
                bad(&format!("snr_db[{i}]"), "must be finite".into());
            }
        }
        if !(self.p_fa_target > 0.0 && self.p_fa_target < 1.0) {
            bad("p_fa_target", "must lie in (0, 1)".into());
        }
        if self.drops == 0 {
            bad("drops", "must be at least 1".into());
        }
        if self.frames_per_drop == 0 {
            bad("frames_per_drop", "must be at least 1".into());
        }
        if self.workers == 0 {
            bad("workers", "must be at least 1".into());
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(ConfigError(issues).to_string()))
        }
    }

    pub fn channel_config(&self) -> Result<ChannelConfig> {
        ChannelConfig::new(
            self.mt,
            self.mr,
            self.channel.beta(),
            self.channel.doppler_hz,
            self.channel.slot_interval_s,
            self.k,
            self.channel.model,
        )
    }

    /// Threshold calibrated to `p_fa_target` for an approach's stream counts.
    pub fn gamma(&self, approach: Approach) -> Result<f64> {
        let (nt, nr) = approach.streams(self.nt, self.nr);
        threshold_from_fa(self.p_fa_target, self.k, self.l, nr, nt)
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub approach: Approach,
    pub k: usize,
    pub snr_db: f64,
    pub gamma: f64,
    pub p_fa_target: f64,
    pub p_md_hat: f64,
    pub p_md_stderr: f64,
    pub p_md_asym: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.approach,
            self.k,
            self.snr_db,
            self.gamma,
            self.p_fa_target,
            self.p_md_hat,
            self.p_md_stderr,
            self.p_md_asym.map(|v| v.to_string()).unwrap_or_default(),
            self.trials,
            self.seed
        )
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{}", r.csv_line()).unwrap();
    }
    s
}

/// `sqrt(p (1 - p) / n)`.
pub fn binomial_stderr(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn omni_schedules(k: usize, mt: usize, nt: usize, mr: usize, nr: usize) -> Result<(SlotSchedule, SlotSchedule)> {
    Ok((SlotSchedule::cyclic(k, mt, nt)?, SlotSchedule::cyclic(k, mr, nr)?))
}

/// Codebook shared by every drop, or `None` when it is redrawn per drop.
pub fn fixed_codebook(cfg: &ExperimentConfig, approach: Approach) -> Result<Option<Codebook<f64>>> {
    let (st, sr) = omni_schedules(cfg.k, cfg.mt, cfg.nt, cfg.mr, cfg.nr)?;
    let omni = build_omni_codebook(cfg.mt, cfg.nt, cfg.mr, cfg.nr, cfg.k, &st, &sr)?;
    Ok(match approach {
        Approach::OmniGolay => Some(omni),
        Approach::QuasiOmniZc => {
            Some(zc_codebook(cfg.mt, cfg.zc_root, cfg.k)?.with_combiners_of(&omni, Design::QuasiOmniZc)?)
        }
        Approach::DftSweep => Some(dft_sweep_codebook(cfg.mt, cfg.k)?.with_combiners_of(&omni, Design::DftSweep)?),
        Approach::RandomPhase => None,
    })
}

/// Random-phase codebook of one drop.
pub fn drop_codebook(cfg: &ExperimentConfig, drop_seed: u64) -> Result<Codebook<f64>> {
    let w = random_phase_side(cfg.mt, 1, cfg.k, rng::mix(drop_seed, LABEL_RANDOM_TX))?;
    let f = random_phase_side(cfg.mr, 1, cfg.k, rng::mix(drop_seed, LABEL_RANDOM_RX))?;
    Codebook::from_parts(Design::RandomPhase, w, f, None, None)
}

pub fn drop_seed(master: u64, drop: usize) -> u64 {
    rng::mix(master, drop as u64)
}

/// Per-drop context shared by all approaches.
struct DropSetup {
    seed: u64,
    paths: Option<PathSet>,
}

struct Plan {
    cfg: ExperimentConfig,
    channel: ChannelConfig,
    corr: TemporalCorrelation<f64>,
    psi: DMatrix<f64>,
}

impl Plan {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.check()?;
        let channel = cfg.channel_config()?;
        let corr = correlation_matrix::<f64>(&channel);
        let psi = corr.clamped();
        Ok(Self {
            cfg: cfg.clone(),
            channel,
            corr,
            psi,
        })
    }

    fn setup(&self, drop: usize) -> Result<DropSetup> {
        let seed = drop_seed(self.cfg.master_seed, drop);
        let paths = match self.channel.model {
            ChannelModel::Geometric => Some(sample_paths(&self.channel, rng::mix(seed, LABEL_PATHS))?),
            ChannelModel::Iid => None,
        };
        Ok(DropSetup { seed, paths })
    }

    fn covariance(&self, cb: &Codebook<f64>, setup: &DropSetup) -> Result<EffectiveCovariance<f64>> {
        match &setup.paths {
            Some(p) => build_r_general(cb, p, &self.channel.beta, &self.psi),
            None => build_r_iid(cb, &self.psi),
        }
    }

    fn realize(&self, setup: &DropSetup, seed: u64) -> Result<ChannelRealization<f64>> {
        match &setup.paths {
            Some(p) => realize_channel(&self.channel, p, &self.corr, seed),
            None => iid_channel(&self.channel, &self.corr, seed),
        }
    }
}

/// Counts from one drop.
#[derive(Debug, Clone, Default, PartialEq)]
struct DropCounts {
    md: Vec<u64>,
    frames: u64,
    /// Per-SNR asymptotic prediction for the drop's covariance.
    asym: Option<Vec<f64>>,
}

fn asym_predictions(
    cov: &EffectiveCovariance<f64>,
    cfg: &ExperimentConfig,
    nt: usize,
    nr: usize,
    gamma: f64,
    nus: &[f64],
) -> Option<Vec<f64>> {
    let model = AsymptoticMd::new(cov, cfg.k, cfg.l, nr, nt).ok()?;
    nus.iter()
        .map(|&nu| model.value(gamma, nu).ok().map(|p| p.value))
        .collect()
}

/// Stream counts and signal length seen by the reduced statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducedDims {
    pub k: usize,
    pub l: usize,
    pub nr: usize,
    pub nt: usize,
}

/// Missed detections out of `frames` for `g = S ξ`, one count per noise
/// variance. Draws are shared across the noise variances.
pub fn reduced_md_counts(
    s: &CMatrix<f64>,
    dims: ReducedDims,
    gamma: f64,
    nus: &[f64],
    frames: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let (dim, r) = s.shape();
    if dim != dims.k * dims.nr * dims.nt {
        return Err(Error::Dimension(format!(
            "factor has {dim} rows, expected K N_r N_t = {}",
            dims.k * dims.nr * dims.nt
        )));
    }
    if dims.nt >= dims.l {
        return domain("need N_t < L");
    }
    let b = dims.k * dims.nr * (dims.l - dims.nt);
    let gamma_dist = Gamma::new(b as f64, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let scale = (dims.l as f64 / dims.nt as f64).sqrt();
    let t = gamma / (1.0 - gamma);
    let mut stream = rng::stream(seed);
    let mut md = vec![0u64; nus.len()];
    let roots: Vec<f64> = nus.iter().map(|v| v.sqrt()).collect();
    let mut xi = vec![Complex::new(0.0, 0.0); r];
    let mut g = vec![Complex::new(0.0, 0.0); dim];
    let mut z2 = vec![Complex::new(0.0, 0.0); dim];
    for _ in 0..frames {
        for x in xi.iter_mut() {
            *x = rng::complex_normal::<f64, _>(&mut stream);
        }
        for (i, gi) in g.iter_mut().enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for (c, x) in xi.iter().enumerate() {
                acc += s[(i, c)] * x;
            }
            *gi = acc * scale;
        }
        for z in z2.iter_mut() {
            *z = rng::complex_normal::<f64, _>(&mut stream);
        }
        let y0: f64 = gamma_dist.sample(&mut stream);
        for (j, (&nu, &sd)) in nus.iter().zip(&roots).enumerate() {
            let energy: f64 = g.iter().zip(&z2).map(|(a, z)| (a + z * sd).norm_sqr()).sum();
            if energy < t * nu * y0 {
                md[j] += 1;
            }
        }
    }
    Ok(md)
}

fn reduced_drop(plan: &Plan, cb: &Codebook<f64>, setup: &DropSetup, gamma: f64, nus: &[f64]) -> Result<DropCounts> {
    let cfg = &plan.cfg;
    let cov = plan.covariance(cb, setup)?;
    let dims = ReducedDims {
        k: cfg.k,
        l: cfg.l,
        nr: cb.nr,
        nt: cb.nt,
    };
    let md = reduced_md_counts(
        &cov.sqrt_factor(),
        dims,
        gamma,
        nus,
        cfg.frames_per_drop,
        rng::mix(setup.seed, LABEL_FRAMES),
    )?;
    Ok(DropCounts {
        md,
        frames: cfg.frames_per_drop as u64,
        asym: asym_predictions(&cov, cfg, cb.nt, cb.nr, gamma, nus),
    })
}

fn full_drop(
    plan: &Plan,
    cb: &Codebook<f64>,
    signal: &SyncSignal<f64>,
    setup: &DropSetup,
    gamma: f64,
    nus: &[f64],
) -> Result<DropCounts> {
    let cfg = &plan.cfg;
    let mut md = vec![0u64; nus.len()];
    for frame in 0..cfg.frames_per_drop {
        let channel = plan.realize(setup, rng::derive(setup.seed, &[LABEL_CHANNEL, frame as u64]))?;
        let noise_seed = rng::derive(setup.seed, &[LABEL_NOISE, frame as u64]);
        for (j, &nu) in nus.iter().enumerate() {
            let y = synthesize(cb, signal, &channel, nu, Hypothesis::H1, noise_seed)?;
            let out = glrt_statistic(&y, cb, signal)?;
            if !(out.t > gamma) {
                md[j] += 1;
            }
        }
    }
    let asym = plan
        .covariance(cb, setup)
        .ok()
        .and_then(|cov| asym_predictions(&cov, cfg, cb.nt, cb.nr, gamma, nus));
    Ok(DropCounts {
        md,
        frames: cfg.frames_per_drop as u64,
        asym,
    })
}

/// Output of one approach's sweep together with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachResult {
    pub rows: Vec<ResultRow>,
    /// Drops whose covariance could not be factored.
    pub skipped_drops: usize,
    /// Mean over drops of the per-drop MD estimate, per SNR.
    pub per_drop_mean: Vec<f64>,
}

fn run_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn run_approach(cfg: &ExperimentConfig, approach: Approach, estimator: Estimator) -> Result<ApproachResult> {
    let plan = Plan::new(cfg)?;
    let gamma = cfg.gamma(approach)?;
    let nus: Vec<f64> = cfg.snr_db.iter().map(|&s| noise_var(s)).collect();
    let fixed = fixed_codebook(cfg, approach)?;
    let (nt, _) = approach.streams(cfg.nt, cfg.nr);
    let signal = make_sync_signal::<f64>(nt, cfg.l, cfg.k)?;
    let per_drop: Vec<Result<DropCounts>> = run_pool(cfg.workers, || {
        (0..cfg.drops)
            .into_par_iter()
            .map(|d| {
                let setup = plan.setup(d)?;
                let cb = match &fixed {
                    Some(cb) => cb.clone(),
                    None => drop_codebook(cfg, setup.seed)?,
                };
                match estimator {
                    Estimator::Reduced => reduced_drop(&plan, &cb, &setup, gamma, &nus),
                    Estimator::Full => full_drop(&plan, &cb, &signal, &setup, gamma, &nus),
                }
            })
            .collect()
    })?;
    let mut md = vec![0u64; nus.len()];
    let mut trials = 0u64;
    let mut skipped = 0usize;
    let mut used = 0usize;
    let mut mean = vec![0.0; nus.len()];
    let mut asym_sum = vec![0.0; nus.len()];
    let mut asym_complete = true;
    for res in per_drop {
        match res {
            Ok(c) => {
                used += 1;
                trials += c.frames;
                for (j, m) in c.md.iter().enumerate() {
                    md[j] += m;
                    mean[j] += *m as f64 / c.frames as f64;
                }
                match c.asym {
                    Some(a) => asym_sum.iter_mut().zip(a).for_each(|(s, v)| *s += v),
                    None => asym_complete = false,
                }
            }
            Err(Error::Factorization(_)) | Err(Error::ZeroRank) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let rows = nus
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let p = if trials > 0 { md[j] as f64 / trials as f64 } else { 0.0 };
            ResultRow {
                approach,
                k: cfg.k,
                snr_db: cfg.snr_db[j],
                gamma,
                p_fa_target: cfg.p_fa_target,
                p_md_hat: p,
                p_md_stderr: binomial_stderr(p, trials),
                p_md_asym: (asym_complete && used > 0).then(|| asym_sum[j] / used as f64),
                trials,
                seed: cfg.master_seed,
            }
        })
        .collect();
    Ok(ApproachResult {
        rows,
        skipped_drops: skipped,
        per_drop_mean: mean.into_iter().map(|m| m / used.max(1) as f64).collect(),
    })
}

/// Missed detection from the reduced sufficient statistics, one row per SNR.
pub fn run_md_reduced(cfg: &ExperimentConfig, approach: Approach) -> Result<ApproachResult> {
    run_approach(cfg, approach, Estimator::Reduced)
}

/// Missed detection from synthesized frames and the GLRT, one row per SNR.
pub fn run_md_full(cfg: &ExperimentConfig, approach: Approach) -> Result<ApproachResult> {
    run_approach(cfg, approach, Estimator::Full)
}

/// Empirical false-alarm rate at the calibrated threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FaEstimate {
    pub approach: Approach,
    pub gamma: f64,
    pub p_fa_target: f64,
    pub p_fa_hat: f64,
    pub p_fa_stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Scores noise-only frames. The full estimator runs them through the GLRT
/// with the approach's codebook; the reduced one draws the statistic as
/// `A / (A + B)` with `A ~ Gamma(K N_r N_t)` and `B ~ Gamma(K N_r (L - N_t))`.
pub fn estimate_fa(cfg: &ExperimentConfig, approach: Approach, gamma: Option<f64>) -> Result<FaEstimate> {
    let plan = Plan::new(cfg)?;
    let gamma = match gamma {
        Some(g) => g,
        None => cfg.gamma(approach)?,
    };
    let (nt, nr) = approach.streams(cfg.nt, cfg.nr);
    let fixed = fixed_codebook(cfg, approach)?;
    let signal = make_sync_signal::<f64>(nt, cfg.l, cfg.k)?;
    let a = Gamma::new((cfg.k * nr * nt) as f64, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let b = Gamma::new((cfg.k * nr * (cfg.l - nt)) as f64, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let counts: Vec<Result<u64>> = run_pool(cfg.workers, || {
        (0..cfg.drops)
            .into_par_iter()
            .map(|d| {
                let seed = drop_seed(plan.cfg.master_seed, d);
                let mut alarms = 0u64;
                match cfg.estimator {
                    Estimator::Reduced => {
                        let mut stream = rng::stream(rng::mix(seed, LABEL_NOISE));
                        for _ in 0..cfg.frames_per_drop {
                            let x: f64 = a.sample(&mut stream);
                            let y: f64 = b.sample(&mut stream);
                            if x / (x + y) > gamma {
                                alarms += 1;
                            }
                        }
                    }
                    Estimator::Full => {
                        let cb = match &fixed {
                            Some(cb) => cb.clone(),
                            None => drop_codebook(cfg, seed)?,
                        };
                        let silent = ChannelRealization::zero(cb.mr, cb.mt, cb.k);
                        for frame in 0..cfg.frames_per_drop {
                            let s = rng::derive(seed, &[LABEL_NOISE, frame as u64]);
                            let y = synthesize(&cb, &signal, &silent, 1.0, Hypothesis::H0, s)?;
                            if glrt_statistic(&y, &cb, &signal)?.t > gamma {
                                alarms += 1;
                            }
                        }
                    }
                }
                Ok(alarms)
            })
            .collect()
    })?;
    let mut alarms = 0u64;
    for c in counts {
        alarms += c?;
    }
    let trials = (cfg.drops * cfg.frames_per_drop) as u64;
    let p = alarms as f64 / trials as f64;
    Ok(FaEstimate {
        approach,
        gamma,
        p_fa_target: cfg.p_fa_target,
        p_fa_hat: p,
        p_fa_stderr: binomial_stderr(p, trials),
        trials,
        seed: cfg.master_seed,
    })
}

/// Result table of a whole sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows: Vec<ResultRow>,
    pub skipped_drops: usize,
}

impl Sweep {
    pub fn csv(&self) -> String {
        to_csv(&self.rows)
    }

    pub fn rows_for(&self, approach: Approach) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.approach == approach).collect()
    }
}

/// Rows ordered by approach (as listed) and then by SNR (as listed).
pub fn sweep(cfg: &ExperimentConfig) -> Result<Sweep> {
    cfg.check()?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    if cfg.snr_db.is_empty() {
        return Ok(Sweep { rows, skipped_drops: 0 });
    }
    for &approach in &cfg.approaches {
        let res = run_approach(cfg, approach, cfg.estimator)?;
        skipped += res.skipped_drops;
        rows.extend(res.rows);
    }
    Ok(Sweep {
        rows,
        skipped_drops: skipped,
    })
}

pub const ANALYTIC_HEADER: &str = "quantity,k,l,nr,nt,gamma,noise_var,value,log_value";

/// Closed-form quantity evaluated by [`analytic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// False-alarm probability at the calibrated threshold.
    Fa,
    /// High-SNR missed-detection prediction, averaged over drops.
    MdAsym,
    /// Small-`t` law applied to the exact reduced ratio, averaged over drops.
    Lemma1,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::Fa => "fa",
            Quantity::MdAsym => "md-asym",
            Quantity::Lemma1 => "lemma1",
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Quantity::Fa, Quantity::MdAsym, Quantity::Lemma1]
            .into_iter()
            .find(|q| q.label() == s)
            .ok_or_else(|| Error::Domain(format!("unknown quantity `{s}`, expected fa, md-asym or lemma1")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticRow {
    pub quantity: Quantity,
    pub k: usize,
    pub l: usize,
    pub nr: usize,
    pub nt: usize,
    pub gamma: f64,
    pub noise_var: Option<f64>,
    pub value: f64,
    pub log_value: f64,
}

impl AnalyticRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.quantity.label(),
            self.k,
            self.l,
            self.nr,
            self.nt,
            self.gamma,
            self.noise_var.map(|v| v.to_string()).unwrap_or_default(),
            self.value,
            self.log_value
        )
    }
}

pub fn analytic_csv(rows: &[AnalyticRow]) -> String {
    let mut s = String::from(ANALYTIC_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{}", r.csv_line()).unwrap();
    }
    s
}

/// `ln` of the missed-detection value of one covariance at one noise level.
fn ln_md(
    quantity: Quantity,
    cov: &EffectiveCovariance<f64>,
    cfg: &ExperimentConfig,
    nt: usize,
    nr: usize,
    gamma: f64,
    nu: f64,
) -> Result<f64> {
    match quantity {
        Quantity::MdAsym => Ok(AsymptoticMd::new(cov, cfg.k, cfg.l, nr, nt)?.value(gamma, nu)?.ln),
        _ => {
            let dim = cfg.k * nr * nt;
            let scale = cfg.l as f64 / (nt as f64 * nu);
            let mut lambda: Vec<f64> = cov.nonzero_eigs().iter().map(|e| 1.0 + scale * e).collect();
            lambda.resize(dim, 1.0);
            let ratio = GeneralizedFRatio::new(lambda, vec![1.0; cfg.k * nr * (cfg.l - nt)])?;
            Ok(lemma1_cdf(&ratio, gamma / (1.0 - gamma))?.ln())
        }
    }
}

/// Closed-form rows for one approach: a single false-alarm row, or one
/// missed-detection row per SNR averaged over the configured drops. Drops
/// whose covariance has rank zero are left out of the average.
pub fn analytic(cfg: &ExperimentConfig, approach: Approach, quantity: Quantity) -> Result<Vec<AnalyticRow>> {
    let plan = Plan::new(cfg)?;
    let gamma = cfg.gamma(approach)?;
    let (nt, nr) = approach.streams(cfg.nt, cfg.nr);
    let row = |noise_var, log_value: f64| AnalyticRow {
        quantity,
        k: cfg.k,
        l: cfg.l,
        nr,
        nt,
        gamma,
        noise_var,
        value: log_value.exp(),
        log_value,
    };
    if quantity == Quantity::Fa {
        let ln = ln_fa_closed_form(gamma, cfg.k, cfg.l, nr, nt);
        let mut r = row(None, ln);
        r.value = fa_closed_form(gamma, cfg.k, cfg.l, nr, nt);
        return Ok(vec![r]);
    }
    let fixed = fixed_codebook(cfg, approach)?;
    let drops = match plan.channel.model {
        ChannelModel::Geometric => cfg.drops,
        ChannelModel::Iid if fixed.is_some() => 1,
        ChannelModel::Iid => cfg.drops,
    };
    let nus: Vec<f64> = cfg.snr_db.iter().map(|&s| noise_var(s)).collect();
    let mut per_snr: Vec<Vec<f64>> = vec![Vec::with_capacity(drops); nus.len()];
    for d in 0..drops {
        let setup = plan.setup(d)?;
        let cb = match &fixed {
            Some(cb) => cb.clone(),
            None => drop_codebook(cfg, setup.seed)?,
        };
        let cov = match plan.covariance(&cb, &setup) {
            Ok(c) if c.rank > 0 => c,
            Ok(_) | Err(Error::Factorization(_)) => continue,
            Err(e) => return Err(e),
        };
        for (j, &nu) in nus.iter().enumerate() {
            per_snr[j].push(ln_md(quantity, &cov, cfg, nt, nr, gamma, nu)?);
        }
    }
    if per_snr.first().is_some_and(|v| v.is_empty()) {
        return Err(Error::ZeroRank);
    }
    Ok(nus
        .iter()
        .zip(per_snr)
        .map(|(&nu, lns)| row(Some(nu), log_sum_exp(&lns) - (lns.len() as f64).ln()))
        .collect())
}

/// Decay in decades per 10 dB between two rows, `(log10 p1 - log10 p2) / ((s2 - s1) / 10)`.
pub fn estimate_slope(r1: &ResultRow, r2: &ResultRow) -> Result<f64> {
    if !(r1.snr_db < r2.snr_db) {
        return domain("rows must be ordered by increasing SNR");
    }
    for r in [r1, r2] {
        if !(r.p_md_hat > 0.0 && r.p_md_hat < 0.1) {
            return domain(format!(
                "slope not applicable: MD {} at {} dB is outside (0, 0.1)",
                r.p_md_hat, r.snr_db
            ));
        }
    }
    Ok((r1.p_md_hat.log10() - r2.p_md_hat.log10()) / ((r2.snr_db - r1.snr_db) / 10.0))
}

/// Least-squares slope of `-log10 p` against `snr_db / 10` over rows with
/// `lo <= p <= hi`.
pub fn fit_slope(rows: &[&ResultRow], lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.p_md_hat > 0.0 && r.p_md_hat >= lo && r.p_md_hat <= hi)
        .map(|r| (r.snr_db / 10.0, r.p_md_hat.log10()))
        .collect();
    if pts.len() < 2 {
        return domain(format!("need two points with MD in [{lo}, {hi}], found {}", pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return domain("points share one SNR");
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(-sxy / sxx)
}
