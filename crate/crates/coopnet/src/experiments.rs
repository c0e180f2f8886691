//! Scenario harness: single evolution runs, parameter sweeps over a value
//! grid with per-cell seeds, and the m = 0 decay regression.

use crate::dynamics::{
    evolve, evolve_observed, CooperationState, GameParams, IntegratorConfig, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::metrics::Assortativity;
use crate::model::{build_connectivity_matrix, sample_deployment, ChannelParams, Domain};
use crate::seed::{derive_seed, STREAM_DEPLOYMENT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainShape {
    Square,
    Torus,
}

impl FromStr for DomainShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(DomainShape::Square),
            "torus" => Ok(DomainShape::Torus),
            other => Err(Error::invalid(format!(
                "unknown domain shape `{other}` (expected square or torus)"
            ))),
        }
    }
}

impl fmt::Display for DomainShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainShape::Square => "square",
            DomainShape::Torus => "torus",
        })
    }
}

/// Full configuration of one evolution scenario. The domain side is
/// always derived from the density: L = sqrt(n / rho).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub rho: f64,
    pub domain_shape: DomainShape,
    pub channel: ChannelParams,
    pub game: GameParams,
    pub integrator: IntegratorConfig,
    pub coop_threshold: f64,
    pub seed: u64,
    pub replicate_count: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 36,
            rho: 4.0,
            domain_shape: DomainShape::Square,
            channel: ChannelParams::new(4.0, 0.1, 1.0).unwrap(),
            game: GameParams::new(1.0, 1.0, 1.0).unwrap(),
            integrator: IntegratorConfig::default(),
            coop_threshold: 1e-6,
            seed: 0,
            replicate_count: 5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.coop_threshold >= 0.0 && self.coop_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "coop_threshold must be >= 0, got {}",
                self.coop_threshold
            )));
        }
        if self.replicate_count < 1 {
            return Err(Error::invalid("replicate_count must be >= 1"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        let side = (self.n as f64 / self.rho).sqrt();
        match self.domain_shape {
            DomainShape::Square => Domain::square(side),
            DomainShape::Torus => Domain::torus(side),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub coop_mean_degree: f64,
    pub coop_assortativity: Assortativity,
    pub total_payoff: f64,
    pub potential: f64,
    pub converged: bool,
    pub steps: u64,
    pub time: f64,
    pub max_weight: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub summary: ScenarioSummary,
    #[serde(rename = "state")]
    pub final_state: CooperationState,
}

/// Samples a deployment, builds the connectivity matrix, and evolves the
/// uniform initial cooperation state to its equilibrium. Deterministic
/// for a given config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(TrajectoryRecord, ScenarioOutcome)> {
    cfg.validate()?;
    let dep = sample_deployment(cfg.n, cfg.domain()?, derive_seed(cfg.seed, STREAM_DEPLOYMENT))?;
    let h = build_connectivity_matrix(&dep, &cfg.channel);
    let state0 = CooperationState::uniform(cfg.n)?;
    let (end, rec) = evolve(&state0, &h, &cfg.game, &cfg.integrator, cfg.coop_threshold)?;
    let summary = ScenarioSummary {
        coop_mean_degree: *rec.coop_mean_degree.last().unwrap(),
        coop_assortativity: *rec.coop_assortativity.last().unwrap(),
        total_payoff: *rec.total_payoff.last().unwrap(),
        potential: *rec.potential.last().unwrap(),
        converged: rec.converged,
        steps: rec.steps_taken,
        time: end.t(),
        max_weight: end.max_weight(),
        seed: cfg.seed,
    };
    Ok((
        rec,
        ScenarioOutcome {
            summary,
            final_state: end,
        },
    ))
}

/// Parameter axes a sweep may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Mu,
    Tau,
    Eta,
    Eps,
    M,
    Rho,
    R0,
}

impl SweepParam {
    pub const ALL: [SweepParam; 7] = [
        SweepParam::Mu,
        SweepParam::Tau,
        SweepParam::Eta,
        SweepParam::Eps,
        SweepParam::M,
        SweepParam::Rho,
        SweepParam::R0,
    ];

    /// Returns a copy of `cfg` with this parameter set to `value`.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut out = *cfg;
        let ch = &cfg.channel;
        let g = &cfg.game;
        match self {
            SweepParam::Mu => out.game = GameParams::new(g.m(), value, g.tau())?,
            SweepParam::Tau => out.game = GameParams::new(g.m(), g.mu(), value)?,
            SweepParam::M => out.game = GameParams::new(value, g.mu(), g.tau())?,
            SweepParam::Eta => out.channel = ChannelParams::new(value, ch.eps(), ch.r0())?,
            SweepParam::Eps => out.channel = ChannelParams::new(ch.eta(), value, ch.r0())?,
            SweepParam::R0 => out.channel = ChannelParams::new(ch.eta(), ch.eps(), value)?,
            SweepParam::Rho => {
                out.rho = value;
                out.validate()?;
            }
        }
        Ok(out)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(SweepParam::Mu),
            "tau" => Ok(SweepParam::Tau),
            "eta" => Ok(SweepParam::Eta),
            "eps" => Ok(SweepParam::Eps),
            "m" => Ok(SweepParam::M),
            "rho" => Ok(SweepParam::Rho),
            "r0" => Ok(SweepParam::R0),
            other => Err(Error::invalid(format!(
                "unknown sweep parameter `{other}` (expected one of mu, tau, eta, eps, m, rho, r0)"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Mu => "mu",
            SweepParam::Tau => "tau",
            SweepParam::Eta => "eta",
            SweepParam::Eps => "eps",
            SweepParam::M => "m",
            SweepParam::Rho => "rho",
            SweepParam::R0 => "r0",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid(format!("sweep axis {param} has no values")));
        }
        let increasing = values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = values.windows(2).all(|w| w[0] > w[1]);
        if values.len() > 1 && !increasing && !decreasing {
            return Err(Error::invalid(format!(
                "sweep axis {param} values must be strictly monotone"
            )));
        }
        Ok(SweepAxis { param, values })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axis1: SweepAxis,
    pub axis2: Option<SweepAxis>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for axis in std::iter::once(&self.axis1).chain(self.axis2.as_ref()) {
            for &v in &axis.values {
                axis.param.apply(&self.base, v)?;
            }
        }
        Ok(())
    }
}

/// One sweep result row. Numeric fields are `None` when the cell's
/// integration faulted; the fault text is kept alongside.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub replicate: u32,
    pub seed: u64,
    pub mean_degree: Option<f64>,
    pub assortativity: Option<Assortativity>,
    pub total_payoff: Option<f64>,
    pub steps: u64,
    pub converged: bool,
    pub fault: Option<String>,
}

/// Runs every grid cell (axis1 outer, axis2 inner, replicates innermost).
/// Cell seeds are `base.seed + cell_index` in that order; cells execute
/// in parallel but rows come back in deterministic grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let axis2_values: Vec<Option<f64>> = match &spec.axis2 {
        Some(a) => a.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut cells = Vec::new();
    for &v1 in &spec.axis1.values {
        for &v2 in &axis2_values {
            for rep in 0..spec.base.replicate_count {
                let index = cells.len() as u64;
                cells.push((v1, v2, rep, spec.base.seed.wrapping_add(index)));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(v1, v2, rep, seed)| {
            let mut row = SweepRow {
                axis1: v1,
                axis2: v2,
                replicate: rep,
                seed,
                mean_degree: None,
                assortativity: None,
                total_payoff: None,
                steps: 0,
                converged: false,
                fault: None,
            };
            let cfg = spec
                .axis1
                .param
                .apply(&spec.base, v1)
                .and_then(|c| match (&spec.axis2, v2) {
                    (Some(a2), Some(v)) => a2.param.apply(&c, v),
                    _ => Ok(c),
                })
                .map(|mut c| {
                    c.seed = seed;
                    c.replicate_count = 1;
                    c
                });
            match cfg.and_then(|c| run_scenario(&c)) {
                Ok((_, outcome)) => {
                    row.mean_degree = Some(outcome.summary.coop_mean_degree);
                    row.assortativity = Some(outcome.summary.coop_assortativity);
                    row.total_payoff = Some(outcome.summary.total_payoff);
                    row.steps = outcome.summary.steps;
                    row.converged = outcome.summary.converged;
                }
                Err(err) => {
                    log::warn!("sweep cell (axis1={v1}, axis2={v2:?}, replicate={rep}) failed: {err}");
                    row.fault = Some(err.to_string());
                }
            }
            row
        })
        .collect();
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TragedyViolation {
    pub step: u64,
    pub i: usize,
    pub j: usize,
    pub increase: f64,
}

/// Result of the m = 0 decay regression.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TragedyReport {
    pub pass: bool,
    pub monotone: bool,
    pub empty_at_threshold: bool,
    pub reached_decay_target: bool,
    pub first_violation: Option<TragedyViolation>,
    pub max_monitored_weight: f64,
    pub monitored_entries: usize,
    pub excluded_entries: usize,
    pub steps: u64,
}

/// How often the decay-target stop condition is evaluated.
const TRAGEDY_CHECK_STRIDE: u64 = 200;

/// Asserts the tragedy of the commons: with m = 0, every monitored entry
/// (those with H_ij < 1; perfectly connected pairs hold their weights and
/// are excluded) decays monotonically and the equilibrium cooperation
/// graph over monitored pairs is empty at the configured threshold.
///
/// The change-based convergence rule stops while entries still carry a
/// residual of order `s / (2 |w_i|^2)`, which can exceed the threshold,
/// so this regression replaces it: the run integrates until every
/// monitored entry has decayed below a quarter of the threshold (or
/// `max_steps` runs out, which fails the report).
pub fn tragedy_regression(cfg: &ScenarioConfig) -> Result<TragedyReport> {
    cfg.validate()?;
    if cfg.game.m() != 0.0 {
        return Err(Error::invalid(format!(
            "tragedy regression requires m = 0, got m = {}",
            cfg.game.m()
        )));
    }
    let dep = sample_deployment(cfg.n, cfg.domain()?, derive_seed(cfg.seed, STREAM_DEPLOYMENT))?;
    let h = build_connectivity_matrix(&dep, &cfg.channel);
    let n = cfg.n;

    let mut monitored = Vec::new();
    let mut excluded = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if h.get(i, j) < 1.0 {
                    monitored.push((i, j));
                } else {
                    excluded += 1;
                }
            }
        }
    }

    let entry_target = cfg.coop_threshold / 4.0;
    // Disable the change-based exit: only the decay target (or the step
    // cap) may end this run.
    let integrator = IntegratorConfig::new(
        cfg.integrator.s(),
        cfg.integrator.max_steps(),
        Some(f64::MIN_POSITIVE),
        cfg.integrator.record_every(),
    )?;
    let state0 = CooperationState::uniform(n)?;
    let mut first_violation: Option<TragedyViolation> = None;
    let mut reached_target = false;
    let (end, rec) = evolve_observed(
        &state0,
        &h,
        &cfg.game,
        &integrator,
        cfg.coop_threshold,
        |info| {
            if first_violation.is_none() && info.max_increase > 0.0 {
                let (i, j) = info.max_increase_entry;
                if h.get(i, j) < 1.0 {
                    first_violation = Some(TragedyViolation {
                        step: info.step,
                        i,
                        j,
                        increase: info.max_increase,
                    });
                }
            }
            if info.step % TRAGEDY_CHECK_STRIDE == 0 {
                let max_e = monitored
                    .iter()
                    .map(|&(i, j)| info.state.weight(i, j))
                    .fold(0.0f64, f64::max);
                if max_e <= entry_target {
                    reached_target = true;
                    return std::ops::ControlFlow::Break(());
                }
            }
            std::ops::ControlFlow::Continue(())
        },
    )?;

    let mut max_monitored = 0.0f64;
    let mut empty = true;
    for &(i, j) in &monitored {
        max_monitored = max_monitored.max(end.weight(i, j));
        if i < j && end.weight(i, j) + end.weight(j, i) > cfg.coop_threshold {
            empty = false;
        }
    }
    let monotone = first_violation.is_none();
    let report = TragedyReport {
        pass: monotone && empty,
        monotone,
        empty_at_threshold: empty,
        reached_decay_target: reached_target,
        first_violation,
        max_monitored_weight: max_monitored,
        monitored_entries: monitored.len(),
        excluded_entries: excluded,
        steps: rec.steps_taken,
    };
    Ok(report)
}
