//! The variational loop: alternating cost-phase and mixer evolutions,
//! projected-cost metrics, the two-stage parameter search, Born sampling of
//! the optimized state, and instance-averaged benchmarking.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{EvolveConfig, Evolver};
use crate::error::{Error, Result};
use crate::graph::{random_instance, FlowConfig, InstanceFamily, ProblemInstance};
use crate::hilbert::{Basis, ResourceCaps, SpaceKind, StateVector};
use crate::invalid_arg;
use crate::operators::{self, MixerKind, Operator};
use crate::optim::{self, OptimizerConfig};
use crate::prep::{self, PrepStrategy, ScanConfig};

/// One point in parameter space: `p` cost angles and `p` mixer angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaSchedule {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

pub const GAMMA_MAX: f64 = 2.0 * std::f64::consts::PI;
pub const BETA_MAX: f64 = std::f64::consts::PI;

impl QaoaSchedule {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.len() != betas.len() {
            return Err(invalid_arg!(
                "schedule needs equal angle counts, got {} cost and {} mixer",
                gammas.len(),
                betas.len()
            ));
        }
        for &g in &gammas {
            if !(0.0..=GAMMA_MAX).contains(&g) {
                return Err(invalid_arg!("cost angle {g} outside [0, 2pi]"));
            }
        }
        for &b in &betas {
            if !(0.0..=BETA_MAX).contains(&b) {
                return Err(invalid_arg!("mixer angle {b} outside [0, pi]"));
            }
        }
        Ok(QaoaSchedule { gammas, betas })
    }

    pub fn p(&self) -> usize {
        self.gammas.len()
    }

    /// Layout `[gamma_1..gamma_p, beta_1..beta_p]` used by the optimizer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.gammas.clone();
        flat.extend_from_slice(&self.betas);
        flat
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(invalid_arg!("flat schedule length {} is odd", flat.len()));
        }
        let p = flat.len() / 2;
        QaoaSchedule::new(flat[..p].to_vec(), flat[p..].to_vec())
    }
}

/// Applies the `p`-round alternation to `psi0`, cost phase first.
pub fn qaoa_state(
    cost: &Evolver,
    mixer: &Evolver,
    schedule: &QaoaSchedule,
    psi0: &StateVector,
) -> Result<StateVector> {
    let mut state = psi0.clone();
    for (gamma, beta) in schedule.gammas.iter().zip(&schedule.betas) {
        state = cost.evolve(&state, *gamma)?;
        state = mixer.evolve(&state, *beta)?;
    }
    Ok(state)
}

fn check_diagonal_pair(state: &StateVector, op: &Operator) -> Result<()> {
    if op.basis_fingerprint() != state.basis().fingerprint() {
        return Err(Error::BasisMismatch(
            "state and operator live on different bases".into(),
        ));
    }
    Ok(())
}

/// Weight the state puts on the projected (loopless feasible) subspace.
pub fn feasible_mass(state: &StateVector, projector: &Operator) -> Result<f64> {
    check_diagonal_pair(state, projector)?;
    let proj = projector.diagonal()?;
    Ok(state
        .amps()
        .iter()
        .zip(proj)
        .map(|(a, p)| p * a.norm_sqr())
        .sum())
}

/// `<psi| Pi H_C Pi |psi>` for a diagonal cost and a diagonal projector.
///
/// Zero when the state has no feasible weight at all; pair with
/// [`feasible_mass`] to distinguish that degenerate case from a genuinely
/// zero-cost state.
pub fn projected_cost(state: &StateVector, cost: &Operator, projector: &Operator) -> Result<f64> {
    check_diagonal_pair(state, cost)?;
    check_diagonal_pair(state, projector)?;
    let c = cost.diagonal()?;
    let proj = projector.diagonal()?;
    Ok(state
        .amps()
        .iter()
        .enumerate()
        .map(|(i, a)| proj[i] * c[i] * a.norm_sqr())
        .sum())
}

/// `<psi| Pi (C_max - H_C) Pi |psi> / (C_max - C_min)`.
///
/// Degenerate cost ranges (`C_max == C_min`) fall back to the feasible mass,
/// matching the averaging convention for instances with a single cost value.
pub fn approximation_ratio(
    state: &StateVector,
    cost: &Operator,
    projector: &Operator,
    c_min: f64,
    c_max: f64,
) -> Result<f64> {
    let mass = feasible_mass(state, projector)?;
    if c_max - c_min <= 1e-12 * (1.0 + c_max.abs()) {
        return Ok(mass);
    }
    let eps = projected_cost(state, cost, projector)?;
    Ok((c_max * mass - eps) / (c_max - c_min))
}

/// Exhaustive cost extremes over the loopless feasible set.
#[derive(Debug, Clone, Serialize)]
pub struct CostBounds {
    pub c_min: f64,
    pub c_max: f64,
    /// A minimizing configuration, as a flow string.
    pub argmin: String,
    /// `C_max - C_min` is below resolution: every feasible solution costs
    /// the same and the approximation ratio degenerates to feasible mass.
    pub degenerate: bool,
}

/// Renders flows as one character per edge (`+`, `0`, `-`), commodities
/// separated by `|`.
pub fn flow_string(cfg: &FlowConfig) -> String {
    let e = cfg.n_edges();
    let flows = cfg.flows();
    let k = flows.len() / e;
    let mut s = String::with_capacity(flows.len() + k);
    for c in 0..k {
        if c > 0 {
            s.push('|');
        }
        for &f in &flows[c * e..(c + 1) * e] {
            s.push(match f {
                1 => '+',
                0 => '0',
                -1 => '-',
                other => return format!("<flow {other} out of range>"),
            });
        }
    }
    s
}

/// Scans every loopless feasible configuration for the classical cost range.
pub fn cost_bounds(inst: &ProblemInstance, caps: &ResourceCaps) -> Result<CostBounds> {
    let basis = Basis::feasible(inst, true, caps)?;
    let mut c_min = f64::MAX;
    let mut c_max = f64::MIN;
    let mut argmin = 0usize;
    for idx in 0..basis.dim() {
        let cost = inst.classical_cost(&basis.config(idx));
        if cost < c_min {
            c_min = cost;
            argmin = idx;
        }
        c_max = c_max.max(cost);
    }
    Ok(CostBounds {
        c_min,
        c_max,
        argmin: flow_string(&basis.config(argmin)),
        degenerate: c_max - c_min <= 1e-12 * (1.0 + c_max.abs()),
    })
}

/// Shot classification and the best classical solution seen.
#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub shots: u64,
    pub feasible_shots: u64,
    /// Flow-conserving but carrying an isolated circulation loop.
    pub loopful_shots: u64,
    pub infeasible_shots: u64,
    /// Feasible samples only, most frequent first (ties by flow string).
    pub histogram: Vec<(String, u64)>,
    pub best_cost: Option<f64>,
    pub best_config: Option<String>,
}

/// Born-samples `shots` computational configurations and keeps the best
/// loopless feasible one. Loop-carrying and constraint-violating samples are
/// counted and discarded.
pub fn sample_and_postprocess(
    state: &StateVector,
    inst: &ProblemInstance,
    shots: u64,
    seed: u64,
) -> Result<SampleReport> {
    if shots == 0 {
        return Err(invalid_arg!("need at least one shot"));
    }
    let basis = state.basis();
    let mut cumulative = Vec::with_capacity(state.dim());
    let mut total = 0.0;
    for a in state.amps() {
        total += a.norm_sqr();
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::Numerical("cannot sample a zero state".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: HashMap<usize, u64> = HashMap::new();
    let mut feasible_shots = 0;
    let mut loopful_shots = 0;
    let mut infeasible_shots = 0;
    let mut best: Option<(f64, usize)> = None;
    for _ in 0..shots {
        let r = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= r).min(state.dim() - 1);
        let cfg = basis.config(idx);
        if !inst.is_feasible(&cfg) {
            infeasible_shots += 1;
            continue;
        }
        if inst.has_isolated_loop(&cfg)? {
            loopful_shots += 1;
            continue;
        }
        feasible_shots += 1;
        *counts.entry(idx).or_insert(0) += 1;
        let cost = inst.classical_cost(&cfg);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, idx));
        }
    }

    let mut histogram: Vec<(String, u64)> = counts
        .into_iter()
        .map(|(idx, n)| (flow_string(&basis.config(idx)), n))
        .collect();
    histogram.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(SampleReport {
        shots,
        feasible_shots,
        loopful_shots,
        infeasible_shots,
        histogram,
        best_cost: best.map(|(c, _)| c),
        best_config: best.map(|(_, idx)| flow_string(&basis.config(idx))),
    })
}

/// Everything one benchmarked run needs beyond the instance itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mixer: MixerKind,
    pub p: usize,
    pub prep: PrepStrategy,
    /// Soft-constraint weight added to the cost for x-mixer dynamics;
    /// ignored by the face mixers, whose moves preserve the constraints.
    pub penalty_delta: f64,
    pub shots: u64,
    pub sample_seed: u64,
    pub optimizer: OptimizerConfig,
    pub evolve: EvolveConfig,
    pub scan: ScanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mixer: MixerKind::Rqed,
            p: 1,
            prep: PrepStrategy::UniformFeasible,
            penalty_delta: 1.0,
            shots: 1024,
            sample_seed: 1,
            optimizer: OptimizerConfig::default(),
            evolve: EvolveConfig::default(),
            scan: ScanConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p > 64 {
            return Err(Error::Validation(format!(
                "round count {} is beyond anything this simulator should attempt",
                self.p
            )));
        }
        if !(self.penalty_delta >= 0.0 && self.penalty_delta.is_finite()) {
            return Err(Error::Validation(format!(
                "penalty weight must be non-negative, got {}",
                self.penalty_delta
            )));
        }
        if self.shots == 0 {
            return Err(Error::Validation("need at least one shot".into()));
        }
        self.optimizer.validate()?;
        self.evolve.validate()?;
        self.scan.validate()?;
        Ok(())
    }
}

/// Metrics of one optimized run. Identical instance and config reproduce
/// every field bit-for-bit except `wall_ms`.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub instance: String,
    pub mixer: &'static str,
    pub p: usize,
    pub prep: &'static str,
    pub basis_dim: usize,
    pub schedule: QaoaSchedule,
    /// Optimized projected cost.
    pub projected_cost: f64,
    pub feasible_mass: f64,
    pub approximation_ratio: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub degenerate_cost_range: bool,
    pub de_evals: u64,
    pub bfgs_evals: u64,
    pub stalled: bool,
    /// Evolution times used by the preparation stage, one per commodity.
    pub prep_t_evolved: Vec<f64>,
    pub prep_ipr: f64,
    pub samples: SampleReport,
    pub wall_ms: u64,
}

fn build_mixer(inst: &ProblemInstance, basis: &Basis, kind: MixerKind) -> Result<Operator> {
    match kind {
        MixerKind::X => operators::x_mixer(inst, basis),
        MixerKind::Qed => operators::qed_mixer(inst, basis, false),
        MixerKind::Rqed => operators::qed_mixer(inst, basis, true),
    }
}

fn simulation_basis(
    inst: &ProblemInstance,
    kind: MixerKind,
    caps: &ResourceCaps,
) -> Result<Arc<Basis>> {
    let basis = match kind {
        MixerKind::X => Basis::full(inst, caps)?,
        MixerKind::Qed => Basis::feasible(inst, false, caps)?,
        MixerKind::Rqed => Basis::feasible(inst, true, caps)?,
    };
    Ok(Arc::new(basis))
}

/// Runs the full pipeline on one instance: preparation, two-stage angle
/// search minimizing the projected cost, and sampling of the optimized
/// state.
///
/// On the loopless basis the objective is the projected cost itself. On
/// simulation spaces that can hold loop-carrying or infeasible states, any
/// mass pushed outside the loopless sector is charged at the worst feasible
/// cost; otherwise the minimizer trivially zeroes the projected cost by
/// abandoning the feasible space instead of routing anything well.
pub fn optimize(inst: &ProblemInstance, cfg: &RunConfig, caps: &ResourceCaps) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();

    let basis = simulation_basis(inst, cfg.mixer, caps)?;
    let h_cost = operators::cost_hamiltonian(inst, &basis)?;
    let h_dyn = if cfg.mixer == MixerKind::X {
        h_cost.add_diagonal(&operators::penalty_operator(inst, &basis, cfg.penalty_delta)?)?
    } else {
        h_cost.clone()
    };
    let h_mixer = build_mixer(inst, &basis, cfg.mixer)?;
    let projector = operators::feasible_projector(inst, &basis, true)?;
    let bounds = cost_bounds(inst, caps)?;

    let report = prep::prepare_initial(inst, &cfg.prep, cfg.mixer, &basis, &cfg.evolve, &cfg.scan, caps)?;
    let psi0 = report.state;

    let cost_ev = Evolver::new(h_dyn, cfg.evolve)?;
    let mixer_ev = Evolver::new(h_mixer, cfg.evolve)?;

    let (schedule, de_evals, bfgs_evals, stalled) = if cfg.p == 0 {
        (QaoaSchedule::new(vec![], vec![])?, 0, 0, false)
    } else {
        let mut box_bounds = vec![(0.0, GAMMA_MAX); cfg.p];
        box_bounds.extend(std::iter::repeat_n((0.0, BETA_MAX), cfg.p));
        let charge_leaks = basis.space() != SpaceKind::FeasibleLoopless;
        let mut objective = |params: &[f64]| -> Result<f64> {
            let schedule = QaoaSchedule::from_flat(params)?;
            let state = qaoa_state(&cost_ev, &mixer_ev, &schedule, &psi0)?;
            let eps = projected_cost(&state, &h_cost, &projector)?;
            if charge_leaks {
                let mass = feasible_mass(&state, &projector)?;
                Ok(eps + bounds.c_max * (1.0 - mass))
            } else {
                Ok(eps)
            }
        };
        let out = optim::minimize(&mut objective, &box_bounds, &cfg.optimizer)?;
        (QaoaSchedule::from_flat(&out.x)?, out.de_evals, out.bfgs_evals, out.stalled)
    };

    let final_state = qaoa_state(&cost_ev, &mixer_ev, &schedule, &psi0)?;
    let eps = projected_cost(&final_state, &h_cost, &projector)?;
    let mass = feasible_mass(&final_state, &projector)?;
    let ar = approximation_ratio(&final_state, &h_cost, &projector, bounds.c_min, bounds.c_max)?;
    let samples = sample_and_postprocess(&final_state, inst, cfg.shots, cfg.sample_seed)?;

    Ok(RunResult {
        instance: inst.label().to_string(),
        mixer: cfg.mixer.as_str(),
        p: cfg.p,
        prep: cfg.prep.as_str(),
        basis_dim: basis.dim(),
        schedule,
        projected_cost: eps,
        feasible_mass: mass,
        approximation_ratio: ar,
        c_min: bounds.c_min,
        c_max: bounds.c_max,
        degenerate_cost_range: bounds.degenerate,
        de_evals,
        bfgs_evals,
        stalled,
        prep_t_evolved: report.t_evolved,
        prep_ipr: report.ipr,
        samples,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Bootstrap settings for [`aar`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AarConfig {
    pub resamples: usize,
    /// Central confidence mass, e.g. 0.9 for a 90% interval.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for AarConfig {
    fn default() -> Self {
        AarConfig { resamples: 1000, confidence: 0.90, seed: 0 }
    }
}

impl AarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(Error::Validation("need at least one bootstrap resample".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Validation(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Mean approximation ratio over instances, with a percentile-bootstrap
/// confidence interval.
#[derive(Debug, Clone, Serialize)]
pub struct AarResult {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub ars: Vec<f64>,
}

fn mix_seed(base: u64, instance_seed: u64) -> u64 {
    // splitmix64 step keeps per-instance streams independent
    let mut z = base ^ instance_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Re-derives the per-run seeds from an instance seed so that every
/// instance gets an independent, reproducible stream.
pub fn instance_run_config(run: &RunConfig, instance_seed: u64) -> RunConfig {
    let mut cfg = run.clone();
    cfg.optimizer.seed = mix_seed(run.optimizer.seed, instance_seed);
    cfg.sample_seed = mix_seed(run.sample_seed, instance_seed.wrapping_add(1));
    if let PrepStrategy::MixerEvolved { t_override, seed } = run.prep {
        cfg.prep = PrepStrategy::MixerEvolved {
            t_override,
            seed: mix_seed(seed, instance_seed.wrapping_add(2)),
        };
    }
    cfg
}

/// Runs [`optimize`] on one random instance per seed and averages the
/// approximation ratios. Identical seeds give identical runs, so a repeated
/// seed contributes the same ratio each time.
pub fn aar(
    family: InstanceFamily,
    instance_seeds: &[u64],
    run: &RunConfig,
    cfg: &AarConfig,
    caps: &ResourceCaps,
) -> Result<AarResult> {
    cfg.validate()?;
    if instance_seeds.is_empty() {
        return Err(invalid_arg!("need at least one instance seed"));
    }
    let mut ars = Vec::with_capacity(instance_seeds.len());
    for &seed in instance_seeds {
        let inst = random_instance(family, seed)?;
        let result = optimize(&inst, &instance_run_config(run, seed), caps)?;
        ars.push(result.approximation_ratio);
    }
    let (mean, ci_low, ci_high) = bootstrap_mean_ci(&ars, cfg);
    Ok(AarResult { mean, ci_low, ci_high, n: ars.len(), ars })
}

/// Percentile bootstrap over the sample mean; nearest-rank quantiles.
pub fn bootstrap_mean_ci(values: &[f64], cfg: &AarConfig) -> (f64, f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut means = Vec::with_capacity(cfg.resamples);
    for _ in 0..cfg.resamples {
        let s: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
        means.push(s / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.confidence) / 2.0;
    let pick = |q: f64| means[((q * (cfg.resamples - 1) as f64).round() as usize).min(cfg.resamples - 1)];
    (mean, pick(tail), pick(1.0 - tail))
}
