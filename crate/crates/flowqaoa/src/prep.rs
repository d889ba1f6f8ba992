//! Initial-state preparation and the spreading diagnostics that choose how
//! long to run it.
//!
//! The preparation step evolves an easily-constructed seed path under the
//! mixing Hamiltonian until the wave function has spread over the feasible
//! space. Two witnesses track the spreading: the inverse participation ratio
//! over basis states, and the entropy of the per-edge flow distribution. The
//! scan stops at the first window where the entropy curve flattens out.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, EvolveConfig, Evolver};
use crate::error::{Error, Result};
use crate::graph::{self, FlowConfig, ProblemInstance};
use crate::hilbert::{Basis, ResourceCaps, SpaceKind, StateVector};
use crate::invalid_arg;
use crate::operators::{self, MixerKind};

/// How the QAOA initial state is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrepStrategy {
    /// Equal superposition of every loopless feasible configuration.
    UniformFeasible,
    /// Ground state of the mixer itself, from the eigensolver.
    MixerGroundState,
    /// A random seed path evolved under the mixer, by default until the
    /// flow-entropy scan reports saturation.
    MixerEvolved {
        #[serde(default)]
        t_override: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

impl PrepStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrepStrategy::UniformFeasible => "uniform_feasible",
            PrepStrategy::MixerGroundState => "mixer_ground_state",
            PrepStrategy::MixerEvolved { .. } => "mixer_evolved",
        }
    }
}

/// Inverse participation ratio of a unit-norm state.
pub fn ipr(state: &StateVector) -> f64 {
    state.amps().iter().map(|a| {
        let p = a.norm_sqr();
        p * p
    }).sum()
}

fn edge_weights(state: &StateVector, inst: &ProblemInstance, commodity: usize) -> Result<Vec<f64>> {
    let basis = state.basis();
    if basis.k() != inst.k() || basis.n_edges() != inst.network().n_edges() {
        return Err(Error::BasisMismatch(
            "state basis does not match the instance".into(),
        ));
    }
    if commodity >= inst.k() {
        return Err(invalid_arg!("commodity {commodity} out of range"));
    }
    let n_edges = basis.n_edges();
    let mut weights = vec![0.0; n_edges];
    for (idx, amp) in state.amps().iter().enumerate() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let cfg = basis.config(idx);
        let flows = cfg.commodity_flows(commodity);
        for (e, f) in flows.iter().enumerate() {
            weights[e] += p * (*f as f64) * (*f as f64);
        }
    }
    Ok(weights)
}

/// Probability of observing unit flow on each edge, for one commodity:
/// `p_e = <E_e^2> / sum_e <E_e^2>`.
pub fn edge_probabilities(
    state: &StateVector,
    inst: &ProblemInstance,
    commodity: usize,
) -> Result<Vec<f64>> {
    let mut weights = edge_weights(state, inst, commodity)?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(invalid_arg!(
            "edge probabilities are undefined: the state carries no flow"
        ));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// Same distribution estimated from `shots` computational-basis samples, the
/// way hardware would measure it.
pub fn sampled_edge_probabilities(
    state: &StateVector,
    inst: &ProblemInstance,
    commodity: usize,
    shots: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if shots == 0 {
        return Err(invalid_arg!("sampling needs at least one shot"));
    }
    let basis = state.basis();
    if basis.k() != inst.k() || basis.n_edges() != inst.network().n_edges() {
        return Err(Error::BasisMismatch(
            "state basis does not match the instance".into(),
        ));
    }
    let probs = state.probabilities();
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cumulative.push(acc);
    }
    let total_mass = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; basis.n_edges()];
    for _ in 0..shots {
        let r = rng.random::<f64>() * total_mass;
        let idx = cumulative.partition_point(|c| *c < r).min(probs.len() - 1);
        let cfg = basis.config(idx);
        for (e, f) in cfg.commodity_flows(commodity).iter().enumerate() {
            weights[e] += (*f as f64) * (*f as f64);
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(invalid_arg!(
            "edge probabilities are undefined: the sampled states carry no flow"
        ));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// Normalized flow entropy `S_f = -(1 / (|E| log 2)) sum_e p_e log p_e`,
/// with `0 log 0 = 0`.
pub fn flow_entropy(state: &StateVector, inst: &ProblemInstance, commodity: usize) -> Result<f64> {
    let p = edge_probabilities(state, inst, commodity)?;
    Ok(entropy_of(&p))
}

fn entropy_of(p: &[f64]) -> f64 {
    let raw: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    raw / (p.len() as f64 * std::f64::consts::LN_2)
}

/// Time grid and plateau detector for [`saturation_scan`].
///
/// The detector compares each sliding window of the entropy curve against the
/// scan's own tail: the flatness threshold is `max(theta, tail_factor *
/// tail_range)` where `tail_range` is the relative range of the last window.
/// Small systems never stop oscillating (revivals), so a fixed threshold that
/// works there would fire during the initial rise on larger ones; anchoring to
/// the tail makes the scan self-calibrating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub t_max: f64,
    pub dt: f64,
    /// Sliding-window width, in grid points.
    pub window: usize,
    /// Floor on the relative range below which a window counts as flat.
    pub theta: f64,
    /// Multiple of the tail window's relative range added on top of `theta`.
    pub tail_factor: f64,
    /// A flat window only counts if its peak reaches within this fraction of
    /// the tail's mean level; rules out flat shelves below the final plateau.
    pub level_guard: f64,
    /// Maximum relative climb of the tail mean over the window before it;
    /// beyond this the curve is still rising and the scan reports no plateau.
    pub drift_max: f64,
    /// Seed for the seed-path draw.
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            t_max: 20.0,
            dt: 0.25,
            window: 10,
            theta: 0.001,
            tail_factor: 2.0,
            level_guard: 0.01,
            drift_max: 0.05,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("scan dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::Validation(format!(
                "scan t_max must be at least dt, got {}",
                self.t_max
            )));
        }
        if self.window < 2 {
            return Err(Error::Validation(format!(
                "scan window must span at least 2 points, got {}",
                self.window
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Validation(format!(
                "scan theta must lie in (0, 1), got {}",
                self.theta
            )));
        }
        if !(self.tail_factor >= 0.0 && self.tail_factor.is_finite()) {
            return Err(Error::Validation(format!(
                "scan tail_factor must be non-negative, got {}",
                self.tail_factor
            )));
        }
        if !(self.level_guard >= 0.0 && self.level_guard < 1.0) {
            return Err(Error::Validation(format!(
                "scan level_guard must lie in [0, 1), got {}",
                self.level_guard
            )));
        }
        if !(self.drift_max > 0.0 && self.drift_max.is_finite()) {
            return Err(Error::Validation(format!(
                "scan drift_max must be positive, got {}",
                self.drift_max
            )));
        }
        Ok(())
    }
}

/// Result of one spreading scan for a single commodity.
#[derive(Debug, Clone, Serialize)]
pub struct SaturationScan {
    pub times: Vec<f64>,
    pub ipr: Vec<f64>,
    pub flow_entropy: Vec<f64>,
    /// First grid time whose forward window is flat at the curve's final
    /// level; `None` when the curve never settles inside the scanned range.
    pub t_sat: Option<f64>,
    pub detected: bool,
    pub ground_state_ipr: f64,
    pub uniform_ipr_floor: f64,
    /// Mean IPR over the saturation region (`t_sat` to the end of the grid);
    /// the instantaneous IPR keeps oscillating there, so the mean is the
    /// curve's settled level.
    pub saturated_ipr: Option<f64>,
}

fn relative_range(window: &[f64]) -> f64 {
    let max = window.iter().fold(f64::MIN, |m, &x| m.max(x));
    let min = window.iter().fold(f64::MAX, |m, &x| m.min(x));
    if max > 1e-12 { (max - min) / max } else { 0.0 }
}

/// Index of the first sliding window that is flat at the curve's final level,
/// or `None` when the curve never settles.
///
/// The last window is the reference: its relative range (times `tail_factor`,
/// floored at `theta`) sets the flatness threshold, and its mean sets the
/// level a window's peak must reach. A curve whose tail mean is still
/// climbing by more than `drift_max` over the preceding window has not
/// converged, and a window qualifies only strictly before the tail so that
/// flatness is confirmed by later points.
pub fn plateau_onset(values: &[f64], cfg: &ScanConfig) -> Option<usize> {
    let w = cfg.window;
    if values.len() < 2 * w {
        return None;
    }
    let tail = &values[values.len() - w..];
    let level = tail.iter().sum::<f64>() / w as f64;
    if level > 1e-12 {
        let prev = &values[values.len() - 2 * w..values.len() - w];
        let drift = (level - prev.iter().sum::<f64>() / w as f64) / level;
        if drift > cfg.drift_max {
            return None;
        }
    }
    let threshold = cfg.theta.max(cfg.tail_factor * relative_range(tail));
    let floor = (1.0 - cfg.level_guard) * level;
    for start in 0..values.len() - w {
        let win = &values[start..start + w];
        let peak = win.iter().fold(f64::MIN, |m, &x| m.max(x));
        if relative_range(win) <= threshold && peak >= floor {
            return Some(start);
        }
    }
    None
}

fn single_commodity(inst: &ProblemInstance, commodity: usize) -> Result<ProblemInstance> {
    if commodity >= inst.k() {
        return Err(invalid_arg!("commodity {commodity} out of range"));
    }
    ProblemInstance::new(inst.network().clone(), inst.kind(), vec![inst.commodity(commodity)])
}

/// Evolves a random seed path for `commodity` under its face mixer and
/// records the spreading witnesses on a uniform time grid.
///
/// `restricted` selects the loopless space and mixer (the restricted variant)
/// versus the with-loops space and the unrestricted mixer.
pub fn saturation_scan(
    inst: &ProblemInstance,
    commodity: usize,
    restricted: bool,
    cfg: &ScanConfig,
    evolve_cfg: &EvolveConfig,
    caps: &ResourceCaps,
) -> Result<SaturationScan> {
    cfg.validate()?;
    let sub = single_commodity(inst, commodity)?;
    let basis = Arc::new(Basis::feasible(&sub, restricted, caps)?);
    let mixer = operators::qed_mixer(&sub, &basis, restricted)?;
    let seed_cfg = graph::seed_path(inst, commodity, cfg.seed)?;
    let flows = seed_cfg.commodity_flows(commodity).to_vec();
    let mut state = basis.basis_state(&FlowConfig::single(flows))?;
    let evolver = Evolver::new(mixer.clone(), *evolve_cfg)?;

    let n_steps = (cfg.t_max / cfg.dt + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut iprs = Vec::with_capacity(n_steps + 1);
    let mut entropies = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        times.push(step as f64 * cfg.dt);
        iprs.push(ipr(&state));
        entropies.push(flow_entropy(&state, &sub, 0)?);
        if step < n_steps {
            state = evolver.evolve(&state, cfg.dt)?;
        }
    }

    let t_sat = plateau_onset(&entropies, cfg).map(|idx| times[idx]);
    let ground = dynamics::ground_state(&mixer, &basis, evolve_cfg)?;
    let saturated_ipr = t_sat.map(|t| {
        let idx = (t / cfg.dt).round() as usize;
        iprs[idx..].iter().sum::<f64>() / (iprs.len() - idx) as f64
    });
    Ok(SaturationScan {
        times,
        ipr: iprs,
        flow_entropy: entropies,
        t_sat,
        detected: t_sat.is_some(),
        ground_state_ipr: ipr(&ground.state),
        uniform_ipr_floor: 1.0 / basis.dim() as f64,
        saturated_ipr,
    })
}

/// A prepared initial state plus the bookkeeping experiments report.
#[derive(Debug, Clone)]
pub struct PrepReport {
    pub state: StateVector,
    /// Evolution time used per commodity; empty unless the strategy evolves.
    pub t_evolved: Vec<f64>,
    pub ipr: f64,
}

/// Builds the QAOA initial state on `basis`, which must be the simulation
/// basis of `mixer`.
pub fn prepare_initial(
    inst: &ProblemInstance,
    strategy: &PrepStrategy,
    mixer: MixerKind,
    basis: &Arc<Basis>,
    evolve_cfg: &EvolveConfig,
    scan_cfg: &ScanConfig,
    caps: &ResourceCaps,
) -> Result<PrepReport> {
    if basis.k() != inst.k() || basis.n_edges() != inst.network().n_edges() {
        return Err(Error::BasisMismatch(
            "basis does not match the instance".into(),
        ));
    }
    let state = match strategy {
        PrepStrategy::UniformFeasible => {
            if basis.space() == SpaceKind::FeasibleLoopless {
                basis.uniform_state()
            } else {
                let loopless = Arc::new(Basis::feasible(inst, true, caps)?);
                basis.embed(&loopless.uniform_state())?
            }
        }
        PrepStrategy::MixerGroundState => {
            let op = match mixer {
                MixerKind::X => operators::x_mixer(inst, basis)?,
                MixerKind::Qed => operators::qed_mixer(inst, basis, false)?,
                MixerKind::Rqed => operators::qed_mixer(inst, basis, true)?,
            };
            dynamics::ground_state(&op, basis, evolve_cfg)?.state
        }
        PrepStrategy::MixerEvolved { t_override, seed } => {
            return prepare_evolved(inst, mixer, basis, *t_override, *seed, evolve_cfg, scan_cfg, caps);
        }
    };
    let ipr_val = ipr(&state);
    Ok(PrepReport { state, t_evolved: Vec::new(), ipr: ipr_val })
}

#[allow(clippy::too_many_arguments)]
fn prepare_evolved(
    inst: &ProblemInstance,
    mixer: MixerKind,
    basis: &Arc<Basis>,
    t_override: Option<f64>,
    seed: u64,
    evolve_cfg: &EvolveConfig,
    scan_cfg: &ScanConfig,
    caps: &ResourceCaps,
) -> Result<PrepReport> {
    match mixer {
        MixerKind::X => {
            let t = t_override.ok_or_else(|| {
                Error::InvalidCombination(
                    "the saturation scan is defined for the face mixers; \
                     give mixer_evolved an explicit time for the x mixer"
                        .into(),
                )
            })?;
            let mut cfg = FlowConfig::zero(inst.k(), inst.network().n_edges());
            for c in 0..inst.k() {
                let path = graph::seed_path(inst, c, seed.wrapping_add(c as u64))?;
                for e in 0..inst.network().n_edges() {
                    cfg.set(c, e, path.get(c, e));
                }
            }
            let op = operators::x_mixer(inst, basis)?;
            let evolver = Evolver::new(op, *evolve_cfg)?;
            let state = evolver.evolve(&basis.basis_state(&cfg)?, t)?;
            let ipr_val = ipr(&state);
            Ok(PrepReport { state, t_evolved: vec![t; inst.k()], ipr: ipr_val })
        }
        MixerKind::Qed | MixerKind::Rqed => {
            let restricted = mixer == MixerKind::Rqed;
            let mut factor_states = Vec::with_capacity(inst.k());
            let mut t_evolved = Vec::with_capacity(inst.k());
            for c in 0..inst.k() {
                let commodity_seed = seed.wrapping_add(c as u64);
                let t = match t_override {
                    Some(t) => t,
                    None => {
                        let scan_cfg = ScanConfig { seed: commodity_seed, ..*scan_cfg };
                        let scan =
                            saturation_scan(inst, c, restricted, &scan_cfg, evolve_cfg, caps)?;
                        scan.t_sat.ok_or_else(|| {
                            Error::Numerical(format!(
                                "flow entropy never saturated within t_max = {} for commodity {c}; \
                                 extend the scan or override the time",
                                scan_cfg.t_max
                            ))
                        })?
                    }
                };
                let sub = single_commodity(inst, c)?;
                let sub_basis = Arc::new(Basis::feasible(&sub, restricted, caps)?);
                let sub_mixer = operators::qed_mixer(&sub, &sub_basis, restricted)?;
                let path = graph::seed_path(inst, c, commodity_seed)?;
                let flows = path.commodity_flows(c).to_vec();
                let start = sub_basis.basis_state(&FlowConfig::single(flows))?;
                let evolver = Evolver::new(sub_mixer, *evolve_cfg)?;
                let evolved = evolver.evolve(&start, t)?;
                factor_states.push(evolved.amps().to_vec());
                t_evolved.push(t);
            }
            let state = StateVector::tensor(basis, &factor_states)?;
            let ipr_val = ipr(&state);
            Ok(PrepReport { state, t_evolved, ipr: ipr_val })
        }
    }
}
