//! Configuration bases and state vectors.
//!
//! Each commodity contributes one factor to a product basis. A factor is
//! either the full set of `3^E` flow assignments or an explicit enumerated
//! list (the feasible configurations, with or without isolated loops).
//! Basis indices are mixed-radix with commodity 0 most significant; within a
//! full factor, edge 0 is the most significant digit, so indices follow the
//! lexicographic order of flow tuples with `-1 < 0 < +1`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, FlowConfig, ProblemInstance};
use crate::invalid_arg;

/// Upper bounds on state-space materialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceCaps {
    /// Maximum amplitudes in a full product basis, and maximum assignments
    /// visited by exhaustive feasibility scans.
    pub full_amplitudes: usize,
    /// Maximum states in an enumerated feasible basis.
    pub feasible_states: usize,
}

impl Default for ResourceCaps {
    fn default() -> Self {
        ResourceCaps {
            full_amplitudes: 20_000_000,
            feasible_states: 1_000_000,
        }
    }
}

/// Which configurations a basis spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    /// Every flow assignment, feasible or not.
    Full,
    /// Flow-conserving configurations that are single simple paths.
    FeasibleLoopless,
    /// All flow-conserving configurations, isolated loops included.
    FeasibleWithLoops,
}

#[derive(Debug, Clone, PartialEq)]
enum Factor {
    Full { n_edges: usize, pows: Vec<usize> },
    Enumerated { configs: Vec<Vec<i8>> },
}

impl Factor {
    fn full(n_edges: usize) -> Self {
        let mut pows = vec![1usize; n_edges];
        for e in (0..n_edges.saturating_sub(1)).rev() {
            pows[e] = pows[e + 1] * 3;
        }
        Factor::Full { n_edges, pows }
    }

    fn dim(&self) -> usize {
        match self {
            Factor::Full { pows, n_edges } => {
                if *n_edges == 0 {
                    1
                } else {
                    pows[0] * 3
                }
            }
            Factor::Enumerated { configs } => configs.len(),
        }
    }

    fn write_config(&self, idx: usize, out: &mut [i8]) {
        match self {
            Factor::Full { n_edges, pows } => {
                for e in 0..*n_edges {
                    out[e] = ((idx / pows[e]) % 3) as i8 - 1;
                }
            }
            Factor::Enumerated { configs } => out.copy_from_slice(&configs[idx]),
        }
    }

    fn index_of(&self, flows: &[i8]) -> Option<usize> {
        match self {
            Factor::Full { pows, .. } => {
                let mut idx = 0usize;
                for (e, &f) in flows.iter().enumerate() {
                    if !(-1..=1).contains(&f) {
                        return None;
                    }
                    idx += (f + 1) as usize * pows[e];
                }
                Some(idx)
            }
            Factor::Enumerated { configs } => configs
                .binary_search_by(|c| c.as_slice().cmp(flows))
                .ok(),
        }
    }
}

/// A product basis over per-commodity configuration factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    space: SpaceKind,
    k: usize,
    n_edges: usize,
    factors: Vec<Factor>,
    strides: Vec<usize>,
    dim: usize,
    fingerprint: u64,
}

impl Basis {
    /// The full `3^(k*E)` product basis.
    pub fn full(inst: &ProblemInstance, caps: &ResourceCaps) -> Result<Basis> {
        let e = inst.network().n_edges();
        let dim = 3u128
            .checked_pow((inst.k() * e) as u32)
            .unwrap_or(u128::MAX);
        if dim > caps.full_amplitudes as u128 {
            return Err(Error::ResourceCap {
                what: "full basis amplitudes".into(),
                needed: dim,
                cap: caps.full_amplitudes as u128,
            });
        }
        let factors = (0..inst.k()).map(|_| Factor::full(e)).collect();
        Ok(Basis::assemble(SpaceKind::Full, inst.k(), e, factors))
    }

    /// The feasible basis: per commodity, the flow-conserving configurations,
    /// either paths only (`loopless = true`) or with isolated loops included.
    pub fn feasible(inst: &ProblemInstance, loopless: bool, caps: &ResourceCaps) -> Result<Basis> {
        let net = inst.network();
        let e = net.n_edges();
        let mut factors = Vec::with_capacity(inst.k());
        let mut dim: u128 = 1;
        for i in 0..inst.k() {
            let spec = inst.commodity(i);
            let mut configs = if loopless {
                graph::enumerate_path_flows(net, spec.source, spec.sink, caps.feasible_states)?
            } else {
                enumerate_feasible_with_loops(inst, i, caps)?
            };
            configs.sort_unstable();
            if configs.is_empty() {
                return Err(Error::NoPath(format!(
                    "commodity {i} has no feasible configuration"
                )));
            }
            dim = dim.saturating_mul(configs.len() as u128);
            if dim > caps.feasible_states as u128 {
                return Err(Error::ResourceCap {
                    what: "feasible basis states".into(),
                    needed: dim,
                    cap: caps.feasible_states as u128,
                });
            }
            factors.push(Factor::Enumerated { configs });
        }
        let space = if loopless {
            SpaceKind::FeasibleLoopless
        } else {
            SpaceKind::FeasibleWithLoops
        };
        Ok(Basis::assemble(space, inst.k(), e, factors))
    }

    fn assemble(space: SpaceKind, k: usize, n_edges: usize, factors: Vec<Factor>) -> Basis {
        let mut strides = vec![1usize; factors.len()];
        for i in (0..factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * factors[i + 1].dim();
        }
        let dim = strides[0] * factors[0].dim();
        let fingerprint = fingerprint(space, k, n_edges, &factors);
        Basis {
            space,
            k,
            n_edges,
            factors,
            strides,
            dim,
            fingerprint,
        }
    }

    pub fn space(&self) -> SpaceKind {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factor_dim(&self, commodity: usize) -> usize {
        self.factors[commodity].dim()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Splits a basis index into per-factor indices.
    pub fn split_index(&self, idx: usize, out: &mut [usize]) {
        for (i, stride) in self.strides.iter().enumerate() {
            out[i] = (idx / stride) % self.factors[i].dim();
        }
    }

    /// Recombines per-factor indices into a basis index.
    pub fn join_index(&self, factor_indices: &[usize]) -> usize {
        factor_indices
            .iter()
            .zip(&self.strides)
            .map(|(idx, stride)| idx * stride)
            .sum()
    }

    /// Writes the flow vector of one factor's configuration into `out`.
    pub fn write_factor_config(&self, commodity: usize, factor_idx: usize, out: &mut [i8]) {
        self.factors[commodity].write_config(factor_idx, out);
    }

    /// Index of a single commodity's flow vector within its factor.
    pub fn factor_index_of(&self, commodity: usize, flows: &[i8]) -> Option<usize> {
        self.factors[commodity].index_of(flows)
    }

    /// Decodes a basis index into a full flow configuration.
    pub fn config(&self, idx: usize) -> FlowConfig {
        assert!(idx < self.dim, "basis index out of range");
        let mut flows = vec![0i8; self.k * self.n_edges];
        let mut fidx = vec![0usize; self.k];
        self.split_index(idx, &mut fidx);
        for i in 0..self.k {
            self.factors[i]
                .write_config(fidx[i], &mut flows[i * self.n_edges..(i + 1) * self.n_edges]);
        }
        FlowConfig::from_flows(self.k, self.n_edges, flows).unwrap()
    }

    /// Basis index of a configuration, or `None` when it is not spanned.
    pub fn index_of(&self, cfg: &FlowConfig) -> Option<usize> {
        if cfg.k() != self.k || cfg.n_edges() != self.n_edges {
            return None;
        }
        let mut idx = 0usize;
        for i in 0..self.k {
            let fi = self.factors[i].index_of(cfg.commodity_flows(i))?;
            idx += fi * self.strides[i];
        }
        Some(idx)
    }

    /// The normalized equal-amplitude superposition.
    pub fn uniform_state(self: &Arc<Self>) -> StateVector {
        let amp = Complex64::new(1.0 / (self.dim as f64).sqrt(), 0.0);
        StateVector {
            basis: Arc::clone(self),
            amps: vec![amp; self.dim],
        }
    }

    /// The computational basis state for one configuration.
    pub fn basis_state(self: &Arc<Self>, cfg: &FlowConfig) -> Result<StateVector> {
        let idx = self
            .index_of(cfg)
            .ok_or_else(|| Error::NotInBasis("configuration not spanned by basis".into()))?;
        let mut amps = vec![Complex64::ZERO; self.dim];
        amps[idx] = Complex64::ONE;
        Ok(StateVector {
            basis: Arc::clone(self),
            amps,
        })
    }

    /// Maps a state on a sub-basis into this basis. Every configuration of
    /// the sub-basis must be spanned here.
    pub fn embed(self: &Arc<Self>, state: &StateVector) -> Result<StateVector> {
        let sub = state.basis();
        if sub.k != self.k || sub.n_edges != self.n_edges {
            return Err(Error::BasisMismatch(
                "embedding requires matching commodities and edges".into(),
            ));
        }
        let mut amps = vec![Complex64::ZERO; self.dim];
        for (idx, amp) in state.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let cfg = sub.config(idx);
            let target = self.index_of(&cfg).ok_or_else(|| {
                Error::NotInBasis("sub-basis configuration missing from target".into())
            })?;
            amps[target] = *amp;
        }
        Ok(StateVector {
            basis: Arc::clone(self),
            amps,
        })
    }
}

fn enumerate_feasible_with_loops(
    inst: &ProblemInstance,
    commodity: usize,
    caps: &ResourceCaps,
) -> Result<Vec<Vec<i8>>> {
    let net = inst.network();
    let e = net.n_edges();
    let scan = 3u128.checked_pow(e as u32).unwrap_or(u128::MAX);
    if scan > caps.full_amplitudes as u128 {
        return Err(Error::ResourceCap {
            what: "feasibility scan".into(),
            needed: scan,
            cap: caps.full_amplitudes as u128,
        });
    }
    let spec = inst.commodity(commodity);
    let single = crate::graph::ProblemInstance::new(
        net.clone(),
        crate::graph::ProblemKind::Sssp,
        vec![spec],
    )?;
    let mut out = Vec::new();
    let mut flows = vec![-1i8; e];
    loop {
        let cfg = FlowConfig::single(flows.clone());
        if single.is_feasible(&cfg) {
            if out.len() >= caps.feasible_states {
                return Err(Error::ResourceCap {
                    what: "feasible basis states".into(),
                    needed: out.len() as u128 + 1,
                    cap: caps.feasible_states as u128,
                });
            }
            out.push(flows.clone());
        }
        let mut pos = 0;
        loop {
            if pos == e {
                return Ok(out);
            }
            if flows[pos] < 1 {
                flows[pos] += 1;
                break;
            }
            flows[pos] = -1;
            pos += 1;
        }
    }
}

fn fingerprint(space: SpaceKind, k: usize, n_edges: usize, factors: &[Factor]) -> u64 {
    let mut h = Fnv::new();
    h.byte(match space {
        SpaceKind::Full => 0,
        SpaceKind::FeasibleLoopless => 1,
        SpaceKind::FeasibleWithLoops => 2,
    });
    h.word(k as u64);
    h.word(n_edges as u64);
    for f in factors {
        h.word(f.dim() as u64);
        if let Factor::Enumerated { configs } = f {
            for c in configs {
                for &b in c {
                    h.byte(b as u8);
                }
            }
        }
    }
    h.finish()
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn byte(&mut self, b: u8) {
        self.0 ^= b as u64;
        self.0 = self.0.wrapping_mul(0x100_0000_01b3);
    }

    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.byte(b);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// A complex amplitude vector over a fixed basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<Basis>,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(basis: Arc<Basis>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(invalid_arg!(
                "amplitude vector length {} does not match basis dimension {}",
                amps.len(),
                basis.dim()
            ));
        }
        Ok(StateVector { basis, amps })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        for a in &mut self.amps {
            *a /= n;
        }
    }

    /// `<self|other>`. Panics when the bases differ.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(
            self.basis.fingerprint(),
            other.basis.fingerprint(),
            "inner product across different bases"
        );
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Probability weight on each basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Tensor product across independent commodity registers. The factor
    /// states must partition the commodities of `basis` in order.
    pub fn tensor(basis: &Arc<Basis>, factor_states: &[Vec<Complex64>]) -> Result<StateVector> {
        if factor_states.len() != basis.n_factors() {
            return Err(invalid_arg!(
                "expected {} factor states, got {}",
                basis.n_factors(),
                factor_states.len()
            ));
        }
        for (i, fs) in factor_states.iter().enumerate() {
            if fs.len() != basis.factor_dim(i) {
                return Err(invalid_arg!(
                    "factor {i} state length {} does not match factor dimension {}",
                    fs.len(),
                    basis.factor_dim(i)
                ));
            }
        }
        let mut amps = vec![Complex64::ONE; basis.dim()];
        let mut fidx = vec![0usize; basis.n_factors()];
        for (idx, amp) in amps.iter_mut().enumerate() {
            basis.split_index(idx, &mut fidx);
            for (i, &fi) in fidx.iter().enumerate() {
                *amp *= factor_states[i][fi];
            }
        }
        Ok(StateVector {
            basis: Arc::clone(basis),
            amps,
        })
    }
}

/// One row of the state-space census.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub graph: String,
    pub commodities: usize,
    pub total_states: u128,
    pub feasible_states: u128,
    pub fraction: f64,
    pub feasible_with_loops: u128,
    pub fraction_with_loops: f64,
}

/// Counts the total, loopless-feasible, and loop-carrying-feasible states of
/// an instance. Feasible counts are per-commodity products; the loop-carrying
/// count scans all `3^E` assignments per commodity under the resource cap.
pub fn census(inst: &ProblemInstance, caps: &ResourceCaps) -> Result<CensusRow> {
    let net = inst.network();
    let e = net.n_edges() as u32;
    let total_states = 3u128
        .checked_pow(e * inst.k() as u32)
        .ok_or_else(|| Error::ResourceCap {
            what: "census total".into(),
            needed: u128::MAX,
            cap: u128::MAX,
        })?;
    let mut feasible_states: u128 = 1;
    let mut with_loops: u128 = 1;
    for i in 0..inst.k() {
        let spec = inst.commodity(i);
        let paths = graph::count_paths(net, spec.source, spec.sink);
        feasible_states = feasible_states.saturating_mul(paths as u128);
        let scanned = graph::count_feasible_with_loops(net, spec, caps.full_amplitudes)?;
        with_loops = with_loops.saturating_mul(scanned as u128);
    }
    Ok(CensusRow {
        graph: net.name().to_string(),
        commodities: inst.k(),
        total_states,
        feasible_states,
        fraction: feasible_states as f64 / total_states as f64,
        feasible_with_loops: with_loops,
        fraction_with_loops: with_loops as f64 / total_states as f64,
    })
}

/// Uniformly samples one simple-path flow vector for a commodity by full
/// enumeration. Heavier than the loop-erased walk but exactly uniform.
pub fn uniform_path_sample(
    inst: &ProblemInstance,
    commodity: usize,
    seed: u64,
    caps: &ResourceCaps,
) -> Result<Vec<i8>> {
    let spec = inst.commodity(commodity);
    let paths = graph::enumerate_path_flows(
        inst.network(),
        spec.source,
        spec.sink,
        caps.feasible_states,
    )?;
    if paths.is_empty() {
        return Err(Error::NoPath(format!("commodity {commodity} has no path")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = rng.random_range(0..paths.len());
    Ok(paths[pick].clone())
}
