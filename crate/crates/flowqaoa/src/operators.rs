//! Cost, penalty, and mixer operators.
//!
//! Every operator here is real; Hamiltonians are real symmetric. Matrices are
//! stored in whichever of four shapes fits best: a plain diagonal, one sparse
//! matrix, a sum of per-commodity sparse factors (each acting on its own
//! register of the product basis), or a single 3x3 block repeated on every
//! commodity-edge site of the full basis.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CommoditySpec, FlowNetwork, ProblemInstance};
use crate::hilbert::{Basis, SpaceKind, StateVector};
use crate::invalid_arg;

/// Mixer families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    /// Transverse-field style mixer acting on every flow variable.
    X,
    /// Face-circulation mixer preserving flow conservation.
    Qed,
    /// Face-circulation mixer gated to act only where it maps paths to paths.
    Rqed,
}

impl MixerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MixerKind::X => "x",
            MixerKind::Qed => "qed",
            MixerKind::Rqed => "rqed",
        }
    }
}

/// Real compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets, summing duplicates.
    pub fn from_entries(n: usize, mut entries: Vec<(u32, u32, f64)>) -> Csr {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, _, _) in &merged {
            row_ptr[r as usize + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n,
            row_ptr,
            cols: merged.iter().map(|e| e.1).collect(),
            vals: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for row in 0..self.n {
            let mut acc = Complex64::ZERO;
            for ptr in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += x[self.cols[ptr] as usize] * self.vals[ptr];
            }
            y[row] += acc;
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.cols[lo..hi].binary_search(&(col as u32)) {
            Ok(pos) => self.vals[lo + pos],
            Err(_) => 0.0,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for row in 0..self.n {
            for ptr in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.cols[ptr] as usize;
                if (self.vals[ptr] - self.entry(col, row)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// True when the nonzero pattern connects all indices.
    pub fn pattern_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(row) = stack.pop() {
            for ptr in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.cols[ptr] as usize;
                if !seen[col] {
                    seen[col] = true;
                    count += 1;
                    stack.push(col);
                }
            }
        }
        count == self.n
    }
}

/// Storage shape of an operator.
#[derive(Debug, Clone)]
pub enum Repr {
    Diagonal(Vec<f64>),
    Sparse(Csr),
    /// `sum_i I (x) ... (x) A_i (x) ... (x) I` over commodity registers.
    FactorSum { factors: Vec<Csr>, dims: Vec<usize> },
    /// The same 3x3 block summed over every commodity-edge site.
    SiteSum { block: [[f64; 3]; 3], n_sites: usize },
}

/// A real linear operator tied to one basis.
#[derive(Debug, Clone)]
pub struct Operator {
    kind: &'static str,
    basis_fp: u64,
    dim: usize,
    hermitian: bool,
    repr: Repr,
}

impl Operator {
    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn basis_fingerprint(&self) -> u64 {
        self.basis_fp
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.repr, Repr::Diagonal(_))
    }

    /// The diagonal entries, when the operator is stored diagonally.
    pub fn diagonal(&self) -> Result<&[f64]> {
        match &self.repr {
            Repr::Diagonal(d) => Ok(d),
            _ => Err(Error::NotDiagonal),
        }
    }

    /// `y += A x` without allocating.
    pub fn accumulate(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        match &self.repr {
            Repr::Diagonal(d) => {
                for ((yv, xv), dv) in y.iter_mut().zip(x).zip(d) {
                    *yv += xv * *dv;
                }
            }
            Repr::Sparse(a) => a.matvec(x, y),
            Repr::FactorSum { factors, dims } => {
                for (i, a) in factors.iter().enumerate() {
                    let d_left: usize = dims[..i].iter().product();
                    let d_right: usize = dims[i + 1..].iter().product();
                    let di = dims[i];
                    for l in 0..d_left {
                        let base_l = l * di * d_right;
                        for row in 0..di {
                            let y_base = base_l + row * d_right;
                            for ptr in a.row_ptr[row]..a.row_ptr[row + 1] {
                                let col = a.cols[ptr] as usize;
                                let v = a.vals[ptr];
                                let x_base = base_l + col * d_right;
                                for r in 0..d_right {
                                    y[y_base + r] += x[x_base + r] * v;
                                }
                            }
                        }
                    }
                }
            }
            Repr::SiteSum { block, n_sites } => {
                let mut stride = 1usize;
                for _ in 0..*n_sites {
                    let group = stride * 3;
                    for outer in 0..self.dim / 3 {
                        let base = (outer / stride) * group + (outer % stride);
                        let xs = [x[base], x[base + stride], x[base + 2 * stride]];
                        for (d, row) in block.iter().enumerate() {
                            let mut acc = Complex64::ZERO;
                            for (xv, b) in xs.iter().zip(row) {
                                acc += *xv * *b;
                            }
                            y[base + d * stride] += acc;
                        }
                    }
                    stride *= 3;
                }
            }
        }
    }

    /// `A |psi>`.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.check_state(state)?;
        let mut out = StateVector::new(
            Arc::clone(state.basis()),
            vec![Complex64::ZERO; self.dim],
        )?;
        self.accumulate(state.amps(), out.amps_mut());
        Ok(out)
    }

    /// `<psi| A |psi>` for Hermitian operators.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        if !self.hermitian {
            return Err(Error::NotHermitian);
        }
        self.check_state(state)?;
        if let Repr::Diagonal(d) = &self.repr {
            return Ok(d
                .iter()
                .zip(state.amps())
                .map(|(dv, a)| dv * a.norm_sqr())
                .sum());
        }
        let applied = self.apply(state)?;
        let val: Complex64 = state.inner(&applied);
        let scale = 1.0 + val.re.abs();
        assert!(
            val.im.abs() <= 1e-9 * scale,
            "expectation of a Hermitian operator came out complex: {val}"
        );
        Ok(val.re)
    }

    /// Adds two diagonal operators over the same basis.
    pub fn add_diagonal(&self, other: &Operator) -> Result<Operator> {
        if self.basis_fp != other.basis_fp {
            return Err(Error::BasisMismatch(
                "adding operators over different bases".into(),
            ));
        }
        let (Repr::Diagonal(a), Repr::Diagonal(b)) = (&self.repr, &other.repr) else {
            return Err(Error::NotDiagonal);
        };
        Ok(Operator {
            kind: "sum",
            basis_fp: self.basis_fp,
            dim: self.dim,
            hermitian: true,
            repr: Repr::Diagonal(a.iter().zip(b).map(|(x, y)| x + y).collect()),
        })
    }

    /// Dense materialization, for oracles and small-system tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim;
        let mut out = nalgebra::DMatrix::zeros(n, n);
        let mut x = vec![Complex64::ZERO; n];
        let mut y = vec![Complex64::ZERO; n];
        for col in 0..n {
            x[col] = Complex64::ONE;
            y.fill(Complex64::ZERO);
            self.accumulate(&x, &mut y);
            for row in 0..n {
                out[(row, col)] = y[row].re;
            }
            x[col] = Complex64::ZERO;
        }
        out
    }

    /// True when the off-diagonal sparsity pattern connects every basis state
    /// (for factored shapes, every factor must be connected).
    pub fn is_connected(&self) -> bool {
        match &self.repr {
            Repr::Diagonal(_) => self.dim <= 1,
            Repr::Sparse(a) => a.pattern_connected(),
            Repr::FactorSum { factors, .. } => factors.iter().all(|a| a.pattern_connected()),
            Repr::SiteSum { block, .. } => {
                let mut ok = true;
                for d in 0..3 {
                    for dp in 0..3 {
                        if d != dp && block[d][dp] == 0.0 {
                            ok = false;
                        }
                    }
                }
                ok
            }
        }
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.basis().fingerprint() != self.basis_fp {
            return Err(Error::BasisMismatch(format!(
                "operator `{}` applied to a state over a different basis",
                self.kind
            )));
        }
        Ok(())
    }

    fn diagonal_op(kind: &'static str, basis: &Basis, diag: Vec<f64>) -> Operator {
        Operator {
            kind,
            basis_fp: basis.fingerprint(),
            dim: basis.dim(),
            hermitian: true,
            repr: Repr::Diagonal(diag),
        }
    }
}

/// Builds a diagonal operator by evaluating `f` on every basis configuration.
fn diagonal_over_basis(
    kind: &'static str,
    basis: &Basis,
    mut f: impl FnMut(&[i8]) -> f64,
) -> Operator {
    let k = basis.k();
    let e = basis.n_edges();
    let mut flows = vec![0i8; k * e];
    let mut fidx = vec![0usize; basis.n_factors()];
    let mut diag = Vec::with_capacity(basis.dim());
    for idx in 0..basis.dim() {
        basis.split_index(idx, &mut fidx);
        for (i, &fi) in fidx.iter().enumerate() {
            basis.write_factor_config(i, fi, &mut flows[i * e..(i + 1) * e]);
        }
        diag.push(f(&flows));
    }
    Operator::diagonal_op(kind, basis, diag)
}

/// The classical cost of each configuration, as a diagonal operator.
pub fn cost_hamiltonian(inst: &ProblemInstance, basis: &Basis) -> Result<Operator> {
    check_shapes(inst, basis)?;
    Ok(diagonal_over_basis("cost", basis, |flows| {
        inst.classical_cost_flat(flows)
    }))
}

/// Quadratic flow-conservation penalty `delta * sum_(i,u) (div - target)^2`.
pub fn penalty_operator(inst: &ProblemInstance, basis: &Basis, delta: f64) -> Result<Operator> {
    check_shapes(inst, basis)?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(invalid_arg!("penalty strength must be finite and >= 0"));
    }
    let net = inst.network();
    let e = net.n_edges();
    let nv = net.n_vertices();
    let edges = net.edges().to_vec();
    let k = inst.k();
    let mut div = vec![0i32; nv];
    Ok(diagonal_over_basis("penalty", basis, move |flows| {
        let mut total = 0.0;
        for i in 0..k {
            div.fill(0);
            let fl = &flows[i * e..(i + 1) * e];
            for (edge, &(u, v)) in edges.iter().enumerate() {
                div[u] += fl[edge] as i32;
                div[v] -= fl[edge] as i32;
            }
            for u in 0..nv {
                let miss = div[u] - inst.divergence_target(i, u);
                total += (miss * miss) as f64;
            }
        }
        delta * total
    }))
}

/// Total signed flow on one edge (one commodity, or summed over all).
pub fn flow_operator(
    inst: &ProblemInstance,
    basis: &Basis,
    edge: usize,
    commodity: Option<usize>,
) -> Result<Operator> {
    check_shapes(inst, basis)?;
    let e = inst.network().n_edges();
    if edge >= e {
        return Err(invalid_arg!("edge index {edge} out of range"));
    }
    if let Some(i) = commodity {
        if i >= inst.k() {
            return Err(invalid_arg!("commodity index {i} out of range"));
        }
    }
    let k = inst.k();
    Ok(diagonal_over_basis("flow", basis, move |flows| {
        match commodity {
            Some(i) => flows[i * e + edge] as f64,
            None => (0..k).map(|i| flows[i * e + edge] as f64).sum(),
        }
    }))
}

/// Indicator of feasibility; with `loopless` set, of loop-free feasibility.
pub fn feasible_projector(
    inst: &ProblemInstance,
    basis: &Basis,
    loopless: bool,
) -> Result<Operator> {
    check_shapes(inst, basis)?;
    let e = inst.network().n_edges();
    let k = inst.k();
    Ok(diagonal_over_basis("projector", basis, move |flows| {
        let cfg = crate::graph::FlowConfig::from_flows(k, e, flows.to_vec()).unwrap();
        if !inst.is_feasible(&cfg) {
            return 0.0;
        }
        if loopless && inst.has_isolated_loop(&cfg).unwrap() {
            return 0.0;
        }
        1.0
    }))
}

/// Divergence of one commodity at one vertex, as a diagonal operator.
pub fn gauss_operator(
    inst: &ProblemInstance,
    basis: &Basis,
    commodity: usize,
    vertex: usize,
) -> Result<Operator> {
    check_shapes(inst, basis)?;
    if commodity >= inst.k() || vertex >= inst.network().n_vertices() {
        return Err(invalid_arg!("gauss operator index out of range"));
    }
    let e = inst.network().n_edges();
    let incidences: Vec<(usize, i8)> = inst
        .network()
        .adjacency(vertex)
        .iter()
        .map(|inc| (inc.edge, inc.sign))
        .collect();
    Ok(diagonal_over_basis("gauss", basis, move |flows| {
        incidences
            .iter()
            .map(|&(edge, sign)| sign as f64 * flows[commodity * e + edge] as f64)
            .sum()
    }))
}

/// The per-site mixer `-sum_(i,e) J` on the full basis, where `J` is the 3x3
/// all-ones block coupling the flow levels of one edge.
pub fn x_mixer(inst: &ProblemInstance, basis: &Basis) -> Result<Operator> {
    check_shapes(inst, basis)?;
    if basis.space() != SpaceKind::Full {
        return Err(Error::InvalidCombination(
            "the per-edge mixer needs the full configuration basis".into(),
        ));
    }
    Ok(Operator {
        kind: "x_mixer",
        basis_fp: basis.fingerprint(),
        dim: basis.dim(),
        hermitian: true,
        repr: Repr::SiteSum {
            block: [[-1.0; 3]; 3],
            n_sites: inst.k() * inst.network().n_edges(),
        },
    })
}

/// Per-face external-line bookkeeping used by the restriction predicate.
struct FaceContext {
    /// For each boundary vertex: the incident edges not on the face
    /// boundary, with the sign that converts a canonical flow value into
    /// flow INTO the vertex.
    external: Vec<Vec<(usize, i32)>>,
    /// Source/sink contribution per boundary vertex.
    charge: Vec<i32>,
    /// Circulation of the face: (edge, increment).
    circulation: Vec<(usize, i32)>,
}

impl FaceContext {
    fn build(net: &FlowNetwork, face_idx: usize, spec: CommoditySpec) -> FaceContext {
        let face = &net.faces()[face_idx];
        let boundary: std::collections::HashSet<usize> =
            face.edges.iter().map(|&(e, _)| e).collect();
        let mut external = Vec::with_capacity(face.vertices.len());
        let mut charge = Vec::with_capacity(face.vertices.len());
        for &v in &face.vertices {
            let ext: Vec<(usize, i32)> = net
                .adjacency(v)
                .iter()
                .filter(|inc| !boundary.contains(&inc.edge))
                .map(|inc| (inc.edge, -(inc.sign as i32)))
                .collect();
            external.push(ext);
            let d = spec.demand as i32;
            charge.push(if v == spec.source {
                d
            } else if v == spec.sink {
                -d
            } else {
                0
            });
        }
        let circulation = face
            .edges
            .iter()
            .map(|&(e, s)| (e, s as i32))
            .collect();
        FaceContext {
            external,
            charge,
            circulation,
        }
    }

    /// The restriction value: the sum of squared net external line counts
    /// around the face boundary. A value of 2 means the configuration meets
    /// the face as a single continuous run.
    fn restriction_value(&self, flows: &[i8]) -> i32 {
        let mut total = 0;
        for (ext, &q) in self.external.iter().zip(&self.charge) {
            let mut a = q;
            for &(edge, into_sign) in ext {
                a += into_sign * flows[edge] as i32;
            }
            total += a * a;
        }
        total
    }
}

/// The restriction value of one commodity's flows at one face: the sum over
/// boundary vertices of the squared net external flow (counting the source
/// and sink as external lines). Equals 2 exactly when the flow meets the
/// face as one continuous run.
pub fn restriction_count(
    net: &FlowNetwork,
    face_idx: usize,
    spec: CommoditySpec,
    flows: &[i8],
) -> i32 {
    FaceContext::build(net, face_idx, spec).restriction_value(flows)
}

/// The gate polynomial on restriction values: equal to 1 at `v = 2` and 0 at
/// every other even value in `0..=2*ell`.
pub fn decision_polynomial(ell: usize, v: f64) -> f64 {
    let mut out = 1.0;
    for j in 0..=ell {
        if j == 1 {
            continue;
        }
        out *= (2.0 * j as f64 - v) / (2.0 * j as f64 - 2.0);
    }
    out
}

/// Builds one commodity's face-circulation mixer factor over its basis
/// factor: `-sum_f (U_f + U_f^dagger)` with moves annihilated when they leave
/// the flow range. With `restricted` set, moves are also gated on the
/// restriction value of the source configuration being 2.
///
/// A move whose target is feasible but missing from the factor is dropped
/// when `restricted` (the operator is taken within the spanned subspace) and
/// is an error otherwise, because the unrestricted mixer does not stay inside
/// such a basis.
fn qed_factor(
    inst: &ProblemInstance,
    basis: &Basis,
    commodity: usize,
    restricted: bool,
) -> Result<Csr> {
    let net = inst.network();
    let spec = inst.commodity(commodity);
    let e = net.n_edges();
    let dim = basis.factor_dim(commodity);
    let contexts: Vec<FaceContext> = (0..net.faces().len())
        .map(|f| FaceContext::build(net, f, spec))
        .collect();
    let mut entries: Vec<(u32, u32, f64)> = Vec::new();
    let mut flows = vec![0i8; e];
    let mut target = vec![0i8; e];
    for src in 0..dim {
        basis.write_factor_config(commodity, src, &mut flows);
        for ctx in &contexts {
            if restricted && ctx.restriction_value(&flows) != 2 {
                continue;
            }
            'dir: for dir in [1i32, -1] {
                target.copy_from_slice(&flows);
                for &(edge, inc) in &ctx.circulation {
                    let nv = flows[edge] as i32 + dir * inc;
                    if nv.abs() > spec.demand as i32 {
                        continue 'dir;
                    }
                    target[edge] = nv as i8;
                }
                match basis.factor_index_of(commodity, &target) {
                    Some(dst) => entries.push((dst as u32, src as u32, -1.0)),
                    None if restricted => {}
                    None => {
                        return Err(Error::InvalidCombination(
                            "face mixer leaves the basis; restrict it or widen the space"
                                .into(),
                        ))
                    }
                }
            }
        }
    }
    Ok(Csr::from_entries(dim, entries))
}

/// The face-circulation mixer `-sum_(i,f) (U + U^dagger)`, optionally gated
/// by the single-run restriction.
pub fn qed_mixer(inst: &ProblemInstance, basis: &Basis, restricted: bool) -> Result<Operator> {
    check_shapes(inst, basis)?;
    if inst.network().faces().is_empty() {
        return Err(Error::InvalidCombination(
            "face mixer needs at least one face".into(),
        ));
    }
    let kind = if restricted { "rqed_mixer" } else { "qed_mixer" };
    let mut factors = Vec::with_capacity(inst.k());
    for i in 0..inst.k() {
        factors.push(qed_factor(inst, basis, i, restricted)?);
    }
    let repr = if factors.len() == 1 {
        Repr::Sparse(factors.pop().unwrap())
    } else {
        let dims = (0..basis.n_factors()).map(|i| basis.factor_dim(i)).collect();
        Repr::FactorSum { factors, dims }
    };
    Ok(Operator {
        kind,
        basis_fp: basis.fingerprint(),
        dim: basis.dim(),
        hermitian: true,
        repr,
    })
}

/// A single face-circulation step `U_f` for one commodity (not Hermitian).
pub fn wilson_loop(
    inst: &ProblemInstance,
    basis: &Basis,
    face_idx: usize,
    commodity: usize,
    restricted: bool,
) -> Result<Operator> {
    check_shapes(inst, basis)?;
    if face_idx >= inst.network().faces().len() || commodity >= inst.k() {
        return Err(invalid_arg!("face or commodity index out of range"));
    }
    let net = inst.network();
    let spec = inst.commodity(commodity);
    let e = net.n_edges();
    let ctx = FaceContext::build(net, face_idx, spec);
    let fdim = basis.factor_dim(commodity);
    let mut entries = Vec::new();
    let mut flows = vec![0i8; e];
    let mut target = vec![0i8; e];
    'src: for src in 0..fdim {
        basis.write_factor_config(commodity, src, &mut flows);
        if restricted && ctx.restriction_value(&flows) != 2 {
            continue;
        }
        target.copy_from_slice(&flows);
        for &(edge, inc) in &ctx.circulation {
            let nv = flows[edge] as i32 + inc;
            if nv.abs() > spec.demand as i32 {
                continue 'src;
            }
            target[edge] = nv as i8;
        }
        match basis.factor_index_of(commodity, &target) {
            Some(dst) => entries.push((dst as u32, src as u32, 1.0)),
            None if restricted => {}
            None => {
                return Err(Error::InvalidCombination(
                    "face step leaves the basis; restrict it or widen the space".into(),
                ))
            }
        }
    }
    let factor = Csr::from_entries(fdim, entries);
    let repr = if inst.k() == 1 {
        Repr::Sparse(factor)
    } else {
        // Lift the single-commodity step into the product basis by keeping
        // the other registers untouched.
        let dims: Vec<usize> = (0..basis.n_factors()).map(|i| basis.factor_dim(i)).collect();
        let stride_before: usize = dims[..commodity].iter().product();
        let stride_after: usize = dims[commodity + 1..].iter().product();
        let di = dims[commodity];
        let mut entries = Vec::new();
        for l in 0..stride_before {
            for row in 0..di {
                for p in factor.row_ptr[row]..factor.row_ptr[row + 1] {
                    let col = factor.cols[p] as usize;
                    for r in 0..stride_after {
                        let big_dst = (l * di + row) * stride_after + r;
                        let big_src = (l * di + col) * stride_after + r;
                        entries.push((big_dst as u32, big_src as u32, factor.vals[p]));
                    }
                }
            }
        }
        Repr::Sparse(Csr::from_entries(basis.dim(), entries))
    };
    Ok(Operator {
        kind: "wilson_loop",
        basis_fp: basis.fingerprint(),
        dim: basis.dim(),
        hermitian: false,
        repr,
    })
}

/// Diagnostics for the restricted mixer on a subspace basis: how many gated
/// moves exist in total and how many of them leave the basis (and are
/// therefore dropped from the built operator).
pub fn qed_leak_report(
    inst: &ProblemInstance,
    basis: &Basis,
    restricted: bool,
) -> Result<(u64, u64)> {
    check_shapes(inst, basis)?;
    let net = inst.network();
    let e = net.n_edges();
    let mut total = 0u64;
    let mut leaked = 0u64;
    let mut flows = vec![0i8; e];
    let mut target = vec![0i8; e];
    for i in 0..inst.k() {
        let spec = inst.commodity(i);
        let contexts: Vec<FaceContext> = (0..net.faces().len())
            .map(|f| FaceContext::build(net, f, spec))
            .collect();
        for src in 0..basis.factor_dim(i) {
            basis.write_factor_config(i, src, &mut flows);
            for ctx in &contexts {
                if restricted && ctx.restriction_value(&flows) != 2 {
                    continue;
                }
                'dir: for dir in [1i32, -1] {
                    target.copy_from_slice(&flows);
                    for &(edge, inc) in &ctx.circulation {
                        let nv = flows[edge] as i32 + dir * inc;
                        if nv.abs() > spec.demand as i32 {
                            continue 'dir;
                        }
                        target[edge] = nv as i8;
                    }
                    total += 1;
                    if basis.factor_index_of(i, &target).is_none() {
                        leaked += 1;
                    }
                }
            }
        }
    }
    Ok((total, leaked))
}

/// Counts sparse entries that connect configurations with different
/// divergence profiles. Zero means the operator preserves every
/// flow-conservation sector exactly.
pub fn gauss_violations(inst: &ProblemInstance, basis: &Basis, op: &Operator) -> Result<u64> {
    check_shapes(inst, basis)?;
    if op.basis_fingerprint() != basis.fingerprint() {
        return Err(Error::BasisMismatch(
            "operator was built over a different basis".into(),
        ));
    }
    let net = inst.network();
    let e = net.n_edges();
    let nv = net.n_vertices();
    let div_profile = |commodity: usize, fidx: usize, buf: &mut Vec<i8>, out: &mut Vec<i32>| {
        basis.write_factor_config(commodity, fidx, buf);
        out.fill(0);
        for (edge, &(u, v)) in net.edges().iter().enumerate() {
            out[u] += buf[edge] as i32;
            out[v] -= buf[edge] as i32;
        }
    };
    let factor_violations = |commodity: usize, a: &Csr| -> u64 {
        let mut buf = vec![0i8; e];
        let mut div_row = vec![0i32; nv];
        let mut div_col = vec![0i32; nv];
        let mut bad = 0;
        for row in 0..a.n {
            div_profile(commodity, row, &mut buf, &mut div_row);
            for ptr in a.row_ptr[row]..a.row_ptr[row + 1] {
                if a.vals[ptr] == 0.0 {
                    continue;
                }
                div_profile(commodity, a.cols[ptr] as usize, &mut buf, &mut div_col);
                if div_row != div_col {
                    bad += 1;
                }
            }
        }
        bad
    };
    match op.repr() {
        Repr::Diagonal(_) => Ok(0),
        Repr::Sparse(a) => {
            if inst.k() == 1 {
                Ok(factor_violations(0, a))
            } else {
                // Generic sparse over a product basis: compare full profiles.
                let mut bad = 0;
                let mut fidx = vec![0usize; basis.n_factors()];
                let mut buf = vec![0i8; e];
                let mut profile = |idx: usize, out: &mut Vec<i32>| {
                    basis.split_index(idx, &mut fidx);
                    out.fill(0);
                    for (i, &fi) in fidx.iter().enumerate() {
                        basis.write_factor_config(i, fi, &mut buf);
                        for (edge, &(u, v)) in net.edges().iter().enumerate() {
                            out[i * nv + u] += buf[edge] as i32;
                            out[i * nv + v] -= buf[edge] as i32;
                        }
                    }
                };
                let mut pr = vec![0i32; inst.k() * nv];
                let mut pc = vec![0i32; inst.k() * nv];
                for row in 0..a.n {
                    profile(row, &mut pr);
                    for ptr in a.row_ptr[row]..a.row_ptr[row + 1] {
                        if a.vals[ptr] == 0.0 {
                            continue;
                        }
                        profile(a.cols[ptr] as usize, &mut pc);
                        if pr != pc {
                            bad += 1;
                        }
                    }
                }
                Ok(bad)
            }
        }
        Repr::FactorSum { factors, .. } => Ok(factors
            .iter()
            .enumerate()
            .map(|(i, a)| factor_violations(i, a))
            .sum()),
        Repr::SiteSum { .. } => {
            // The per-site mixer moves single flow variables and always
            // breaks conservation somewhere; count one violation per
            // off-diagonal block to signal it.
            Ok(op.dim() as u64)
        }
    }
}

fn check_shapes(inst: &ProblemInstance, basis: &Basis) -> Result<()> {
    if basis.k() != inst.k() || basis.n_edges() != inst.network().n_edges() {
        return Err(Error::BasisMismatch(
            "basis shape does not match the instance".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CommoditySpec, EdgeSpec, FlowConfig, ProblemKind};
    use crate::hilbert::ResourceCaps;

    fn triangle_inst(n: usize) -> ProblemInstance {
        let net = FlowNetwork::triangle_chain(n).unwrap();
        let (s, t) = net.terminals().unwrap();
        ProblemInstance::new(net, ProblemKind::Sssp, vec![CommoditySpec::unit(s, t)]).unwrap()
    }

    fn caps() -> ResourceCaps {
        ResourceCaps::default()
    }

    #[test]
    fn cost_diagonal_on_path_basis() {
        let net = FlowNetwork::triangle_chain(2)
            .unwrap()
            .with_weights(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
            .unwrap();
        let (s, t) = net.terminals().unwrap();
        let inst =
            ProblemInstance::new(net, ProblemKind::Sssp, vec![CommoditySpec::unit(s, t)])
                .unwrap();
        let basis = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        let cost = cost_hamiltonian(&inst, &basis).unwrap();
        // Sorted path order: hub detour through r3, hub route, direct arc.
        let want = [0.1 + 0.3 + 0.6, 0.1 + 0.2, 0.5];
        for (got, want) in cost.diagonal().unwrap().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn edp_cost_counts_congestion() {
        let net = FlowNetwork::new(
            "one_edge",
            3,
            vec![EdgeSpec::unit(0, 1), EdgeSpec::unit(1, 2)],
            vec![],
            None,
        )
        .unwrap();
        let inst = ProblemInstance::new(
            net,
            ProblemKind::Edp,
            vec![CommoditySpec::unit(0, 1), CommoditySpec::unit(0, 1)],
        )
        .unwrap();
        let basis = Arc::new(Basis::full(&inst, &caps()).unwrap());
        let cost = cost_hamiltonian(&inst, &basis).unwrap();
        let diag = cost.diagonal().unwrap();
        let mut cfg = FlowConfig::zero(2, 2);
        cfg.set(0, 0, 1);
        cfg.set(1, 0, 1);
        assert_eq!(diag[basis.index_of(&cfg).unwrap()], 1.0);
        cfg.set(1, 0, -1);
        assert_eq!(diag[basis.index_of(&cfg).unwrap()], 0.0);
    }

    #[test]
    fn penalty_vanishes_exactly_on_feasible_states() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::full(&inst, &caps()).unwrap());
        let pen = penalty_operator(&inst, &basis, 1.0).unwrap();
        let diag = pen.diagonal().unwrap();
        let zero_idx = basis.index_of(&FlowConfig::zero(1, 6)).unwrap();
        assert_eq!(diag[zero_idx], 2.0);
        let mut feasible = 0;
        for idx in 0..basis.dim() {
            let is_zero = diag[idx] == 0.0;
            assert_eq!(is_zero, inst.is_feasible(&basis.config(idx)));
            if is_zero {
                feasible += 1;
            }
        }
        assert_eq!(feasible, 5);

        let doubled = penalty_operator(&inst, &basis, 2.0).unwrap();
        assert_eq!(doubled.diagonal().unwrap()[zero_idx], 4.0);
    }

    #[test]
    fn projector_sums_match_census() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::full(&inst, &caps()).unwrap());
        let all = feasible_projector(&inst, &basis, false).unwrap();
        let loopless = feasible_projector(&inst, &basis, true).unwrap();
        let sum = |op: &Operator| op.diagonal().unwrap().iter().sum::<f64>();
        assert_eq!(sum(&all), 5.0);
        assert_eq!(sum(&loopless), 3.0);
    }

    #[test]
    fn flow_operator_reads_single_edges() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        let direct = FlowConfig::single(vec![0, 0, 0, 0, 1, 0]);
        let idx = basis.index_of(&direct).unwrap();
        let on_arc = flow_operator(&inst, &basis, 4, Some(0)).unwrap();
        assert_eq!(on_arc.diagonal().unwrap()[idx], 1.0);
        let on_spoke = flow_operator(&inst, &basis, 0, None).unwrap();
        assert_eq!(on_spoke.diagonal().unwrap()[idx], 0.0);
    }

    #[test]
    fn x_mixer_block_and_uniform_expectation() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::full(&inst, &caps()).unwrap());
        let mixer = x_mixer(&inst, &basis).unwrap();
        let uniform = basis.uniform_state();
        let got = mixer.expectation(&uniform).unwrap();
        assert!((got - (-18.0)).abs() < 1e-9, "got {got}");

        let feasible = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        assert!(matches!(
            x_mixer(&inst, &feasible),
            Err(Error::InvalidCombination(_))
        ));
    }

    #[test]
    fn x_mixer_dense_on_single_edge() {
        let net = FlowNetwork::new(
            "edge",
            2,
            vec![EdgeSpec::unit(0, 1)],
            vec![],
            None,
        )
        .unwrap();
        let inst =
            ProblemInstance::new(net, ProblemKind::Sssp, vec![CommoditySpec::unit(0, 1)])
                .unwrap();
        let basis = Arc::new(Basis::full(&inst, &caps()).unwrap());
        let mixer = x_mixer(&inst, &basis).unwrap();
        let dense = mixer.to_dense();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(dense[(r, c)], -1.0);
            }
        }
    }

    #[test]
    fn restriction_values_on_frozen_examples() {
        let inst = triangle_inst(2);
        let net = inst.network();
        let spec = inst.commodity(0);
        let direct = [0i8, 0, 0, 0, 1, 0];
        let hub = [-1i8, 1, 0, 0, 0, 0];
        let detour = [-1i8, 0, 1, 0, 0, -1];
        let crossing = [0i8, -1, 1, 0, 1, -1];
        assert_eq!(restriction_count(net, 0, spec, &direct), 2);
        assert_eq!(restriction_count(net, 1, spec, &direct), 0);
        assert_eq!(restriction_count(net, 0, spec, &hub), 2);
        assert_eq!(restriction_count(net, 1, spec, &hub), 2);
        assert_eq!(restriction_count(net, 0, spec, &detour), 2);
        assert_eq!(restriction_count(net, 0, spec, &crossing), 2);
    }

    #[test]
    fn restriction_values_are_even_on_feasible_states() {
        let inst = triangle_inst(3);
        let basis = Basis::feasible(&inst, false, &caps()).unwrap();
        let spec = inst.commodity(0);
        let net = inst.network();
        let mut flows = vec![0i8; net.n_edges()];
        for idx in 0..basis.dim() {
            basis.write_factor_config(0, idx, &mut flows);
            for f in 0..net.faces().len() {
                let v = restriction_count(net, f, spec, &flows);
                assert_eq!(v % 2, 0, "odd restriction value on a feasible state");
            }
        }
    }

    #[test]
    fn polynomial_gate_matches_operational_gate() {
        for n in [2usize, 3] {
            let inst = triangle_inst(n);
            let basis = Basis::feasible(&inst, false, &caps()).unwrap();
            let spec = inst.commodity(0);
            let net = inst.network();
            let mut flows = vec![0i8; net.n_edges()];
            let mut max_v = 0;
            let mut values = Vec::new();
            for idx in 0..basis.dim() {
                basis.write_factor_config(0, idx, &mut flows);
                for f in 0..net.faces().len() {
                    let v = restriction_count(net, f, spec, &flows);
                    max_v = max_v.max(v);
                    values.push(v);
                }
            }
            let ell = (max_v / 2) as usize;
            for v in values {
                let poly = decision_polynomial(ell, v as f64);
                let gate = if v == 2 { 1.0 } else { 0.0 };
                assert!(
                    (poly - gate).abs() < 1e-9,
                    "polynomial route disagrees at v = {v}, ell = {ell}"
                );
            }
        }
    }

    #[test]
    fn qed_mixer_is_symmetric_and_stays_feasible() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::feasible(&inst, false, &caps()).unwrap());
        let mixer = qed_mixer(&inst, &basis, false).unwrap();
        let Repr::Sparse(csr) = mixer.repr() else {
            panic!("single commodity mixer should be sparse");
        };
        assert!(csr.is_symmetric(0.0));
        assert!(csr.nnz() > 0);
        assert_eq!(gauss_violations(&inst, &basis, &mixer).unwrap(), 0);
    }

    #[test]
    fn unrestricted_mixer_rejects_loopless_basis() {
        // From the hub route through r3, one face move creates a crossing at
        // r2, which is feasible but not loop-free: the unrestricted mixer
        // cannot be confined to the path basis on this graph.
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        assert!(matches!(
            qed_mixer(&inst, &basis, false),
            Err(Error::InvalidCombination(_))
        ));
    }

    #[test]
    fn restricted_mixer_is_projected_on_path_basis() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        let mixer = qed_mixer(&inst, &basis, true).unwrap();
        let Repr::Sparse(csr) = mixer.repr() else {
            panic!()
        };
        assert!(csr.is_symmetric(0.0));
        assert!(mixer.is_connected());
        let (total, leaked) = qed_leak_report(&inst, &basis, true).unwrap();
        assert!(leaked > 0, "the gate does pass loop-creating moves here");
        assert!(total > leaked);
    }

    #[test]
    fn gate_blocks_loop_creation_from_direct_path() {
        // On the far face the direct path has restriction value 0, so the
        // restricted mixer must not touch it there even though the move is
        // allowed by flow ranges.
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::feasible(&inst, false, &caps()).unwrap());
        let restricted = qed_mixer(&inst, &basis, true).unwrap();
        let unrestricted = qed_mixer(&inst, &basis, false).unwrap();
        let direct = FlowConfig::single(vec![0, 0, 0, 0, 1, 0]);
        let crossing_left = FlowConfig::single(vec![0, 1, -1, 0, 1, 1]);
        let src = basis.index_of(&direct).unwrap();
        let dst = basis.index_of(&crossing_left).unwrap();
        let (Repr::Sparse(r), Repr::Sparse(u)) = (restricted.repr(), unrestricted.repr())
        else {
            panic!()
        };
        assert_eq!(r.entry(dst, src), 0.0);
        assert_eq!(u.entry(dst, src), -1.0);
    }

    #[test]
    fn mixers_agree_on_a_leak_free_graph() {
        // Two triangles glued along a middle edge: every gated move maps
        // paths to paths, so restricting changes nothing on the path basis.
        let net = FlowNetwork::new(
            "rhombus",
            4,
            vec![
                EdgeSpec::unit(0, 1),
                EdgeSpec::unit(0, 2),
                EdgeSpec::unit(1, 2),
                EdgeSpec::unit(1, 3),
                EdgeSpec::unit(2, 3),
            ],
            vec![vec![0, 1, 2], vec![1, 3, 2]],
            Some((0, 3)),
        )
        .unwrap();
        let inst =
            ProblemInstance::new(net, ProblemKind::Sssp, vec![CommoditySpec::unit(0, 3)])
                .unwrap();
        let basis = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        assert_eq!(basis.dim(), 4);
        let restricted = qed_mixer(&inst, &basis, true).unwrap();
        let unrestricted = qed_mixer(&inst, &basis, false).unwrap();
        assert_eq!(restricted.to_dense(), unrestricted.to_dense());
        let (_, leaked) = qed_leak_report(&inst, &basis, true).unwrap();
        assert_eq!(leaked, 0);
    }

    #[test]
    fn factor_sum_matches_dense_kronecker() {
        let net = FlowNetwork::grid(2, 2).unwrap();
        let inst = ProblemInstance::new(
            net,
            ProblemKind::Edp,
            vec![CommoditySpec::unit(0, 3), CommoditySpec::unit(3, 0)],
        )
        .unwrap();
        let basis = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        let mixer = qed_mixer(&inst, &basis, true).unwrap();
        let Repr::FactorSum { factors, dims } = mixer.repr() else {
            panic!("expected a factored mixer for two commodities");
        };
        let dense_factor = |a: &Csr| {
            let mut m = nalgebra::DMatrix::zeros(a.n, a.n);
            for r in 0..a.n {
                for p in a.row_ptr[r]..a.row_ptr[r + 1] {
                    m[(r, a.cols[p] as usize)] = a.vals[p];
                }
            }
            m
        };
        let a0 = dense_factor(&factors[0]);
        let a1 = dense_factor(&factors[1]);
        let eye = |n: usize| nalgebra::DMatrix::<f64>::identity(n, n);
        let want = a0.kronecker(&eye(dims[1])) + eye(dims[0]).kronecker(&a1);
        let got = mixer.to_dense();
        assert_eq!(got, want);
    }

    #[test]
    fn gauge_check_flags_the_per_edge_mixer() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::full(&inst, &caps()).unwrap());
        let qed = qed_mixer(&inst, &basis, false).unwrap();
        assert_eq!(gauss_violations(&inst, &basis, &qed).unwrap(), 0);
        let x = x_mixer(&inst, &basis).unwrap();
        assert!(gauss_violations(&inst, &basis, &x).unwrap() > 0);
    }

    #[test]
    fn wilson_loop_moves_the_direct_path() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::feasible(&inst, false, &caps()).unwrap());
        let u = wilson_loop(&inst, &basis, 0, 0, false).unwrap();
        assert!(!u.is_hermitian());
        let direct = FlowConfig::single(vec![0, 0, 0, 0, 1, 0]);
        let state = basis.basis_state(&direct).unwrap();
        let moved = u.apply(&state).unwrap();
        // Adding the first face circulation to the direct path overflows the
        // arc, so only the annihilated direction remains: U kills it.
        assert!(moved.norm() < 1e-12);
        let hub = FlowConfig::single(vec![-1, 1, 0, 0, 0, 0]);
        let state = basis.basis_state(&hub).unwrap();
        let moved = u.apply(&state).unwrap();
        assert!((moved.norm() - 1.0).abs() < 1e-12);
        let got = basis.index_of(&direct).unwrap();
        assert!((moved.amps()[got].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_rejects_non_hermitian_and_mismatched_bases() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::feasible(&inst, false, &caps()).unwrap());
        let u = wilson_loop(&inst, &basis, 0, 0, false).unwrap();
        let state = basis.uniform_state();
        assert!(matches!(u.expectation(&state), Err(Error::NotHermitian)));

        let other = Arc::new(Basis::feasible(&inst, true, &caps()).unwrap());
        let mixer = qed_mixer(&inst, &basis, false).unwrap();
        let wrong = other.uniform_state();
        assert!(matches!(
            mixer.apply(&wrong),
            Err(Error::BasisMismatch(_))
        ));
    }

    #[test]
    fn diagonal_addition_composes_cost_and_penalty() {
        let inst = triangle_inst(2);
        let basis = Arc::new(Basis::full(&inst, &caps()).unwrap());
        let cost = cost_hamiltonian(&inst, &basis).unwrap();
        let pen = penalty_operator(&inst, &basis, 0.5).unwrap();
        let sum = cost.add_diagonal(&pen).unwrap();
        let idx = 400;
        let want = cost.diagonal().unwrap()[idx] + pen.diagonal().unwrap()[idx];
        assert_eq!(sum.diagonal().unwrap()[idx], want);

        let mixer = qed_mixer(&inst, &basis, false).unwrap();
        assert!(matches!(cost.add_diagonal(&mixer), Err(Error::NotDiagonal)));
    }
}
