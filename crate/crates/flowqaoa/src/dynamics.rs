//! Time evolution under the Hamiltonians built in [`crate::operators`].
//!
//! Everything here implements `|psi'> = exp(-i t H) |psi>` for real symmetric
//! `H`. The work is routed by representation:
//!
//! - diagonal operators get exact per-amplitude phases,
//! - site sums get a closed-form per-site 3x3 unitary,
//! - sparse and factored operators small enough to diagonalize get a dense
//!   eigendecomposition per register, reused across calls through [`Evolver`],
//! - everything else falls back to a Lanczos propagator with full
//!   reorthogonalization and adaptive step splitting.
//!
//! [`dense_expm_apply`] is the brute-force oracle the fast paths are tested
//! against.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Basis, StateVector};
use crate::operators::{Operator, Repr};

/// Tunables for the propagator and eigensolvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    /// Target bound on the total propagation error of one `evolve` call.
    pub tolerance: f64,
    /// Krylov subspace dimension per Lanczos sweep.
    pub max_krylov: usize,
    /// Registers up to this dimension are diagonalized densely and cached.
    pub dense_factor_limit: usize,
    /// Hard cap on adaptive sub-steps before giving up.
    pub max_steps: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            tolerance: 1e-8,
            max_krylov: 40,
            dense_factor_limit: 512,
            max_steps: 1000,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-2) {
            return Err(Error::Validation(format!(
                "evolve tolerance must be in (0, 1e-2], got {}",
                self.tolerance
            )));
        }
        if self.max_krylov < 2 || self.max_krylov > 200 {
            return Err(Error::Validation(format!(
                "max_krylov must be in 2..=200, got {}",
                self.max_krylov
            )));
        }
        if self.dense_factor_limit > 4096 {
            return Err(Error::Validation(format!(
                "dense_factor_limit must be at most 4096, got {}",
                self.dense_factor_limit
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Validation("max_steps must be positive".into()));
        }
        Ok(())
    }
}

struct RegisterEig {
    evals: Vec<f64>,
    /// Eigenvectors as columns; orthogonal since the register is symmetric.
    evecs: DMatrix<f64>,
    gap: f64,
}

enum Plan {
    /// Exact phases from the stored diagonal.
    Phase,
    /// One 3x3 eigendecomposition shared by every site.
    Site(RegisterEig),
    /// Dense eigendecomposition per tensor register. A plain sparse operator
    /// is the single-register case.
    DenseRegisters { regs: Vec<RegisterEig>, dims: Vec<usize> },
    /// Lanczos on the operator's matvec, no precomputation.
    Krylov,
}

/// Reusable propagator for one operator.
///
/// Building an `Evolver` pays any eigendecomposition cost once; each
/// [`Evolver::evolve`] call is then cheap. This is what the QAOA layer loop
/// uses, one evolver per Hamiltonian.
pub struct Evolver {
    op: Operator,
    cfg: EvolveConfig,
    plan: Plan,
}

impl Evolver {
    pub fn new(op: Operator, cfg: EvolveConfig) -> Result<Self> {
        cfg.validate()?;
        if !op.is_hermitian() {
            return Err(Error::NotHermitian);
        }
        let plan = match op.repr() {
            Repr::Diagonal(_) => Plan::Phase,
            Repr::SiteSum { block, .. } => {
                let dense = DMatrix::from_fn(3, 3, |r, c| block[r][c]);
                Plan::Site(diagonalize(&dense))
            }
            Repr::Sparse(csr) => {
                if csr.n <= cfg.dense_factor_limit {
                    let dense = op.to_dense();
                    Plan::DenseRegisters { regs: vec![diagonalize(&dense)], dims: vec![csr.n] }
                } else {
                    Plan::Krylov
                }
            }
            Repr::FactorSum { factors, dims } => {
                if dims.iter().all(|&d| d <= cfg.dense_factor_limit) {
                    let regs = factors
                        .iter()
                        .map(|csr| {
                            let mut dense = DMatrix::zeros(csr.n, csr.n);
                            for r in 0..csr.n {
                                for idx in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                                    dense[(r, csr.cols[idx] as usize)] = csr.vals[idx];
                                }
                            }
                            diagonalize(&dense)
                        })
                        .collect();
                    Plan::DenseRegisters { regs, dims: dims.clone() }
                } else {
                    Plan::Krylov
                }
            }
        };
        Ok(Evolver { op, cfg, plan })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    /// Applies `exp(-i t H)` to `state`.
    pub fn evolve(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("evolution time must be finite, got {t}")));
        }
        if state.basis().fingerprint() != self.op.basis_fingerprint() {
            return Err(Error::BasisMismatch("state basis does not match the operator".into()));
        }
        let mut out = state.clone();
        if t == 0.0 {
            return Ok(out);
        }
        let in_norm = state.norm();
        match &self.plan {
            Plan::Phase => {
                let diag = self.op.diagonal()?;
                for (a, d) in out.amps_mut().iter_mut().zip(diag) {
                    *a *= Complex64::from_polar(1.0, -t * d);
                }
                // |phase| = 1 exactly, nothing to renormalize
                return Ok(out);
            }
            Plan::Site(eig) => {
                let u = small_unitary(eig, t);
                let dim = out.dim();
                let n_sites = match self.op.repr() {
                    Repr::SiteSum { n_sites, .. } => *n_sites,
                    _ => unreachable!(),
                };
                let amps = out.amps_mut();
                let mut stride = 1;
                for _ in 0..n_sites {
                    let group = 3 * stride;
                    for outer in 0..dim / 3 {
                        let base = (outer / stride) * group + (outer % stride);
                        let x = [amps[base], amps[base + stride], amps[base + 2 * stride]];
                        for r in 0..3 {
                            amps[base + r * stride] =
                                u[r][0] * x[0] + u[r][1] * x[1] + u[r][2] * x[2];
                        }
                    }
                    stride = group;
                }
            }
            Plan::DenseRegisters { regs, dims } => {
                let amps = out.amps_mut();
                let total: usize = dims.iter().product();
                let mut d_left = 1;
                for (reg, &d) in regs.iter().zip(dims) {
                    let d_right = total / (d_left * d);
                    apply_register_unitary(reg, t, amps, d_left, d, d_right);
                    d_left *= d;
                }
            }
            Plan::Krylov => {
                let evolved = krylov_expm(
                    &mut |x, y| self.op.accumulate(x, y),
                    out.dim(),
                    t,
                    out.amps(),
                    &self.cfg,
                )?;
                out.amps_mut().copy_from_slice(&evolved);
            }
        }
        finish_norm(&mut out, in_norm, self.cfg.tolerance)?;
        Ok(out)
    }
}

/// One-shot convenience wrapper; prefer [`Evolver`] for repeated evolution
/// under the same operator.
pub fn evolve(op: &Operator, t: f64, state: &StateVector, cfg: &EvolveConfig) -> Result<StateVector> {
    Evolver::new(op.clone(), *cfg)?.evolve(state, t)
}

fn diagonalize(dense: &DMatrix<f64>) -> RegisterEig {
    let eig = dense.clone().symmetric_eigen();
    let n = dense.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let evals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut evecs = DMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        // fix the overall sign so results do not depend on LAPACK-style noise
        let pivot = (0..n).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            evecs[(r, k)] = sign * col[r];
        }
    }
    let gap = if n > 1 { evals[1] - evals[0] } else { f64::INFINITY };
    RegisterEig { evals, evecs, gap }
}

fn small_unitary(eig: &RegisterEig, t: f64) -> [[Complex64; 3]; 3] {
    let ph: Vec<Complex64> =
        eig.evals.iter().map(|&l| Complex64::from_polar(1.0, -t * l)).collect();
    let mut u = [[Complex64::new(0.0, 0.0); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..3 {
                acc += ph[k] * eig.evecs[(r, k)] * eig.evecs[(c, k)];
            }
            u[r][c] = acc;
        }
    }
    u
}

/// In-place `exp(-i t A)` on the middle index of an `amps` tensor shaped
/// `(d_left, d, d_right)`, where `A = evecs diag(evals) evecs^T`.
fn apply_register_unitary(
    reg: &RegisterEig,
    t: f64,
    amps: &mut [Complex64],
    d_left: usize,
    d: usize,
    d_right: usize,
) {
    let phases: Vec<Complex64> =
        reg.evals.iter().map(|&l| Complex64::from_polar(1.0, -t * l)).collect();
    let mut fiber = vec![Complex64::new(0.0, 0.0); d];
    let mut z = vec![Complex64::new(0.0, 0.0); d];
    for l in 0..d_left {
        for r in 0..d_right {
            let base = l * d * d_right + r;
            for j in 0..d {
                fiber[j] = amps[base + j * d_right];
            }
            for k in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..d {
                    acc += fiber[j] * reg.evecs[(j, k)];
                }
                z[k] = acc * phases[k];
            }
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += z[k] * reg.evecs[(j, k)];
                }
                amps[base + j * d_right] = acc;
            }
        }
    }
}

fn finish_norm(state: &mut StateVector, in_norm: f64, tol: f64) -> Result<()> {
    let out_norm = state.norm();
    if in_norm == 0.0 {
        return Ok(());
    }
    let drift = (out_norm / in_norm - 1.0).abs();
    if drift > 100.0 * tol.max(1e-14) {
        return Err(Error::Numerical(format!("evolution lost unitarity, norm drift {drift:.3e}")));
    }
    if drift > 0.0 {
        let scale = in_norm / out_norm;
        for a in state.amps_mut() {
            *a *= scale;
        }
    }
    Ok(())
}

struct LanczosBasis {
    vecs: Vec<Vec<Complex64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// The normalization that the next vector would get; 0 on exact breakdown.
    last_beta: f64,
    happy: bool,
}

/// Lanczos with two-pass full reorthogonalization. `matvec` must add `A x`
/// into a zero-filled output slice.
fn lanczos(
    matvec: &mut dyn FnMut(&[Complex64], &mut [Complex64]),
    v0: &[Complex64],
    m: usize,
) -> LanczosBasis {
    let dim = v0.len();
    let mut vecs: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m.saturating_sub(1));
    vecs.push(v0.to_vec());
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let mut scale: f64 = 0.0;
    let mut last_beta = 0.0;
    let mut happy = false;
    for j in 0..m {
        w.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        matvec(&vecs[j], &mut w);
        let a = vecs[j].iter().zip(&w).map(|(v, w)| (v.conj() * w).re).sum::<f64>();
        alpha.push(a);
        scale = scale.max(a.abs());
        for pass in 0..2 {
            for (i, vi) in vecs.iter().enumerate() {
                // first pass handles the three-term recurrence exactly; the
                // second mops up the rounding that full reorth exists for
                if pass == 0 && i + 2 < vecs.len() {
                    continue;
                }
                let ip: Complex64 = vi.iter().zip(&w).map(|(v, w)| v.conj() * w).sum();
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= ip * vk;
                }
            }
        }
        let b = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        last_beta = b;
        if j + 1 == m {
            break;
        }
        if b <= 1e-13 * scale.max(1.0) {
            happy = true;
            last_beta = 0.0;
            break;
        }
        beta.push(b);
        scale = scale.max(b);
        vecs.push(w.iter().map(|x| x / b).collect());
    }
    LanczosBasis { vecs, alpha, beta, last_beta, happy }
}

fn tridiag_eig(alpha: &[f64], beta: &[f64]) -> RegisterEig {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    diagonalize(&t)
}

/// Krylov approximation of `exp(-i t A) psi` for a real symmetric `A` given
/// only through its matvec. Splits `t` adaptively until the per-step
/// generalized-residual estimate fits the error budget.
pub fn krylov_expm(
    matvec: &mut dyn FnMut(&[Complex64], &mut [Complex64]),
    dim: usize,
    t: f64,
    psi: &[Complex64],
    cfg: &EvolveConfig,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    if psi.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "state length {} does not match dimension {dim}",
            psi.len()
        )));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("evolution time must be finite, got {t}")));
    }
    let in_norm = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if in_norm == 0.0 {
        return Err(Error::InvalidArgument("cannot evolve the zero vector".into()));
    }
    if t == 0.0 {
        return Ok(psi.to_vec());
    }
    let mut cur: Vec<Complex64> = psi.iter().map(|x| x / in_norm).collect();
    let total = t.abs();
    let mut remaining = t;
    let mut steps = 0;
    while remaining != 0.0 {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::Numerical(format!(
                "propagator did not converge within {} sub-steps",
                cfg.max_steps
            )));
        }
        let m = cfg.max_krylov.min(dim);
        let lz = lanczos(matvec, &cur, m);
        let m_eff = lz.alpha.len();
        let eig = tridiag_eig(&lz.alpha, &lz.beta);
        let mut tau = remaining;
        let w = loop {
            // w = S exp(-i tau Theta) S^T e_1
            let mut w = vec![Complex64::new(0.0, 0.0); m_eff];
            for k in 0..m_eff {
                let ph = Complex64::from_polar(1.0, -tau * eig.evals[k]) * eig.evecs[(0, k)];
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj += eig.evecs[(j, k)] * ph;
                }
            }
            let err = if lz.happy { 0.0 } else { lz.last_beta * w[m_eff - 1].norm() * tau.abs() };
            if err <= cfg.tolerance * (tau.abs() / total) {
                break w;
            }
            tau *= 0.5;
            if tau.abs() < 1e-12 * total {
                return Err(Error::Numerical(
                    "propagator step size underflow; raise the tolerance or krylov dimension"
                        .into(),
                ));
            }
        };
        let mut next = vec![Complex64::new(0.0, 0.0); dim];
        for (j, wj) in w.iter().enumerate() {
            for (nk, vk) in next.iter_mut().zip(&lz.vecs[j]) {
                *nk += wj * vk;
            }
        }
        let norm = next.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 100.0 * cfg.tolerance {
            return Err(Error::Numerical(format!(
                "evolution lost unitarity, norm drift {:.3e}",
                (norm - 1.0).abs()
            )));
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        cur = next;
        remaining -= tau;
        if remaining.abs() < 1e-15 * total {
            remaining = 0.0;
        }
    }
    for x in cur.iter_mut() {
        *x *= in_norm;
    }
    Ok(cur)
}

/// Dense-eigendecomposition oracle: `exp(-i t H) psi` for an explicit
/// symmetric matrix. Only meant for tests and small cross-checks.
pub fn dense_expm_apply(h: &DMatrix<f64>, t: f64, psi: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(h.nrows(), h.ncols());
    assert_eq!(h.nrows(), psi.len());
    let eig = diagonalize(h);
    let n = psi.len();
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += psi[j] * eig.evecs[(j, k)];
        }
        z[k] = acc * Complex64::from_polar(1.0, -t * eig.evals[k]);
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (j, oj) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += z[k] * eig.evecs[(j, k)];
        }
        *oj = acc;
    }
    out
}

/// Lowest eigenpair of an operator.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: StateVector,
    /// True when a second eigenvalue sits within the resolution of the
    /// solver; the returned vector is then one arbitrary member of the
    /// ground space (deterministic, but basis-convention dependent).
    pub degenerate: bool,
}

const GROUND_SEED: u64 = 0x6a05_2026;

/// Computes the ground state of `op` over `basis`.
///
/// Diagonal operators are scanned exactly; site sums and dense-diagonalizable
/// registers are solved per register and tensored; large sparse operators use
/// restarted Lanczos with a deterministic start vector.
pub fn ground_state(op: &Operator, basis: &Arc<Basis>, cfg: &EvolveConfig) -> Result<GroundState> {
    cfg.validate()?;
    if basis.fingerprint() != op.basis_fingerprint() {
        return Err(Error::BasisMismatch("basis does not match the operator".into()));
    }
    if !op.is_hermitian() {
        return Err(Error::NotHermitian);
    }
    let deg_tol = |e: f64| 1e-8 * (1.0 + e.abs());
    match op.repr() {
        Repr::Diagonal(diag) => {
            let mut best = 0;
            for (i, d) in diag.iter().enumerate() {
                if *d < diag[best] {
                    best = i;
                }
            }
            let energy = diag[best];
            let degenerate =
                diag.iter().enumerate().any(|(i, d)| i != best && (d - energy).abs() <= deg_tol(energy));
            let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
            amps[best] = Complex64::new(1.0, 0.0);
            Ok(GroundState { energy, state: StateVector::new(Arc::clone(basis), amps)?, degenerate })
        }
        Repr::SiteSum { block, n_sites } => {
            let dense = DMatrix::from_fn(3, 3, |r, c| block[r][c]);
            let eig = diagonalize(&dense);
            let g = [eig.evecs[(0, 0)], eig.evecs[(1, 0)], eig.evecs[(2, 0)]];
            let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
            for (idx, a) in amps.iter_mut().enumerate() {
                let mut rest = idx;
                let mut prod = 1.0;
                for _ in 0..*n_sites {
                    prod *= g[rest % 3];
                    rest /= 3;
                }
                *a = Complex64::new(prod, 0.0);
            }
            let energy = eig.evals[0] * *n_sites as f64;
            let degenerate = eig.gap <= deg_tol(eig.evals[0]);
            Ok(GroundState { energy, state: StateVector::new(Arc::clone(basis), amps)?, degenerate })
        }
        Repr::Sparse(csr) if csr.n <= cfg.dense_factor_limit => {
            let eig = diagonalize(&op.to_dense());
            let amps: Vec<Complex64> =
                (0..csr.n).map(|r| Complex64::new(eig.evecs[(r, 0)], 0.0)).collect();
            Ok(GroundState {
                energy: eig.evals[0],
                state: StateVector::new(Arc::clone(basis), amps)?,
                degenerate: eig.gap <= deg_tol(eig.evals[0]),
            })
        }
        Repr::FactorSum { factors, dims } if dims.iter().all(|&d| d <= cfg.dense_factor_limit) => {
            let mut energy = 0.0;
            let mut degenerate = false;
            let mut factor_states = Vec::with_capacity(factors.len());
            for (csr, &d) in factors.iter().zip(dims) {
                let mut dense = DMatrix::zeros(d, d);
                for r in 0..d {
                    for idx in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                        dense[(r, csr.cols[idx] as usize)] = csr.vals[idx];
                    }
                }
                let eig = diagonalize(&dense);
                energy += eig.evals[0];
                degenerate |= eig.gap <= deg_tol(eig.evals[0]);
                factor_states
                    .push((0..d).map(|r| Complex64::new(eig.evecs[(r, 0)], 0.0)).collect());
            }
            let state = StateVector::tensor(basis, &factor_states)?;
            Ok(GroundState { energy, state, degenerate })
        }
        _ => krylov_ground(op, basis, cfg),
    }
}

fn krylov_ground(op: &Operator, basis: &Arc<Basis>, cfg: &EvolveConfig) -> Result<GroundState> {
    let dim = basis.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(GROUND_SEED);
    let mut v: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.random::<f64>() - 0.5, 0.0)).collect();
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut matvec = |x: &[Complex64], y: &mut [Complex64]| op.accumulate(x, y);
    let mut energy = f64::INFINITY;
    let mut gap = f64::INFINITY;
    for _restart in 0..300 {
        let m = cfg.max_krylov.min(dim);
        let lz = lanczos(&mut matvec, &v, m);
        let m_eff = lz.alpha.len();
        let eig = tridiag_eig(&lz.alpha, &lz.beta);
        let mut next = vec![Complex64::new(0.0, 0.0); dim];
        for j in 0..m_eff {
            let c = eig.evecs[(j, 0)];
            for (nk, vk) in next.iter_mut().zip(&lz.vecs[j]) {
                *nk += c * vk;
            }
        }
        let norm = next.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        v = next;
        energy = eig.evals[0];
        gap = if m_eff > 1 { eig.evals[1] - eig.evals[0] } else { f64::INFINITY };
        let residual = lz.last_beta * eig.evecs[(m_eff - 1, 0)].abs();
        let scale = lz.alpha.iter().fold(0.0_f64, |s, a| s.max(a.abs())).max(1.0);
        if lz.happy || residual <= cfg.tolerance * scale {
            let degenerate = gap <= 1e-6 * (1.0 + energy.abs());
            return Ok(GroundState {
                energy,
                state: StateVector::new(Arc::clone(basis), v)?,
                degenerate,
            });
        }
    }
    // ran out of restarts; report what we have but flag it
    let _ = gap;
    Err(Error::Numerical(format!(
        "ground-state iteration stalled at energy {energy:.6}; raise max_krylov"
    )))
}
