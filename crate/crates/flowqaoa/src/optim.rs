//! Two-stage box-constrained minimization: a differential-evolution global
//! search handing its incumbent to a BFGS polish with finite-difference
//! gradients. Both stages respect the box and a hard per-stage step cap.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard ceiling on the per-stage iteration caps.
pub const STAGE_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Population size for differential evolution; 0 picks `15 * dim`.
    pub de_population: usize,
    /// Differential weight F.
    pub de_weight: f64,
    /// Crossover probability CR.
    pub de_crossover: f64,
    pub de_max_iters: usize,
    pub bfgs_max_iters: usize,
    /// Finite-difference step for the BFGS gradient.
    pub grad_step: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            de_population: 0,
            de_weight: 0.8,
            de_crossover: 0.7,
            de_max_iters: STAGE_CAP,
            bfgs_max_iters: STAGE_CAP,
            grad_step: 1e-4,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.de_population != 0 && self.de_population < 4 {
            return Err(Error::Validation(format!(
                "differential evolution needs population 0 (auto) or >= 4, got {}",
                self.de_population
            )));
        }
        if !(self.de_weight > 0.0 && self.de_weight <= 2.0) {
            return Err(Error::Validation(format!(
                "differential weight must lie in (0, 2], got {}",
                self.de_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.de_crossover) {
            return Err(Error::Validation(format!(
                "crossover probability must lie in [0, 1], got {}",
                self.de_crossover
            )));
        }
        if self.de_max_iters == 0 || self.de_max_iters > STAGE_CAP {
            return Err(Error::Validation(format!(
                "global-stage iterations must lie in 1..={STAGE_CAP}, got {}",
                self.de_max_iters
            )));
        }
        if self.bfgs_max_iters > STAGE_CAP {
            return Err(Error::Validation(format!(
                "local-stage iterations must lie in 0..={STAGE_CAP}, got {}",
                self.bfgs_max_iters
            )));
        }
        if !(self.grad_step > 0.0 && self.grad_step.is_finite()) {
            return Err(Error::Validation(format!(
                "gradient step must be positive, got {}",
                self.grad_step
            )));
        }
        Ok(())
    }
}

/// Best point found by [`minimize`], with per-stage bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub de_evals: u64,
    pub bfgs_evals: u64,
    /// The local stage hit its cap or a failed line search before the
    /// gradient converged.
    pub stalled: bool,
}

struct CountedFn<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> Result<f64>,
    evals: u64,
}

impl<'a> CountedFn<'a> {
    fn call(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        (self.f)(x)
    }
}

/// Minimizes `f` over the box, global stage then local polish.
///
/// Deterministic for a fixed config: the only randomness comes from the
/// seeded generator. Objective errors abort the search and propagate.
pub fn minimize(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    bounds: &[(f64, f64)],
    cfg: &OptimizerConfig,
) -> Result<OptimOutcome> {
    cfg.validate()?;
    if bounds.is_empty() {
        return Err(Error::InvalidArgument("cannot optimize over zero parameters".into()));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if lo >= hi || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bound {i} must be a finite interval, got [{lo}, {hi}]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut counted = CountedFn { f, evals: 0 };
    let (mut best_x, mut best_val) = de_stage(&mut counted, bounds, cfg, &mut rng)?;
    let de_evals = counted.evals;

    counted.evals = 0;
    let mut stalled = false;
    if cfg.bfgs_max_iters > 0 {
        let polished = bfgs_stage(&mut counted, bounds, cfg, best_x.clone(), best_val)?;
        stalled = polished.stalled;
        if polished.value <= best_val {
            best_x = polished.x;
            best_val = polished.value;
        }
    }
    Ok(OptimOutcome {
        x: best_x,
        value: best_val,
        de_evals,
        bfgs_evals: counted.evals,
        stalled,
    })
}

fn clip(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

fn de_stage(
    f: &mut CountedFn,
    bounds: &[(f64, f64)],
    cfg: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, f64)> {
    let dim = bounds.len();
    let pop_size = if cfg.de_population == 0 { (15 * dim).max(4) } else { cfg.de_population };

    let mut pop: Vec<Vec<f64>> = (0..pop_size)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
        .collect();
    let mut vals = Vec::with_capacity(pop_size);
    for x in &pop {
        vals.push(f.call(x)?);
    }
    let mut best = argmin(&vals);

    let mut trial = vec![0.0; dim];
    for _gen in 0..cfg.de_max_iters {
        for i in 0..pop_size {
            let (a, b, c) = three_distinct(pop_size, i, rng);
            let j_rand = rng.random_range(0..dim);
            for j in 0..dim {
                trial[j] = if j == j_rand || rng.random::<f64>() < cfg.de_crossover {
                    pop[a][j] + cfg.de_weight * (pop[b][j] - pop[c][j])
                } else {
                    pop[i][j]
                };
            }
            clip(&mut trial, bounds);
            let v = f.call(&trial)?;
            if v <= vals[i] {
                pop[i].copy_from_slice(&trial);
                vals[i] = v;
                if v < vals[best] {
                    best = i;
                }
            }
        }
        let worst = vals.iter().cloned().fold(f64::MIN, f64::max);
        if worst - vals[best] <= 1e-12 * (1.0 + vals[best].abs()) {
            break;
        }
    }
    Ok((pop[best].clone(), vals[best]))
}

fn argmin(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best] {
            best = i;
        }
    }
    best
}

fn three_distinct(n: usize, skip: usize, rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let mut draw = |taken: &[usize]| loop {
        let r = rng.random_range(0..n);
        if r != skip && !taken.contains(&r) {
            return r;
        }
    };
    let a = draw(&[]);
    let b = draw(&[a]);
    let c = draw(&[a, b]);
    (a, b, c)
}

struct Polished {
    x: Vec<f64>,
    value: f64,
    stalled: bool,
}

/// Central differences, falling back to one-sided at the box boundary.
fn gradient(
    f: &mut CountedFn,
    x: &[f64],
    fx: f64,
    bounds: &[(f64, f64)],
    h: f64,
) -> Result<Vec<f64>> {
    let dim = x.len();
    let mut g = vec![0.0; dim];
    let mut probe = x.to_vec();
    for j in 0..dim {
        let (lo, hi) = bounds[j];
        let up = (x[j] + h).min(hi);
        let down = (x[j] - h).max(lo);
        if up - down < 1e-15 {
            g[j] = 0.0;
            continue;
        }
        probe[j] = up;
        let f_up = if up == x[j] { fx } else { f.call(&probe)? };
        probe[j] = down;
        let f_down = if down == x[j] { fx } else { f.call(&probe)? };
        probe[j] = x[j];
        g[j] = (f_up - f_down) / (up - down);
    }
    Ok(g)
}

fn bfgs_stage(
    f: &mut CountedFn,
    bounds: &[(f64, f64)],
    cfg: &OptimizerConfig,
    x0: Vec<f64>,
    f0: f64,
) -> Result<Polished> {
    let dim = x0.len();
    let mut h_inv = identity(dim);
    let mut x = x0;
    let mut fx = f0;
    let mut g = gradient(f, &x, fx, bounds, cfg.grad_step)?;
    let grad_tol = 1e-8;
    let mut stalled = true;

    for _iter in 0..cfg.bfgs_max_iters {
        if norm(&g) < grad_tol {
            stalled = false;
            break;
        }
        // d = -H_inv g
        let mut d = vec![0.0; dim];
        for r in 0..dim {
            for c in 0..dim {
                d[r] -= h_inv[r * dim + c] * g[c];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if slope >= 0.0 {
            h_inv = identity(dim);
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();

        // Armijo backtracking over the projected step
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let mut cand: Vec<f64> =
                x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            clip(&mut cand, bounds);
            let fc = f.call(&cand)?;
            if fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };

        let g_new = gradient(f, &x_new, f_new, bounds, cfg.grad_step)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) {
            bfgs_update(&mut h_inv, &s, &y, sy);
        } else {
            // projection or a flat region broke the curvature condition
            h_inv = identity(dim);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    if norm(&g) < grad_tol {
        stalled = false;
    }
    Ok(Polished { x, value: fx, stalled })
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    let mut hy = vec![0.0; dim];
    for r in 0..dim {
        for c in 0..dim {
            hy[r] += h[r * dim + c] * y[c];
        }
    }
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for r in 0..dim {
        for c in 0..dim {
            h[r * dim + c] += (1.0 + rho * yhy) * rho * s[r] * s[c]
                - rho * (hy[r] * s[c] + s[r] * hy[c]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> OptimizerConfig {
        OptimizerConfig { seed, ..OptimizerConfig::default() }
    }

    #[test]
    fn sphere_converges_to_center() {
        let mut f = |x: &[f64]| Ok(x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum());
        let bounds = vec![(-2.0, 2.0); 4];
        let out = minimize(&mut f, &bounds, &cfg(1)).unwrap();
        assert!(out.value < 1e-10, "value {}", out.value);
        for xi in &out.x {
            assert!((xi - 0.3).abs() < 1e-5);
        }
        assert!(!out.stalled);
    }

    #[test]
    fn rosenbrock_polishes_to_the_valley_floor() {
        let mut f = |x: &[f64]| {
            Ok(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2))
        };
        let out = minimize(&mut f, &[(-2.0, 2.0), (-2.0, 2.0)], &cfg(7)).unwrap();
        assert!(out.value < 1e-6, "value {}", out.value);
        assert!((out.x[0] - 1.0).abs() < 1e-2 && (out.x[1] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn rastrigin_escapes_local_minima() {
        use std::f64::consts::PI;
        let mut f = |x: &[f64]| {
            Ok(x.iter()
                .map(|&v| v * v - 10.0 * (2.0 * PI * v).cos() + 10.0)
                .sum::<f64>())
        };
        let out = minimize(&mut f, &[(-5.12, 5.12), (-5.12, 5.12)], &cfg(3)).unwrap();
        assert!(out.value < 1e-8, "value {}", out.value);
    }

    #[test]
    fn optimum_on_the_box_boundary() {
        let mut f = |x: &[f64]| Ok(x.iter().sum::<f64>());
        let bounds = vec![(0.25, 1.0); 3];
        let out = minimize(&mut f, &bounds, &cfg(5)).unwrap();
        assert!((out.value - 0.75).abs() < 1e-9, "value {}", out.value);
        for xi in &out.x {
            assert!((xi - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn every_probe_stays_inside_the_box() {
        let bounds = vec![(-1.0, 3.0), (0.5, 2.0)];
        let checked = bounds.clone();
        let mut f = move |x: &[f64]| {
            for (xi, (lo, hi)) in x.iter().zip(&checked) {
                assert!(*xi >= *lo && *xi <= *hi, "probe {xi} escaped [{lo}, {hi}]");
            }
            Ok((x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2))
        };
        let out = minimize(&mut f, &bounds, &cfg(11)).unwrap();
        assert!(out.value < 1e-10);
    }

    #[test]
    fn same_seed_is_bitwise_deterministic() {
        let run = || {
            let mut f = |x: &[f64]| {
                Ok((x[0] - 0.7).powi(2) + 3.0 * (x[1] + 0.2).powi(2) + x[0] * x[1])
            };
            minimize(&mut f, &[(-1.0, 1.0), (-1.0, 1.0)], &cfg(42)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.x[0].to_bits(), b.x[0].to_bits());
        assert_eq!(a.x[1].to_bits(), b.x[1].to_bits());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.de_evals, b.de_evals);
        assert_eq!(a.bfgs_evals, b.bfgs_evals);
    }

    #[test]
    fn nonsmooth_objective_returns_best_so_far() {
        let mut f = |x: &[f64]| Ok(x[0].abs() + x[1].abs());
        let out = minimize(&mut f, &[(-1.0, 1.0), (-1.0, 1.0)], &cfg(2)).unwrap();
        assert!(out.value < 1e-6, "value {}", out.value);
    }

    #[test]
    fn objective_errors_propagate() {
        let mut calls = 0u32;
        let mut f = |_: &[f64]| {
            calls += 1;
            if calls > 10 {
                Err(Error::Numerical("synthetic blowup".into()))
            } else {
                Ok(1.0)
            }
        };
        let err = minimize(&mut f, &[(0.0, 1.0)], &cfg(0)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn eval_counts_match_a_manual_counter() {
        let mut seen = 0u64;
        let mut f = |x: &[f64]| {
            seen += 1;
            Ok(x[0] * x[0])
        };
        let out = minimize(&mut f, &[(-1.0, 1.0)], &cfg(9)).unwrap();
        assert_eq!(out.de_evals + out.bfgs_evals, seen);
        assert!(out.de_evals >= 15);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        let bad = OptimizerConfig { de_population: 2, ..ok };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { de_weight: 0.0, ..ok };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { de_crossover: 1.5, ..ok };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { de_max_iters: 201, ..ok };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { bfgs_max_iters: 201, ..ok };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { grad_step: 0.0, ..ok };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn skipping_the_local_stage_keeps_the_global_result() {
        let mut f = |x: &[f64]| Ok((x[0] - 0.5).powi(2));
        let no_polish = OptimizerConfig { bfgs_max_iters: 0, ..cfg(4) };
        let out = minimize(&mut f, &[(0.0, 1.0)], &no_polish).unwrap();
        assert_eq!(out.bfgs_evals, 0);
        assert!(out.value < 1e-6);
    }
}
