//! Log-barrier interior-point engine for the shape-constrained
//! maximum-likelihood problem.
//!
//! The problem is strictly concave on the interior of its polyhedron once the
//! box bounds are in the constraint set, so a path-following barrier method
//! with damped Newton steps converges to the global constrained maximum. All
//! iterates stay strictly feasible, which is what lets the fitted tables pass
//! the shape checks with zero violations.

use crate::error::{Error, Result};
use crate::types::{GridSpec, ShapeMode};

use super::banded::BandMatrix;
use super::SolverConfig;

/// One linear inequality `sum(coef * x[idx]) <= rhs`, at most three terms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearConstraint {
    terms: [(u32, f64); 3],
    len: u8,
    rhs: f64,
}

impl LinearConstraint {
    fn new(terms: &[(usize, f64)], rhs: f64) -> Self {
        let mut packed = [(0u32, 0.0); 3];
        for (slot, &(idx, coef)) in packed.iter_mut().zip(terms) {
            *slot = (idx as u32, coef);
        }
        Self {
            terms: packed,
            len: terms.len() as u8,
            rhs,
        }
    }

    #[inline]
    fn terms(&self) -> &[(u32, f64)] {
        &self.terms[..self.len as usize]
    }

    /// Constraint function `g(x) = sum(coef * x) - rhs`; feasible iff `g < 0`.
    #[inline]
    fn g(&self, x: &[f64]) -> f64 {
        let mut v = -self.rhs;
        for &(idx, coef) in self.terms() {
            v += coef * x[idx as usize];
        }
        v
    }

    #[inline]
    fn dot(&self, d: &[f64]) -> f64 {
        let mut v = 0.0;
        for &(idx, coef) in self.terms() {
            v += coef * d[idx as usize];
        }
        v
    }

    fn span(&self) -> usize {
        let idx = self.terms().iter().map(|&(i, _)| i);
        let min = idx.clone().min().unwrap_or(0);
        let max = idx.max().unwrap_or(0);
        (max - min) as usize
    }
}

/// Box bounds plus the monotonicity (and, for `Mcc`, curvature) constraints.
pub(crate) fn build_constraints(
    grid: GridSpec,
    mode: ShapeMode,
    epsilon: f64,
) -> Vec<LinearConstraint> {
    let (ni, nj) = (grid.recency_levels, grid.frequency_levels);
    let idx = |i: usize, j: usize| grid.index(i, j);
    let mut cons = Vec::new();
    for i in 1..=ni {
        for j in 1..=nj {
            let c = idx(i, j);
            cons.push(LinearConstraint::new(&[(c, -1.0)], -epsilon)); // x >= eps
            cons.push(LinearConstraint::new(&[(c, 1.0)], 1.0 - epsilon)); // x <= 1 - eps
            if i < ni {
                cons.push(LinearConstraint::new(
                    &[(c, 1.0), (idx(i + 1, j), -1.0)],
                    0.0,
                ));
            }
            if j < nj {
                cons.push(LinearConstraint::new(
                    &[(c, 1.0), (idx(i, j + 1), -1.0)],
                    0.0,
                ));
            }
            if mode == ShapeMode::Mcc {
                if i + 2 <= ni {
                    cons.push(LinearConstraint::new(
                        &[(c, -1.0), (idx(i + 1, j), 2.0), (idx(i + 2, j), -1.0)],
                        0.0,
                    ));
                }
                if j + 2 <= nj {
                    cons.push(LinearConstraint::new(
                        &[(c, 1.0), (idx(i, j + 1), -2.0), (idx(i, j + 2), 1.0)],
                        0.0,
                    ));
                }
            }
        }
    }
    cons
}

/// A strictly feasible start: the weight-pooled constant level plus a small
/// strictly-monotone, strictly-convex-in-recency, strictly-concave-in-frequency
/// ramp so that every inequality holds strictly, as the barrier requires.
pub(crate) fn strictly_feasible_start(grid: GridSpec, pooled_rate: f64, epsilon: f64) -> Vec<f64> {
    let base = pooled_rate.clamp(2.0 * epsilon, 1.0 - 2.0 * epsilon);
    let slack = (base - epsilon).min(1.0 - epsilon - base);
    let delta = 0.5 * slack.min(0.05);
    let (ni, nj) = (grid.recency_levels as f64, grid.frequency_levels as f64);
    let mut x = vec![0.0; grid.cells()];
    for i in 1..=grid.recency_levels {
        for j in 1..=grid.frequency_levels {
            let ramp_i = 0.5 * (i as f64 / ni).powi(2);
            let ramp_j = 0.5 * (j as f64 / nj).sqrt();
            x[grid.index(i, j)] = base + delta * (ramp_i + ramp_j - 1.0);
        }
    }
    x
}

/// Maximizes `sum(a * ln(x) + b * ln(1 - x))` over the constraint polyhedron.
/// `a` and `b` must be normalized so the objective is O(1); the duality-gap
/// stop `m / t <= kkt_tol` is then a relative tolerance.
pub(crate) fn maximize(
    x0: Vec<f64>,
    a: &[f64],
    b: &[f64],
    cons: &[LinearConstraint],
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = x0.len();
    let m = cons.len() as f64;
    let bw = cons.iter().map(LinearConstraint::span).max().unwrap_or(0);

    let mut x = x0;
    debug_assert!(
        cons.iter().all(|c| c.g(&x) < 0.0),
        "start must be strictly feasible"
    );

    let mut t = config.barrier_t0;
    let mut hess = BandMatrix::zeros(n, bw);
    for outer in 0..MAX_OUTER {
        center(&mut x, t, a, b, cons, config, &mut hess)?;
        if m / t <= config.kkt_tol {
            log::debug!(
                "barrier converged after {} centerings (t = {t:.3e})",
                outer + 1
            );
            return Ok(x);
        }
        t *= config.barrier_mu;
    }
    Err(Error::Solver(format!(
        "barrier schedule did not reach gap {:.1e} within {MAX_OUTER} centerings",
        config.kkt_tol
    )))
}

const MAX_OUTER: usize = 80;
const NEWTON_DECREMENT_TOL: f64 = 1e-9;
const ARMIJO_SLOPE: f64 = 0.25;

/// Minimizes `t * f(x) + phi(x)` with damped Newton, where `f` is the negated
/// log-likelihood and `phi` the log barrier of `cons`.
fn center(
    x: &mut [f64],
    t: f64,
    a: &[f64],
    b: &[f64],
    cons: &[LinearConstraint],
    config: &SolverConfig,
    hess: &mut BandMatrix,
) -> Result<()> {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut trial = vec![0.0; n];

    for _ in 0..config.max_newton_iterations {
        // gradient of t*f + phi
        for c in 0..n {
            grad[c] = t * (-a[c] / x[c] + b[c] / (1.0 - x[c]));
        }
        hess.reset();
        for c in 0..n {
            hess.add(
                c,
                c,
                t * (a[c] / (x[c] * x[c]) + b[c] / ((1.0 - x[c]) * (1.0 - x[c]))),
            );
        }
        for con in cons {
            let g = con.g(x);
            debug_assert!(g < 0.0);
            let inv = 1.0 / -g;
            let w = inv * inv;
            let terms = con.terms();
            for (p, &(ip, cp)) in terms.iter().enumerate() {
                grad[ip as usize] += cp * inv;
                hess.add(ip as usize, ip as usize, cp * cp * w);
                for &(iq, cq) in &terms[p + 1..] {
                    hess.add(ip.max(iq) as usize, ip.min(iq) as usize, cp * cq * w);
                }
            }
        }

        step.copy_from_slice(&grad);
        for s in &mut step {
            *s = -*s;
        }
        if hess.cholesky_in_place().is_err() {
            return Err(Error::Solver("Newton system not positive definite".into()));
        }
        hess.solve_in_place(&mut step);

        let decrement: f64 = grad.iter().zip(&step).map(|(g, d)| -g * d).sum();
        if decrement / 2.0 <= NEWTON_DECREMENT_TOL {
            return Ok(());
        }

        // longest step keeping every constraint strictly feasible
        let mut s = 1.0f64;
        for con in cons {
            let d = con.dot(&step);
            if d > 0.0 {
                s = s.min(0.99 * (-con.g(x)) / d);
            }
        }

        let psi0 = merit(x, t, a, b, cons);
        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let mut accepted = false;
        while s > 1e-16 {
            for ((tr, &xi), &di) in trial.iter_mut().zip(x.iter()).zip(&step) {
                *tr = xi + s * di;
            }
            let psi = merit(&trial, t, a, b, cons);
            if psi <= psi0 + ARMIJO_SLOPE * s * slope {
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            // at the numerical floor for this centering; the iterate is the
            // best strictly feasible point reachable in f64
            return Ok(());
        }
        x.copy_from_slice(&trial);
    }
    Ok(())
}

fn merit(x: &[f64], t: f64, a: &[f64], b: &[f64], cons: &[LinearConstraint]) -> f64 {
    let mut f = 0.0;
    for c in 0..x.len() {
        if !(0.0 < x[c] && x[c] < 1.0) {
            return f64::INFINITY;
        }
        f -= a[c] * x[c].ln() + b[c] * (1.0 - x[c]).ln();
    }
    let mut phi = 0.0;
    for con in cons {
        let g = con.g(x);
        if g >= 0.0 {
            return f64::INFINITY;
        }
        phi -= (-g).ln();
    }
    t * f + phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GridSpec;

    #[test]
    fn start_is_strictly_feasible_for_all_modes() {
        for (ni, nj) in [(1, 1), (2, 1), (1, 3), (3, 3), (24, 16)] {
            let grid = GridSpec::new(ni, nj).unwrap();
            for rate in [0.0, 1e-9, 0.2, 0.5, 0.999, 1.0] {
                let x = strictly_feasible_start(grid, rate, 1e-5);
                for mode in [ShapeMode::Monotone, ShapeMode::Mcc] {
                    let cons = build_constraints(grid, mode, 1e-5);
                    for con in &cons {
                        assert!(
                            con.g(&x) < 0.0,
                            "grid {ni}x{nj}, rate {rate}: g = {}",
                            con.g(&x)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn constraint_counts_match_families() {
        let grid = GridSpec::new(24, 16).unwrap();
        let mono = build_constraints(grid, ShapeMode::Monotone, 1e-5).len();
        let mcc = build_constraints(grid, ShapeMode::Mcc, 1e-5).len();
        // 2 box per cell + monotone rows/cols
        assert_eq!(mono, 2 * 384 + 23 * 16 + 24 * 15);
        assert_eq!(mcc, mono + 22 * 16 + 24 * 14);
    }

    #[test]
    fn degenerate_axes_generate_no_curvature_constraints() {
        let grid = GridSpec::new(2, 1).unwrap();
        let mono = build_constraints(grid, ShapeMode::Monotone, 1e-5).len();
        let mcc = build_constraints(grid, ShapeMode::Mcc, 1e-5).len();
        assert_eq!(mono, mcc);
    }
}
