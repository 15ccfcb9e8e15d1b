//! Exhaustive lattice search for the shape-constrained likelihood problem on
//! tiny grids. Independent of the barrier solver: feasibility is enforced by
//! direct integer bounds on lattice indices, and the optimum is exact at the
//! lattice resolution. Used by the test suites as the reference optimum.

use crate::error::{Error, Result};
use crate::solver::WeightedCellCounts;
use crate::types::{ProbabilityTable, ShapeMode, ShapeTag};

/// Largest grid the enumeration accepts.
pub const ORACLE_MAX_CELLS: usize = 4;

/// Best table on the `step`-lattice satisfying `mode`'s constraints and the
/// `[epsilon, 1 - epsilon]` box, together with its raw objective
/// `sum(a ln x + b ln(1 - x))`.
pub fn oracle_fit(
    counts: &WeightedCellCounts,
    mode: ShapeMode,
    step: f64,
    epsilon: f64,
) -> Result<(ProbabilityTable, f64)> {
    let grid = counts.grid();
    let cells = grid.cells();
    if cells > ORACLE_MAX_CELLS {
        return Err(Error::InvalidInput(format!(
            "oracle enumeration budget is {ORACLE_MAX_CELLS} cells, grid has {cells}"
        )));
    }
    let step_ok = step.is_finite() && step > 0.0 && step < 0.5;
    if !step_ok {
        return Err(Error::InvalidInput(format!("invalid lattice step {step}")));
    }

    let levels = (1.0 / step).round() as i64;
    // smallest/largest lattice index inside the open unit interval and the box
    let lo_box = ((epsilon / step).ceil() as i64).max(1);
    let hi_box = (((1.0 - epsilon) / step).floor() as i64).min(levels - 1);
    if lo_box > hi_box {
        return Err(Error::InvalidInput(
            "lattice has no point inside the box bounds".into(),
        ));
    }

    // per-cell objective terms over the admissible lattice, plus the peak
    // index of each (concave) term sequence
    let span = (hi_box - lo_box + 1) as usize;
    let mut term = vec![vec![0.0f64; span]; cells];
    let mut peak = vec![0i64; cells];
    for c in 0..cells {
        let (a, b) = (counts.a()[c], counts.b()[c]);
        let mut best = f64::NEG_INFINITY;
        for (slot, m) in (lo_box..=hi_box).enumerate() {
            let x = m as f64 * step;
            let v = a * x.ln() + b * (1.0 - x).ln();
            term[c][slot] = v;
            if v > best {
                best = v;
                peak[c] = m;
            }
        }
    }

    let ctx = Search {
        nj: grid.frequency_levels,
        mcc: mode == ShapeMode::Mcc,
        lo_box,
        hi_box,
        term: &term,
        peak: &peak,
    };
    let mut assigned = vec![0i64; cells];
    let mut best = Best {
        objective: f64::NEG_INFINITY,
        lattice: vec![0; cells],
    };
    ctx.recurse(0, 0.0, &mut assigned, &mut best);
    debug_assert!(best.objective.is_finite() || counts.total_weight() == 0.0);

    let tag = match mode {
        ShapeMode::Monotone => ShapeTag::Monotone,
        ShapeMode::Mcc => ShapeTag::Mcc,
    };
    let flat: Vec<f64> = best.lattice.iter().map(|&m| m as f64 * step).collect();
    let table = ProbabilityTable::from_flat(grid, epsilon, tag, &flat)?;
    Ok((table, best.objective))
}

struct Best {
    objective: f64,
    lattice: Vec<i64>,
}

struct Search<'a> {
    nj: usize,
    mcc: bool,
    lo_box: i64,
    hi_box: i64,
    term: &'a [Vec<f64>],
    peak: &'a [i64],
}

impl Search<'_> {
    /// Lattice-index bounds on cell `c` implied by already-assigned cells.
    /// Cells are visited row-major, so every constraint involving `c` as its
    /// last cell contributes here; all constraints are covered exactly once.
    fn bounds(&self, c: usize, assigned: &[i64]) -> (i64, i64) {
        let (i, j) = (c / self.nj + 1, c % self.nj + 1);
        let at = |i: usize, j: usize| assigned[(i - 1) * self.nj + (j - 1)];
        let mut lo = self.lo_box;
        let mut hi = self.hi_box;
        if i >= 2 {
            lo = lo.max(at(i - 1, j));
        }
        if j >= 2 {
            lo = lo.max(at(i, j - 1));
        }
        if self.mcc {
            if i >= 3 {
                // convexity in recency: increments must not shrink
                lo = lo.max(2 * at(i - 1, j) - at(i - 2, j));
            }
            if j >= 3 {
                // concavity in frequency: increments must not grow
                hi = hi.min(2 * at(i, j - 1) - at(i, j - 2));
            }
        }
        (lo, hi)
    }

    fn recurse(&self, c: usize, partial: f64, assigned: &mut [i64], best: &mut Best) {
        let (lo, hi) = self.bounds(c, assigned);
        if lo > hi {
            return;
        }
        if c + 1 == assigned.len() {
            // the per-cell term sequence is concave, so the best value in the
            // admissible range is the clamped peak
            let m = self.peak[c].clamp(lo, hi);
            let objective = partial + self.term[c][(m - self.lo_box) as usize];
            if objective > best.objective {
                best.objective = objective;
                assigned[c] = m;
                best.lattice.copy_from_slice(assigned);
            }
            return;
        }
        for m in lo..=hi {
            assigned[c] = m;
            self.recurse(
                c + 1,
                partial + self.term[c][(m - self.lo_box) as usize],
                assigned,
                best,
            );
        }
    }
}
