//! Symmetric positive-definite band matrices with in-place Cholesky.
//!
//! The Newton systems of the barrier solver couple each grid cell only with
//! cells at most two rows or two columns away, so the Hessian has bandwidth
//! at most `2 * frequency_levels`. A banded factorization keeps each Newton
//! step at `O(cells * bandwidth^2)` instead of `O(cells^3)`.

/// Lower-triangular banded storage: `data[i * (bw + 1) + d]` holds entry
/// `(i, i - d)` for `d <= min(i, bw)`.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    #[inline]
    fn pos(&self, i: usize, k: usize) -> usize {
        debug_assert!(i >= k && i - k <= self.bw);
        i * (self.bw + 1) + (i - k)
    }

    /// Adds `v` to entry `(r, c)` of the symmetric matrix; callers pass each
    /// off-diagonal pair once with `r >= c`.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let p = self.pos(r.max(c), r.min(c));
        self.data[p] += v;
    }

    /// In-place Cholesky `A = L L^T`. Fails if a pivot is not positive.
    pub fn cholesky_in_place(&mut self) -> Result<(), ()> {
        let (n, bw) = (self.n, self.bw);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut diag = self.data[self.pos(j, j)];
            for k in lo..j {
                let l = self.data[self.pos(j, k)];
                diag -= l * l;
            }
            if !diag.is_finite() || diag <= 0.0 {
                return Err(());
            }
            let dsqrt = diag.sqrt();
            let pjj = self.pos(j, j);
            self.data[pjj] = dsqrt;
            let hi = (j + bw + 1).min(n);
            for i in (j + 1)..hi {
                let klo = lo.max(i.saturating_sub(bw));
                let mut sum = self.data[self.pos(i, j)];
                for k in klo..j {
                    sum -= self.data[self.pos(i, k)] * self.data[self.pos(j, k)];
                }
                let pij = self.pos(i, j);
                self.data[pij] = sum / dsqrt;
            }
        }
        Ok(())
    }

    /// Solves `L L^T x = rhs` in place, after `cholesky_in_place`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        debug_assert_eq!(rhs.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut sum = rhs[i];
            for k in lo..i {
                sum -= self.data[self.pos(i, k)] * rhs[k];
            }
            rhs[i] = sum / self.data[self.pos(i, i)];
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut sum = rhs[i];
            for k in (i + 1)..hi {
                sum -= self.data[self.pos(k, i)] * rhs[k];
            }
            rhs[i] = sum / self.data[self.pos(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Builds A = L L^T from a random banded lower factor with positive diagonal.
    #[allow(clippy::needless_range_loop)]
    fn random_spd(n: usize, bw: usize, seed: u64) -> (Vec<Vec<f64>>, BandMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                l[i][j] = if i == j {
                    0.5 + rng.random::<f64>()
                } else {
                    rng.random::<f64>() - 0.5
                };
            }
        }
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    dense[i][j] += l[i][k] * l[j][k];
                }
            }
        }
        let mut band = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                band.add(i, j, dense[i][j]);
            }
        }
        (dense, band)
    }

    #[test]
    fn solves_random_banded_systems() {
        for (n, bw, seed) in [(1, 0, 1), (5, 1, 2), (12, 3, 3), (40, 8, 4)] {
            let (dense, mut band) = random_spd(n, bw, seed);
            band.cholesky_in_place().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x_true: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| dense[i][j] * x_true[j]).sum())
                .collect();
            band.solve_in_place(&mut rhs);
            for (got, want) in rhs.iter().zip(&x_true) {
                assert!((got - want).abs() < 1e-8, "got {got}, want {want}");
            }
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mut band = BandMatrix::zeros(2, 1);
        band.add(0, 0, 1.0);
        band.add(1, 1, 1.0);
        band.add(1, 0, 2.0); // makes the matrix indefinite
        assert!(band.cholesky_in_place().is_err());
    }
}
