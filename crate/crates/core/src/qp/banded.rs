//! Symmetric positive-definite banded matrices and their Cholesky factor.

/// Lower band of a symmetric `n × n` matrix with half-bandwidth `bw`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)` of the symmetric matrix.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// In-place Cholesky `A = L Lᵀ`. Fails on a non-positive pivot.
    pub fn factor(mut self) -> Result<BandCholesky, usize> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let row_start = i.saturating_sub(bw);
            for j in row_start..=i {
                let mut sum = self.data[i * w + (j + bw - i)];
                let k_start = row_start.max(j.saturating_sub(bw));
                let (ri, rj) = (i * w + bw - i, j * w + bw - j);
                for k in k_start..j {
                    sum -= self.data[ri + k] * self.data[rj + k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(i);
                    }
                    self.data[ri + i] = sum.sqrt();
                } else {
                    self.data[ri + j] = sum / self.data[rj + j];
                }
            }
        }
        Ok(BandCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let data = &self.l.data;
        for i in 0..n {
            let ri = i * w + bw - i;
            let mut sum = b[i];
            for k in i.saturating_sub(bw)..i {
                sum -= data[ri + k] * b[k];
            }
            b[i] = sum / data[ri + i];
        }
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                sum -= data[k * w + bw - k + i] * b[k];
            }
            b[i] = sum / data[i * w + bw - i + i];
        }
    }
}
