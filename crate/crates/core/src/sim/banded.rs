//! Banded LU factorisation with partial pivoting.

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major; row `i` stores columns `i - kl ..= i + ku + kl` (room for pivot fill-in).
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Sets an entry inside the declared band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(
            j + self.kl >= i && j <= i + self.ku,
            "({i}, {j}) outside band"
        );
        let s = self.slot(i, j).expect("entry inside band");
        self.data[s] = v;
    }

    /// In-place LU factorisation followed by solution of `A x = b`; `b` is overwritten with `x`.
    ///
    /// Returns `false` when a zero pivot is met.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&mut self, b: &mut [f64]) -> bool {
        let n = self.n;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return false;
            }
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.get(k, j);
                    let c = self.get(p, j);
                    if let Some(s) = self.slot(k, j) {
                        self.data[s] = c;
                    }
                    if let Some(s) = self.slot(p, j) {
                        self.data[s] = a;
                    }
                }
                b.swap(k, p);
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let s_ik = self.slot(i, k).unwrap();
                let factor = self.data[s_ik] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[s_ik] = 0.0;
                for j in k + 1..=last_col {
                    let akj = self.get(k, j);
                    if akj != 0.0 {
                        let s = self.slot(i, j).unwrap();
                        self.data[s] -= factor * akj;
                    }
                }
                b[i] -= factor * b[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=last_col {
                s -= self.get(k, j) * b[j];
            }
            b[k] = s / self.get(k, k);
        }
        true
    }
}
