//! LU factorization of banded matrices with partial pivoting.

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored by
/// rows over the column window `[r − kl, r + ku]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    rows: Vec<Vec<f64>>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            rows: vec![vec![0.0; kl + ku + 1]; n],
        }
    }

    /// Symmetric band matrix from its diagonal and `k` super-diagonals,
    /// `diags[d][i] = A[i][i + d]`.
    pub fn symmetric(diags: &[Vec<f64>]) -> Self {
        let n = diags[0].len();
        let k = diags.len() - 1;
        let mut m = Self::zeros(n, k, k);
        for (d, diag) in diags.iter().enumerate() {
            for (i, &v) in diag.iter().enumerate().take(n - d) {
                m.set(i, i + d, v);
                m.set(i + d, i, v);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.kl < r || c > r + self.ku {
            0.0
        } else {
            self.rows[r][c + self.kl - r]
        }
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(c + self.kl >= r && c <= r + self.ku, "outside band");
        self.rows[r][c + self.kl - r] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    /// Factors `A − shift·I`.
    pub fn lu_shifted(&self, shift: f64) -> BandLu {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let width = 2 * kl + ku + 1;
        let mut start: Vec<isize> = (0..n).map(|r| r as isize - kl as isize).collect();
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                let mut w = vec![0.0; width];
                for (o, slot) in w.iter_mut().enumerate().take(kl + ku + 1) {
                    let c = r as isize - kl as isize + o as isize;
                    if c >= 0 && (c as usize) < n {
                        *slot = self.get(r, c as usize) - if c as usize == r { shift } else { 0.0 };
                    }
                }
                w
            })
            .collect();
        let at = |rows: &Vec<Vec<f64>>, start: &Vec<isize>, r: usize, c: usize| -> f64 {
            let o = c as isize - start[r];
            if o < 0 || o as usize >= width {
                0.0
            } else {
                rows[r][o as usize]
            }
        };
        let mut piv = vec![0; n];
        let mut mult = vec![vec![0.0; kl]; n];
        let tiny = f64::MIN_POSITIVE.sqrt();
        for i in 0..n {
            let last = (i + kl).min(n - 1);
            let mut p = i;
            let mut best = at(&rows, &start, i, i).abs();
            for r in i + 1..=last {
                let v = at(&rows, &start, r, i).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[i] = p;
            if p != i {
                rows.swap(i, p);
                start.swap(i, p);
                // Columns left of `i` are already eliminated in both rows;
                // re-basing at `i` keeps every later update inside the window.
                for r in [i, p] {
                    let shift = (i as isize - start[r]) as usize;
                    rows[r].rotate_left(shift);
                    rows[r][width - shift..].iter_mut().for_each(|v| *v = 0.0);
                    start[r] = i as isize;
                }
            }
            let o = (i as isize - start[i]) as usize;
            if rows[i][o] == 0.0 {
                rows[i][o] = tiny;
            }
            let pivot = rows[i][o];
            let cmax = (i + kl + ku).min(n - 1);
            for r in i + 1..=last {
                let f = at(&rows, &start, r, i) / pivot;
                mult[i][r - i - 1] = f;
                if f == 0.0 {
                    continue;
                }
                for c in i..=cmax {
                    let v = at(&rows, &start, i, c);
                    if v != 0.0 {
                        let oc = (c as isize - start[r]) as usize;
                        rows[r][oc] -= f * v;
                    }
                }
            }
        }
        let upper = (0..n)
            .map(|i| {
                let cmax = (i + kl + ku).min(n - 1);
                (i..=cmax).map(|c| at(&rows, &start, i, c)).collect()
            })
            .collect();
        BandLu {
            n,
            kl,
            piv,
            mult,
            upper,
        }
    }
}

/// `P A = L U` in band form.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    piv: Vec<usize>,
    mult: Vec<Vec<f64>>,
    /// Row `i` of `U` over columns `i..=i + kl + ku`.
    upper: Vec<Vec<f64>>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut b = rhs.to_vec();
        for i in 0..n {
            b.swap(i, self.piv[i]);
            for j in 0..self.kl.min(n - 1 - i) {
                b[i + 1 + j] -= self.mult[i][j] * b[i];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let row = &self.upper[i];
            let mut s = b[i];
            for (o, &v) in row.iter().enumerate().skip(1) {
                s -= v * x[i + o];
            }
            x[i] = s / row[0];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_shifted_pentadiagonal() {
        let n = 40;
        let diags = vec![
            (0..n).map(|i| 3.0 + (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
            (0..n).map(|i| 1.0 + 0.1 * i as f64).collect(),
            (0..n).map(|i| -0.5 + 0.01 * i as f64).collect(),
        ];
        let a = BandMatrix::symmetric(&diags);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        for shift in [0.0, 2.7, -1.3, 5.0] {
            let ax = a.matvec(&x);
            let b: Vec<f64> = ax.iter().zip(&x).map(|(v, xi)| v - shift * xi).collect();
            let got = a.lu_shifted(shift).solve(&b);
            let err = got
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "shift {shift}: {err}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] needs a row swap.
        let a = BandMatrix::symmetric(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let x = a.lu_shifted(0.0).solve(&[2.0, 3.0]);
        assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }
}
