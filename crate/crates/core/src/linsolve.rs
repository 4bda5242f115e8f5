//! Sparse row storage plus the two solvers used for the stream-function system:
//! a banded LU factorization and successive over-relaxation.

/// Compressed sparse rows.
#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Appends the next row; entries must be given for row `row_ptr.len() - 1`.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(c, v) in entries {
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.row(i)
            .find(|&(c, _)| c == i)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(c, _)| c.abs_diff(i)))
            .max()
            .unwrap_or(0)
    }

    pub fn mul_row(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(c, v)| v * x[c]).sum()
    }
}

/// Dense band LU without pivoting. Suitable for the diagonally dominant
/// M-matrices produced by the stencil assembly. Returns `None` on a zero pivot.
pub fn band_lu_solve(a: &CsrMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n;
    if n == 0 {
        return Some(Vec::new());
    }
    let bw = a.bandwidth();
    let width = 2 * bw + 1;
    let mut band = vec![0.0; n * width];
    let at = |i: usize, j: usize| i * width + (j + bw - i);
    for i in 0..n {
        for (j, v) in a.row(i) {
            band[at(i, j)] += v;
        }
    }
    for k in 0..n {
        let pivot = band[at(k, k)];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        let last = (k + bw).min(n - 1);
        for i in (k + 1)..=last {
            let l = band[at(i, k)] / pivot;
            if l == 0.0 {
                continue;
            }
            band[at(i, k)] = l;
            let (src, dst) = (at(k, k + 1), at(i, k + 1));
            let len = last - k;
            for off in 0..len {
                band[dst + off] -= l * band[src + off];
            }
        }
    }
    let mut x = b.to_vec();
    for i in 0..n {
        let first = i.saturating_sub(bw);
        let mut s = x[i];
        for j in first..i {
            s -= band[at(i, j)] * x[j];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let last = (i + bw).min(n - 1);
        let mut s = x[i];
        for j in (i + 1)..=last {
            s -= band[at(i, j)] * x[j];
        }
        x[i] = s / band[at(i, i)];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SorReport {
    pub sweeps: usize,
    pub converged: bool,
    /// Max diagonal-scaled defect at exit.
    pub defect: f64,
}

/// Successive over-relaxation in natural row order. Stops when the diagonal-scaled
/// defect drops to `tol` or after `max_sweeps`.
pub fn sor_solve(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    omega: f64,
    max_sweeps: usize,
    tol: f64,
) -> SorReport {
    let diag: Vec<f64> = (0..a.n).map(|i| a.diag(i)).collect();
    let defect = |x: &[f64]| {
        (0..a.n)
            .map(|i| ((a.mul_row(i, x) - b[i]) / diag[i]).abs())
            .fold(0.0, f64::max)
    };
    let mut sweeps = 0;
    let mut current = defect(x);
    while current > tol && sweeps < max_sweeps {
        for i in 0..a.n {
            let mut s = b[i];
            for (c, v) in a.row(i) {
                if c != i {
                    s -= v * x[c];
                }
            }
            x[i] += omega * (s / diag[i] - x[i]);
        }
        sweeps += 1;
        if sweeps % 10 == 0 || sweeps == max_sweeps {
            current = defect(x);
        }
    }
    SorReport {
        sweeps,
        converged: current <= tol,
        defect: current,
    }
}
