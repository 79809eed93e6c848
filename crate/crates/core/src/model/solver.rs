//! Jacobi-preconditioned conjugate gradients for symmetric positive definite
//! systems given as a sparse matrix plus low-rank terms.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("operator is not positive definite along a search direction")]
    Indefinite,
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Keep the nonzeros of a dense row-major square matrix.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for r in 0..n {
            for c in 0..n {
                let v = dense[r * n + c];
                if v != 0.0 {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { n, indptr, indices, data }
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            out[r] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).find(|&k| self.indices[k] == r).map_or(0.0, |k| self.data[k]))
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }
}

/// `A + sum_i w_i u_i u_i'` with `A` sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankUpdated {
    pub base: CsrMatrix,
    pub terms: Vec<(f64, Vec<f64>)>,
}

impl LowRankUpdated {
    pub fn dim(&self) -> usize {
        self.base.n
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.base.mul_vec(x, out);
        for (w, u) in &self.terms {
            let s = w * dot(u, x);
            if s != 0.0 {
                for (o, ui) in out.iter_mut().zip(u) {
                    *o += s * ui;
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = self.base.diagonal();
        for (w, u) in &self.terms {
            for (di, ui) in d.iter_mut().zip(u) {
                *di += w * ui * ui;
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `||b - M x|| / ||b||`, recomputed from scratch at exit.
    pub rel_residual: f64,
}

/// Solve `M x = b` to relative residual `tol`.
pub fn pcg(m: &LowRankUpdated, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats), SolverError> {
    let n = m.dim();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveStats { iterations: 0, rel_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = m.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    // Recompute the true residual every so often to stop drift.
    const RESTART: usize = 50;
    let mut checks = 0;
    while it < max_iter {
        if norm(&r) / bnorm <= tol {
            // Confirm against the true residual before stopping.
            m.apply(&x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
            checks += 1;
            if norm(&r) / bnorm <= tol || checks > 3 {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            rz = dot(&r, &z);
            p.copy_from_slice(&z);
            continue;
        }
        m.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            if norm(&r) / bnorm <= tol.max(1e-14) {
                break;
            }
            return Err(SolverError::Indefinite);
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        it += 1;
        if it % RESTART == 0 {
            m.apply(&x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = true_residual(m, &x, b) / bnorm;
    if rel <= tol || (it < max_iter && rel <= tol * 100.0) {
        Ok((x, SolveStats { iterations: it, rel_residual: rel }))
    } else {
        Err(SolverError::NotConverged { iterations: it, residual: rel })
    }
}

fn true_residual(m: &LowRankUpdated, x: &[f64], b: &[f64]) -> f64 {
    let mut q = vec![0.0; x.len()];
    m.apply(x, &mut q);
    q.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let dense = [4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 2.0];
        let m = LowRankUpdated { base: CsrMatrix::from_dense(3, &dense), terms: vec![(2.0, vec![1.0, 1.0, 1.0])] };
        let b = [1.0, 2.0, 3.0];
        let (x, st) = pcg(&m, &b, 1e-14, 100).unwrap();
        let mut out = [0.0; 3];
        m.apply(&x, &mut out);
        for i in 0..3 {
            assert!((out[i] - b[i]).abs() < 1e-12);
        }
        assert!(st.rel_residual <= 1e-14 * 10.0);
        assert_eq!(m.base.nnz(), 5);
    }

    #[test]
    fn reports_non_convergence() {
        let n = 40;
        let dense: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { (1 + k / n) as f64 * 1e3 } else { 1.0 }).collect();
        let m = LowRankUpdated { base: CsrMatrix::from_dense(n, &dense), terms: vec![] };
        let b = vec![1.0; n];
        assert!(matches!(pcg(&m, &b, 1e-15, 1), Err(SolverError::NotConverged { iterations: 1, .. })));
    }

    #[test]
    fn zero_rhs() {
        let m = LowRankUpdated { base: CsrMatrix::from_dense(1, &[1.0]), terms: vec![] };
        assert_eq!(pcg(&m, &[0.0], 1e-12, 10).unwrap().0, vec![0.0]);
    }
}
