//! Compressed sparse rows and Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<u32>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
            *out = self.cols[a..b]
                .iter()
                .zip(&self.vals[a..b])
                .map(|(&c, &v)| v * x[c as usize])
                .sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let (a, b) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
                self.cols[a..b]
                    .binary_search(&(r as u32))
                    .map_or(0.0, |k| self.vals[a + k])
            })
            .collect()
    }

    /// Position of entry `(r, c)` in `vals`, if present in the pattern.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
        self.cols[a..b].binary_search(&(c as u32)).ok().map(|k| a + k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub rel_tol: f64,
    /// Iteration cap is `cap_factor * sqrt(n)` (at least 100).
    pub cap_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rel_tol: 1e-10,
            cap_factor: 50.0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `a x = b` for symmetric positive definite `a`.
///
/// Converged means the true residual satisfies `|b - a x| <= rel_tol |b|`.
/// Returns the solution and the iteration count.
pub fn pcg(a: &CsrMatrix, b: &[f64], settings: &SolverSettings) -> Result<(Vec<f64>, usize)> {
    let n = a.n;
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let max_iter = ((settings.cap_factor * (n as f64).sqrt()).ceil() as usize).max(100);
    let target = settings.rel_tol * bnorm;
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        if norm(&r) <= 0.5 * target {
            // confirm with the true residual; recursion drifts slightly
            a.matvec(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            if norm(&r) <= target {
                return Ok((x, iterations));
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
    a.matvec(&x, &mut ap);
    let res = b.iter().zip(&ap).map(|(b, ax)| (b - ax).powi(2)).sum::<f64>().sqrt() / bnorm;
    if res <= settings.rel_tol {
        return Ok((x, iterations));
    }
    Err(Error::SolverDiverged {
        iterations,
        residual: res,
    })
}
