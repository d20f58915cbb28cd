//! Restarted GMRES with a diagonal (Jacobi) right preconditioner.

use num_complex::Complex64 as C64;

/// A square linear map applied without forming its matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

#[derive(Debug, Clone)]
pub struct GmresConfig {
    /// Krylov subspace size between restarts.
    pub restart: usize,
    /// Cap on the total number of inner iterations.
    pub max_iterations: usize,
    /// Absolute target for the 2-norm of `b − A x`.
    pub tolerance: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iterations: 5000,
            tolerance: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// True residual 2-norm at exit.
    pub residual: f64,
    pub converged: bool,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn residual(op: &dyn LinearOperator, x: &[C64], b: &[C64], scratch: &mut [C64]) -> Vec<C64> {
    op.apply(x, scratch);
    b.iter().zip(scratch.iter()).map(|(bi, ai)| bi - ai).collect()
}

/// Solve `A x = b`; `diagonal` (if given) is used as the preconditioner `M = diag(d)`.
pub fn gmres(
    op: &dyn LinearOperator,
    b: &[C64],
    diagonal: Option<&[C64]>,
    config: &GmresConfig,
) -> GmresOutcome {
    let n = op.dim();
    assert_eq!(b.len(), n, "rhs dimension mismatch");
    let zero = C64::new(0.0, 0.0);
    let inv_diag: Vec<C64> = match diagonal {
        Some(d) => d.iter().map(|v| 1.0 / v).collect(),
        None => vec![C64::new(1.0, 0.0); n],
    };
    let mut x = vec![zero; n];
    let mut scratch = vec![zero; n];
    let mut r = b.to_vec();
    let mut r_norm = norm(&r);
    let mut iterations = 0;
    let m = config.restart.max(1).min(n.max(1));

    while r_norm > config.tolerance && iterations < config.max_iterations {
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / r_norm).collect());
        // Hessenberg columns, Givens rotations, and the rotated rhs.
        let mut h: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<C64> = Vec::with_capacity(m);
        let mut g = vec![zero; m + 1];
        g[0] = C64::new(r_norm, 0.0);
        let mut k = 0;
        while k < m && iterations < config.max_iterations {
            let z: Vec<C64> = basis[k].iter().zip(&inv_diag).map(|(v, d)| v * d).collect();
            let mut w = vec![zero; n];
            op.apply(&z, &mut w);
            let mut col = vec![zero; k + 2];
            for (j, q) in basis.iter().enumerate() {
                let hij = dotc(q, &w);
                col[j] = hij;
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= hij * qi;
                }
            }
            let w_norm = norm(&w);
            col[k + 1] = C64::new(w_norm, 0.0);
            for j in 0..k {
                let t = cs[j] * col[j] + sn[j] * col[j + 1];
                col[j + 1] = -sn[j].conj() * col[j] + cs[j] * col[j + 1];
                col[j] = t;
            }
            let (c, s) = givens(col[k], col[k + 1]);
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = zero;
            g[k + 1] = -s.conj() * g[k];
            g[k] *= c;
            cs.push(c);
            sn.push(s);
            h.push(col);
            iterations += 1;
            k += 1;
            if g[k].norm() <= config.tolerance * 0.5 || w_norm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }
        // Back-substitute the k × k triangular system.
        let mut y = vec![zero; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k {
                acc -= h[j][i] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for ((xi, qi), di) in x.iter_mut().zip(&basis[j]).zip(&inv_diag) {
                *xi += yj * qi * di;
            }
        }
        r = residual(op, &x, b, &mut scratch);
        let new_norm = norm(&r);
        if !(new_norm < r_norm) && new_norm > config.tolerance {
            // Stagnation: no progress over a full cycle.
            r_norm = new_norm;
            break;
        }
        r_norm = new_norm;
    }

    GmresOutcome {
        x,
        iterations,
        residual: r_norm,
        converged: r_norm <= config.tolerance,
    }
}

fn givens(a: C64, b: C64) -> (f64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if an == 0.0 {
        return (0.0, b.conj() / bn);
    }
    let scale = (an * an + bn * bn).sqrt();
    let c = an / scale;
    let s = (a / an) * b.conj() / scale;
    (c, s)
}
