//! Matrix-free Krylov solvers used by the one-way stepper on large grids.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Arnoldi step: orthogonalize `w` against `basis` (two passes of modified
/// Gram–Schmidt) and return the Hessenberg column and the norm of the rest.
fn orthogonalize(basis: &[Vec<C64>], w: &mut [C64]) -> (Vec<C64>, f64) {
    let mut h = vec![C64::new(0.0, 0.0); basis.len()];
    for _ in 0..2 {
        for (i, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            h[i] += c;
            axpy(w, -c, v);
        }
    }
    (h, norm(w))
}

/// Restarted GMRES for `A x = b`. Returns the solution and the iteration count.
pub fn gmres(
    mut apply: impl FnMut(&[C64]) -> Vec<C64>,
    b: &[C64],
    x0: Option<&[C64]>,
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<C64>, usize)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![C64::new(0.0, 0.0); n]);
    if bnorm == 0.0 {
        return Ok((vec![C64::new(0.0, 0.0); n], 0));
    }
    let m = restart.max(1).min(n);
    let mut iters = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= rel_tol * bnorm {
            return Ok((x, iters));
        }
        if iters >= max_iter {
            return Err(Error::numeric(format!(
                "GMRES stalled at relative residual {:e} after {iters} iterations",
                beta / bnorm
            )));
        }
        let mut basis = vec![r.iter().map(|v| v / beta).collect::<Vec<_>>()];
        let mut hcols: Vec<Vec<C64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<C64> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        let mut k = 0;
        for j in 0..m {
            let mut w = apply(&basis[j]);
            let (mut h, hn) = orthogonalize(&basis, &mut w);
            h.push(C64::new(hn, 0.0));
            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i].conj() * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let (a, bb) = (h[j], h[j + 1]);
            let d = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if a.norm() == 0.0 {
                (0.0, C64::new(1.0, 0.0))
            } else {
                (a.norm() / d, a / a.norm() * bb.conj() / d)
            };
            h[j] = c * a + s * bb;
            h[j + 1] = C64::new(0.0, 0.0);
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g.push(-s.conj() * gj);
            g[j] = c * gj;
            hcols.push(h);
            k = j + 1;
            iters += 1;
            if g[j + 1].norm() <= rel_tol * bnorm || hn == 0.0 || iters >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the triangular factor
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for l in i + 1..k {
                acc -= hcols[l][i] * y[l];
            }
            y[i] = acc / hcols[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            axpy(&mut x, *yi, &basis[i]);
        }
    }
}

/// `exp(t·A) v` by Arnoldi projection, with substepping when the Krylov
/// space of dimension `max_dim` does not reach `rel_tol`.
pub fn expm_krylov(
    mut apply: impl FnMut(&[C64]) -> Vec<C64>,
    v: &[C64],
    t: f64,
    rel_tol: f64,
    max_dim: usize,
) -> Result<Vec<C64>> {
    let mut w = v.to_vec();
    let mut done = 0.0;
    let mut dt = t;
    let mut guard = 0;
    while (t - done).abs() > 1e-15 * t.abs() {
        if (done + dt - t) * t.signum() > 0.0 {
            dt = t - done;
        }
        match expm_krylov_once(&mut apply, &w, dt, rel_tol, max_dim)? {
            Some(next) => {
                w = next;
                done += dt;
            }
            None => {
                dt *= 0.5;
                guard += 1;
                if guard > 60 {
                    return Err(Error::numeric("Krylov exponential did not converge"));
                }
            }
        }
    }
    Ok(w)
}

fn expm_krylov_once(
    apply: &mut impl FnMut(&[C64]) -> Vec<C64>,
    v: &[C64],
    t: f64,
    rel_tol: f64,
    max_dim: usize,
) -> Result<Option<Vec<C64>>> {
    let beta = norm(v);
    if beta == 0.0 {
        return Ok(Some(v.to_vec()));
    }
    let m = max_dim.min(v.len()).max(1);
    let mut basis = vec![v.iter().map(|c| c / beta).collect::<Vec<_>>()];
    let mut hess = DMatrix::<C64>::zeros(m + 1, m);
    for j in 0..m {
        let mut w = apply(&basis[j]);
        let (h, hn) = orthogonalize(&basis, &mut w);
        for (i, hi) in h.iter().enumerate() {
            hess[(i, j)] = *hi;
        }
        hess[(j + 1, j)] = C64::new(hn, 0.0);
        let k = j + 1;
        // the small exponential is the dominant cost, so test convergence every few dimensions
        if k % 4 != 0 && k != m && hn > 1e-14 {
            basis.push(w.iter().map(|c| c / hn).collect());
            continue;
        }
        let small = hess.view((0, 0), (k, k)) * C64::new(t, 0.0);
        let e = small.exp();
        if e.iter().any(|c| !c.is_finite()) {
            return Err(Error::numeric("non-finite Krylov exponential"));
        }
        let err = hn * t.abs() * e[(k - 1, 0)].norm();
        if err <= rel_tol || hn <= 1e-14 {
            let mut out = vec![C64::new(0.0, 0.0); v.len()];
            for i in 0..k {
                axpy(&mut out, e[(i, 0)] * beta, &basis[i]);
            }
            return Ok(Some(out));
        }
        if k == m {
            return Ok(None);
        }
        basis.push(w.iter().map(|c| c / hn).collect());
    }
    Ok(None)
}
