//! Lateral discretization of pseudodifferential operators at fixed `(z, τ)`.
//!
//! The quantization is Kohn–Nirenberg on a periodic grid:
//! `(Op σ f)(x_j) = Σ_k σ(x_j, ξ_k) e^{iξ_k x_j} f̂_k` with
//! `f̂_k = N⁻¹ Σ_l f_l e^{−iξ_k x_l}`. Wavenumbers are stored in FFT order.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::symbolcalc::SymbolFn;
use crate::symbols::PhasePoint;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(n)
        } else {
            p.plan_fft_inverse(n)
        }
    })
}

/// Unnormalized forward DFT, `Σ_l f_l e^{−2πikl/N}`, in place.
pub fn fft_forward(v: &mut [C64]) {
    plan(v.len(), true).process(v);
}

/// Unnormalized inverse DFT, `Σ_k f_k e^{2πikl/N}`, in place.
pub fn fft_inverse(v: &mut [C64]) {
    plan(v.len(), false).process(v);
}

/// Periodic lateral grid `x_j = x0 + j·dx`, `j < n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LateralGrid {
    pub n: usize,
    pub dx: f64,
    pub x0: f64,
}

impl LateralGrid {
    pub fn new(n: usize, dx: f64, x0: f64) -> Result<Self> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(Error::config(format!("lateral grid needs an even N >= 16, got {n}")));
        }
        if !(dx > 0.0) || !x0.is_finite() {
            return Err(Error::config("lateral grid needs dx > 0 and a finite origin"));
        }
        Ok(Self { n, dx, x0 })
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.n as f64 * self.dx
    }

    /// Wavenumber of FFT bin `k`, in `[−π/dx, π/dx)`.
    pub fn xi(&self, k: usize) -> f64 {
        let n = self.n as i64;
        let k = k as i64;
        let kk = if k < n / 2 { k } else { k - n };
        2.0 * PI * kk as f64 / self.length()
    }

    pub fn xis(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.xi(k)).collect()
    }
}

/// Values `u(z, x_j, τ)` on a lateral grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqField {
    pub grid: LateralGrid,
    pub tau: f64,
    pub z: f64,
    pub values: Vec<C64>,
}

impl FreqField {
    pub fn new(grid: LateralGrid, tau: f64, z: f64, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::config(format!(
                "field has {} values on a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        Ok(Self { grid, tau, z, values })
    }

    pub fn zeros(grid: LateralGrid, tau: f64, z: f64) -> Self {
        Self { grid, tau, z, values: vec![C64::new(0.0, 0.0); grid.n] }
    }

    /// Discrete L2 norm `(Σ|u_j|² dx)^½`.
    pub fn norm(&self) -> f64 {
        l2_norm(&self.values) * self.grid.dx.sqrt()
    }
}

pub fn l2_norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Symbol samples `σ(x_j, ξ_k)` on a lateral grid, with matrix-free action.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    pub grid: LateralGrid,
    /// Row `j` holds `σ(x_j, ξ_k)` for `k` in FFT order.
    values: Vec<C64>,
    /// `e^{2πim/N}`, `m < N`.
    twiddle: Vec<C64>,
}

fn twiddles(n: usize) -> Vec<C64> {
    (0..n).map(|m| C64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64)).collect()
}

impl SymbolTable {
    pub fn from_fn(grid: LateralGrid, mut f: impl FnMut(usize, f64, f64) -> Result<C64>) -> Result<Self> {
        let n = grid.n;
        let xis = grid.xis();
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            let x = grid.x(j);
            for &xi in &xis {
                values.push(f(j, x, xi)?);
            }
        }
        Ok(Self { grid, values, twiddle: twiddles(n) })
    }

    pub fn from_symbol(sym: &dyn SymbolFn, z: f64, tau: f64, grid: LateralGrid) -> Result<Self> {
        if tau == 0.0 {
            return Err(Error::domain("assembly requires tau != 0"));
        }
        Self::from_fn(grid, |_, x, xi| sym.eval(&PhasePoint::new(z, x, xi, tau)))
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.values[j * self.grid.n + k]
    }

    pub fn row(&self, j: usize) -> &[C64] {
        let n = self.grid.n;
        &self.values[j * n..(j + 1) * n]
    }

    /// Whether every row is identical (the symbol is independent of `x`).
    pub fn is_multiplier(&self) -> bool {
        let r0 = self.row(0);
        (1..self.grid.n).all(|j| self.row(j) == r0)
    }

    /// Dense matrix `M_jl = N⁻¹ Σ_k σ(x_j, ξ_k) e^{iξ_k(x_j − x_l)}`.
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let n = self.grid.n;
        let mut m = DMatrix::zeros(n, n);
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let inv_n = 1.0 / n as f64;
        for j in 0..n {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = self.get(j, k) * self.twiddle[(k * j) % n];
            }
            fft_forward(&mut buf);
            for l in 0..n {
                m[(j, l)] = buf[l] * inv_n;
            }
        }
        m
    }

    /// `M f` in `O(N²)`.
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let n = self.grid.n;
        let mut fh = f.to_vec();
        fft_forward(&mut fh);
        let inv_n = 1.0 / n as f64;
        (0..n)
            .map(|j| {
                let row = self.row(j);
                let mut acc = C64::new(0.0, 0.0);
                let mut m = 0;
                for k in 0..n {
                    acc += row[k] * self.twiddle[m] * fh[k];
                    m += j;
                    if m >= n {
                        m -= n;
                    }
                }
                acc * inv_n
            })
            .collect()
    }

    /// `M† g` in `O(N²)`.
    pub fn apply_adjoint(&self, g: &[C64]) -> Vec<C64> {
        let n = self.grid.n;
        let mut w = vec![C64::new(0.0, 0.0); n];
        for (j, gj) in g.iter().enumerate() {
            if *gj == C64::new(0.0, 0.0) {
                continue;
            }
            let row = self.row(j);
            let mut m = 0;
            for k in 0..n {
                // conj(e^{2πikj/N}) = e^{2πik(N−j)/N}
                w[k] += row[k].conj() * self.twiddle[(n - m) % n] * gj;
                m += j;
                if m >= n {
                    m -= n;
                }
            }
        }
        fft_inverse(&mut w);
        let inv_n = 1.0 / n as f64;
        w.iter_mut().for_each(|v| *v *= inv_n);
        w
    }
}

/// Kohn–Nirenberg matrix of `sym` at depth `z` and frequency `τ`.
pub fn assemble_matrix(sym: &dyn SymbolFn, z: f64, tau: f64, grid: LateralGrid) -> Result<DMatrix<C64>> {
    Ok(SymbolTable::from_symbol(sym, z, tau, grid)?.to_matrix())
}

/// `F⁻¹(σ·F f)` for an `x`-independent symbol given per FFT bin.
pub fn multiply(sym_values: &[C64], f: &[C64]) -> Vec<C64> {
    let n = f.len();
    let mut v = f.to_vec();
    fft_forward(&mut v);
    for (a, s) in v.iter_mut().zip(sym_values) {
        *a *= s;
    }
    fft_inverse(&mut v);
    let inv_n = 1.0 / n as f64;
    v.iter_mut().for_each(|a| *a *= inv_n);
    v
}

/// Fast path for `x`-independent symbols.
pub fn apply_multiplier(sym_values: &[C64], f: &FreqField) -> Result<FreqField> {
    if sym_values.len() != f.grid.n {
        return Err(Error::config("multiplier length differs from the grid size"));
    }
    Ok(FreqField { values: multiply(sym_values, &f.values), ..f.clone() })
}

/// `(M + M†)/2`
pub fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::from(0.5)
}
