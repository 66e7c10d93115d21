//! Truncated Taylor jets in the two phase-space directions `(ξ, x)`.
//!
//! A [`Jet`] of degree `d` stores the coefficients `c[i][j]` of
//! `Σ_{i+j≤d} c[i][j] · δξ^i · δx^j` around an expansion point. Arithmetic on
//! jets is exact truncated polynomial arithmetic, so partial derivatives of
//! composite symbols come out exact up to rounding. This is what feeds the
//! composition formula and the square-root construction in
//! [`crate::symbolcalc`].

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    degree: usize,
    coeffs: Vec<C64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl Jet {
    pub fn constant(value: impl Into<C64>, degree: usize) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); (degree + 1) * (degree + 1)];
        coeffs[0] = value.into();
        Self { degree, coeffs }
    }

    /// The coordinate function `ξ` expanded around `value`.
    pub fn var_xi(value: f64, degree: usize) -> Self {
        let mut j = Self::constant(value, degree);
        if degree >= 1 {
            j.set(1, 0, C64::new(1.0, 0.0));
        }
        j
    }

    /// The coordinate function `x` expanded around `value`.
    pub fn var_x(value: f64, degree: usize) -> Self {
        let mut j = Self::constant(value, degree);
        if degree >= 1 {
            j.set(0, 1, C64::new(1.0, 0.0));
        }
        j
    }

    /// Build a jet depending on `x` only from derivatives `[f, f', f'', ...]`.
    pub fn from_x_derivatives(derivs: &[f64], degree: usize) -> Self {
        let mut j = Self::constant(0.0, degree);
        for (k, d) in derivs.iter().enumerate().take(degree + 1) {
            j.set(0, k, C64::new(d / factorial(k), 0.0));
        }
        j
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.degree + 1) + j
    }

    /// Raw Taylor coefficient of `δξ^i δx^j` (zero beyond the degree).
    pub fn coeff(&self, i: usize, j: usize) -> C64 {
        if i + j > self.degree {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[self.idx(i, j)]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: C64) {
        let k = self.idx(i, j);
        self.coeffs[k] = v;
    }

    pub fn value(&self) -> C64 {
        self.coeffs[0]
    }

    /// Partial derivative `∂_ξ^i ∂_x^j` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> C64 {
        self.coeff(i, j) * (factorial(i) * factorial(j))
    }

    pub fn truncate(&self, degree: usize) -> Self {
        let degree = degree.min(self.degree);
        let mut out = Self::constant(0.0, degree);
        for i in 0..=degree {
            for j in 0..=degree - i {
                out.set(i, j, self.coeff(i, j));
            }
        }
        out
    }

    /// `∂_ξ^k` of the jet, one degree lower per derivative.
    pub fn d_xi(&self, k: usize) -> Self {
        self.shifted(k, 0)
    }

    /// `∂_x^k` of the jet.
    pub fn d_x(&self, k: usize) -> Self {
        self.shifted(0, k)
    }

    fn shifted(&self, a: usize, b: usize) -> Self {
        let k = a + b;
        if k > self.degree {
            return Self::constant(0.0, 0);
        }
        let degree = self.degree - k;
        let mut out = Self::constant(0.0, degree);
        for i in 0..=degree {
            for j in 0..=degree - i {
                let ii = i + a;
                let jj = j + b;
                let f = factorial(ii) / factorial(i) * factorial(jj) / factorial(j);
                out.set(i, j, self.coeff(ii, jj) * f);
            }
        }
        out
    }

    pub fn scale(&self, s: impl Into<C64>) -> Self {
        let s = s.into();
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: impl Into<C64>) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += s.into();
        out
    }

    pub fn conj(&self) -> Self {
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Apply a scalar function given its derivatives `f^(n)(u0)`, n = 0..=degree,
    /// at the constant term `u0` of `self`.
    pub fn compose_scalar(&self, derivs: &[C64]) -> Self {
        let d = self.degree;
        let mut delta = self.clone();
        delta.coeffs[0] = C64::new(0.0, 0.0);
        let mut out = Self::constant(derivs[0], d);
        let mut power = Self::constant(1.0, d);
        for (n, dn) in derivs.iter().enumerate().take(d + 1).skip(1) {
            power = &power * &delta;
            let w = dn / factorial(n);
            for (o, p) in out.coeffs.iter_mut().zip(&power.coeffs) {
                *o += p * w;
            }
        }
        out
    }

    pub fn powf(&self, p: f64) -> Self {
        let u0 = self.value();
        let mut derivs = Vec::with_capacity(self.degree + 1);
        let mut coef = 1.0;
        for n in 0..=self.degree {
            derivs.push(u0.powf(p - n as f64) * coef);
            coef *= p - n as f64;
        }
        self.compose_scalar(&derivs)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Self {
        let u0 = self.value();
        let mut derivs = Vec::with_capacity(self.degree + 1);
        let mut coef = 1.0;
        for n in 0..=self.degree {
            derivs.push(coef / u0.powu(n as u32 + 1));
            coef *= -(n as f64 + 1.0);
        }
        self.compose_scalar(&derivs)
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose_scalar(&vec![e; self.degree + 1])
    }

    pub fn sin(&self) -> Self {
        let u0 = self.value();
        let cycle = [u0.sin(), u0.cos(), -u0.sin(), -u0.cos()];
        let derivs: Vec<C64> = (0..=self.degree).map(|n| cycle[n % 4]).collect();
        self.compose_scalar(&derivs)
    }

    pub fn div(&self, other: &Jet) -> Self {
        self * &other.recip()
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let d = self.degree.min(rhs.degree);
        let mut out = Jet::constant(0.0, d);
        for i in 0..=d {
            for j in 0..=d - i {
                out.set(i, j, self.coeff(i, j) + rhs.coeff(i, j));
            }
        }
        out
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self + &(-rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let d = self.degree.min(rhs.degree);
        let mut out = Jet::constant(0.0, d);
        for i1 in 0..=d {
            for j1 in 0..=d - i1 {
                let a = self.coeff(i1, j1);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for i2 in 0..=d - i1 - j1 {
                    for j2 in 0..=d - i1 - j1 - i2 {
                        let k = out.idx(i1 + i2, j1 + j2);
                        out.coeffs[k] += a * rhs.coeff(i2, j2);
                    }
                }
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}
