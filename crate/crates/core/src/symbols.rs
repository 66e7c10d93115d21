//! Phase-space symbols of the one-way operator.
//!
//! Conventions: `ξ` is the lateral wavenumber, `τ` the temporal frequency,
//! plane waves are `exp(i(ξx + ζz + τt))`. The vertical slowness
//! `b = −τν√(1 − ν⁻²τ⁻²ξ²)` satisfies `sgn(b) = −sgn(τ)`, and `+b` is the
//! downgoing root of the characteristic equation.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::medium::{Medium, MediumPoint};

/// Lower bound applied to `1 − sin²(angle)` by the smooth extension of `b`.
pub const Y_FLOOR: f64 = 0.01;

/// A point `(z, x, ξ, τ)` of reduced phase space, optionally with `ζ` and `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub z: f64,
    pub x: f64,
    pub xi: f64,
    pub tau: f64,
    pub zeta: Option<f64>,
    pub t: Option<f64>,
}

impl PhasePoint {
    pub fn new(z: f64, x: f64, xi: f64, tau: f64) -> Self {
        Self { z, x, xi, tau, zeta: None, t: None }
    }

    /// The point with `(ξ, τ)` scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self { xi: self.xi * lambda, tau: self.tau * lambda, ..*self }
    }

    /// `‖(ξ, τ)‖`
    pub fn freq_norm(&self) -> f64 {
        self.xi.hypot(self.tau)
    }
}

/// Angular cones `I'_θ1 ⊂ I'_θ2` and the bound `|ζ| < C|τ|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeConfig {
    /// Radians.
    pub theta1: f64,
    /// Radians.
    pub theta2: f64,
    pub c_zeta: f64,
}

impl ConeConfig {
    pub fn new(theta1: f64, theta2: f64, c_zeta: f64) -> Result<Self> {
        let c = Self { theta1, theta2, c_zeta };
        c.validate()?;
        Ok(c)
    }

    pub fn from_degrees(theta1: f64, theta2: f64, c_zeta: f64) -> Result<Self> {
        Self::new(theta1.to_radians(), theta2.to_radians(), c_zeta)
    }

    /// 45°, 70° and `C = 2 ν_max`.
    pub fn default_for(m: &Medium) -> Self {
        Self {
            theta1: 45f64.to_radians(),
            theta2: 70f64.to_radians(),
            c_zeta: 2.0 * m.bounds().nu_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(0.0 < self.theta1 && self.theta1 < self.theta2 && self.theta2 < half_pi) {
            return Err(Error::config(format!(
                "ConeConfig requires 0 < theta1 < theta2 < 90 degrees, got theta1 = {:.4} deg, theta2 = {:.4} deg",
                self.theta1.to_degrees(),
                self.theta2.to_degrees()
            )));
        }
        if self.theta2.cos().powi(2) <= Y_FLOOR {
            return Err(Error::config(format!(
                "ConeConfig theta2 = {:.3} deg leaves no room for the extension floor (cos^2 theta2 must exceed {Y_FLOOR})",
                self.theta2.to_degrees()
            )));
        }
        if !(self.c_zeta > 0.0) {
            return Err(Error::config("ConeConfig c_zeta must be positive"));
        }
        Ok(())
    }

    /// Checks `C ≥ ν_max` for the medium.
    pub fn validate_for(&self, m: &Medium) -> Result<()> {
        self.validate()?;
        let nu_max = m.bounds().nu_max;
        if self.c_zeta < nu_max {
            return Err(Error::config(format!(
                "ConeConfig c_zeta = {} is below the medium's maximum slowness {nu_max}",
                self.c_zeta
            )));
        }
        Ok(())
    }
}

/// Weight `w` in `c = w·h(ν⁻¹|ξ/τ| − sin θ1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    /// `w = η‖(ξ, τ)‖`
    #[default]
    FrequencyNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingConfig {
    pub eta: f64,
    pub weight: WeightKind,
    pub cone: ConeConfig,
    pub l_check: usize,
}

impl DampingConfig {
    pub fn new(eta: f64, cone: ConeConfig, l_check: usize) -> Result<Self> {
        let d = Self { eta, weight: WeightKind::FrequencyNorm, cone, l_check };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.cone.validate()?;
        if !(self.eta > 0.0) {
            return Err(Error::config("DampingConfig eta must be positive"));
        }
        if self.l_check <= 2 {
            return Err(Error::config("DampingConfig l_check must exceed 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Selfadjoint choice of `B±`.
    Unitary,
    /// `Q₁₁ = Q₁₂ = 1`, so that `U = u₊ + u₋`.
    Sum,
}

fn require_tau(tau: f64) -> Result<()> {
    if tau == 0.0 || !tau.is_finite() {
        Err(Error::domain("symbol evaluation requires tau != 0"))
    } else {
        Ok(())
    }
}

/// Sine of the propagation angle, `ν⁻¹|ξ/τ|`.
#[inline]
pub fn sin_angle(nu: f64, xi: f64, tau: f64) -> f64 {
    (xi / tau).abs() / nu
}

/// The smooth step `h` of the damping construction.
pub fn eval_h(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        // exp(-1/y) / (exp(-1/y) + exp(-1/(1-y))), written to avoid underflow.
        1.0 / (1.0 + (1.0 / y - 1.0 / (1.0 - y)).exp())
    }
}

/// `a = ν²τ² − ξ²`
pub fn eval_a(m: &Medium, p: &PhasePoint) -> Result<f64> {
    let (nu, _) = m.eval(p.z, p.x)?;
    Ok(nu * nu * p.tau * p.tau - p.xi * p.xi)
}

/// `a_ρ = ρ⁻¹(ν²τ² − ξ²)`
pub fn eval_a_rho(m: &Medium, p: &PhasePoint) -> Result<f64> {
    let (nu, rho) = m.eval(p.z, p.x)?;
    Ok((nu * nu * p.tau * p.tau - p.xi * p.xi) / rho)
}

fn b_at(nu: f64, xi: f64, tau: f64) -> Result<f64> {
    require_tau(tau)?;
    let y = 1.0 - (xi / (tau * nu)).powi(2);
    if y <= 0.0 {
        return Err(Error::domain(format!(
            "evanescent point: |xi| = {} >= nu|tau| = {}",
            xi.abs(),
            nu * tau.abs()
        )));
    }
    Ok(-tau * nu * y.sqrt())
}

/// Vertical slowness `b`; defined strictly inside the propagating cone.
pub fn eval_b(m: &Medium, p: &PhasePoint) -> Result<f64> {
    let (nu, _) = m.eval(p.z, p.x)?;
    b_at(nu, p.xi, p.tau)
}

/// The floored radicand used by the extension of `b`:
/// `y_f + (y − y_f)·h((y − y_f)/(y₂ − y_f))` with `y₂ = cos²θ₂`.
/// Equals `y` for `y ≥ y₂` and `y_f` for `y ≤ y_f`.
pub fn floored_radicand(y: f64, theta2: f64) -> f64 {
    let y2 = theta2.cos().powi(2);
    Y_FLOOR + (y - Y_FLOOR) * eval_h((y - Y_FLOOR) / (y2 - Y_FLOOR))
}

pub(crate) fn b_ext_at(nu: f64, xi: f64, tau: f64, cone: &ConeConfig) -> f64 {
    let y = 1.0 - (xi / (tau * nu)).powi(2);
    -tau * nu * floored_radicand(y, cone.theta2).sqrt()
}

/// Smooth, real, 1-homogeneous continuation of `b` to all `τ ≠ 0`.
/// Identical to [`eval_b`] on `I'_θ2`.
pub fn eval_b_extended(m: &Medium, p: &PhasePoint, cone: &ConeConfig) -> Result<f64> {
    require_tau(p.tau)?;
    let (nu, _) = m.eval(p.z, p.x)?;
    Ok(b_ext_at(nu, p.xi, p.tau, cone))
}

fn zeroth_at(mp: &MediumPoint, xi: f64, tau: f64) -> Result<f64> {
    require_tau(tau)?;
    let r2 = mp.nu * mp.nu - (xi / tau).powi(2);
    if r2 <= 0.0 {
        return Err(Error::domain("zeroth-order correction undefined outside the propagating cone"));
    }
    Ok(0.5 * mp.nu * xi * mp.dnu_dx / tau * r2.powf(-1.5))
}

/// Real `s` such that the zeroth-order selfadjoint correction of `B₊` is `i·s`:
/// `s = ½ ν ξ ∂ν/∂x τ⁻¹ (ν² − τ⁻²ξ²)^(−3/2)`.
pub fn eval_zeroth_correction(m: &Medium, p: &PhasePoint) -> Result<f64> {
    let mp = m.point(p.z, p.x)?;
    zeroth_at(&mp, p.xi, p.tau)
}

/// Jet of `b` in `(ξ, x)` at `p`.
pub fn b_jet(m: &Medium, p: &PhasePoint, degree: usize) -> Result<Jet> {
    require_tau(p.tau)?;
    let nu = m.nu_jet_x(p.z, p.x, degree)?;
    let xi = Jet::var_xi(p.xi, degree);
    let rad = &(&nu * &nu) - &(&xi * &xi).scale(1.0 / (p.tau * p.tau));
    if rad.value().re <= 0.0 {
        return Err(Error::domain("b undefined outside the propagating cone"));
    }
    Ok(rad.sqrt().scale(-p.tau))
}

/// The same correction through the generic expression `½ b⁻¹ ∂b/∂ξ ∂b/∂x`,
/// with derivatives taken from the Taylor jet of `b`.
pub fn zeroth_correction_generic(m: &Medium, p: &PhasePoint) -> Result<f64> {
    let b = b_jet(m, p, 1)?;
    Ok((0.5 / b.value() * b.partial(1, 0) * b.partial(0, 1)).re)
}

/// Taper equal to 1 on `I'_θ1` and 0 outside `I'_θ2`.
pub fn inner_taper(sin_ang: f64, cone: &ConeConfig) -> f64 {
    let s1 = cone.theta1.sin();
    let s2 = cone.theta2.sin();
    1.0 - eval_h((sin_ang - s1) / (s2 - s1))
}

/// `¼ (∂a/∂z)/a − ½ (∂ρ/∂z)/ρ`, the normalization term of the sum choice.
fn normalization_term_at(mp: &MediumPoint, xi: f64, tau: f64) -> f64 {
    let a = mp.nu * mp.nu * tau * tau - xi * xi;
    let da_dz = 2.0 * mp.nu * mp.dnu_dz * tau * tau;
    0.25 * da_dz / a - 0.5 * mp.drho_dz / mp.rho
}

pub(crate) fn big_b_at(
    mp: &MediumPoint,
    xi: f64,
    tau: f64,
    sign: Sign,
    norm: Normalization,
    cone: Option<&ConeConfig>,
) -> Result<C64> {
    require_tau(tau)?;
    let sg = sign.value();
    match cone {
        None => {
            let b = b_at(mp.nu, xi, tau)?;
            let s = zeroth_at(mp, xi, tau)?;
            let mut v = C64::new(sg * b, sg * s);
            if norm == Normalization::Sum {
                v += C64::new(0.0, normalization_term_at(mp, xi, tau));
            }
            Ok(v)
        }
        Some(cone) => {
            let b = b_ext_at(mp.nu, xi, tau, cone);
            let w = inner_taper(sin_angle(mp.nu, xi, tau), cone);
            let mut im = 0.0;
            if w > 0.0 {
                im = sg * zeroth_at(mp, xi, tau)?;
                if norm == Normalization::Sum {
                    im += normalization_term_at(mp, xi, tau);
                }
                im *= w;
            }
            Ok(C64::new(sg * b, im))
        }
    }
}

/// Two-term symbol of `B±`.
///
/// With `cone = Some(..)` the principal part is the smooth extension of `b`
/// and the zeroth-order terms are multiplied by [`inner_taper`], so the symbol
/// is defined for every `τ ≠ 0`. With `cone = None` the exact two-term
/// expression is returned and evanescent points are an error.
pub fn eval_big_b(
    m: &Medium,
    p: &PhasePoint,
    sign: Sign,
    norm: Normalization,
    cone: Option<&ConeConfig>,
) -> Result<C64> {
    let mp = m.point(p.z, p.x)?;
    big_b_at(&mp, p.xi, p.tau, sign, norm, cone)
}

fn interior_a(mp: &MediumPoint, xi: f64, tau: f64) -> Result<f64> {
    require_tau(tau)?;
    let a = mp.nu * mp.nu * tau * tau - xi * xi;
    if a <= 0.0 {
        return Err(Error::domain("Q is singular at grazing and evanescent points"));
    }
    Ok(a)
}

/// Principal symbol of `Q`.
///
/// Column 1 maps `u₊` onto `(U, ρ⁻¹∂U/∂z)` for a downgoing wave
/// `U ∝ exp(ibz)`, so row 2 carries `−i·sgn(τ)` in column 1.
pub fn eval_q(m: &Medium, p: &PhasePoint, norm: Normalization) -> Result<Matrix2<C64>> {
    let mp = m.point(p.z, p.x)?;
    let a = interior_a(&mp, p.xi, p.tau)?;
    let sg = p.tau.signum();
    let i = C64::i();
    Ok(match norm {
        Normalization::Unitary => {
            let top = C64::from(mp.rho.sqrt() * a.powf(-0.25));
            let bot = mp.rho.powf(-0.5) * a.powf(0.25);
            Matrix2::new(top, top, -i * sg * bot, i * sg * bot)
        }
        Normalization::Sum => {
            let a_rho = a / mp.rho;
            let bot = mp.rho.powf(-0.5) * a_rho.sqrt();
            let one = C64::from(1.0);
            Matrix2::new(one, one, -i * sg * bot, i * sg * bot)
        }
    })
}

/// Principal symbol of the inverse of the unitary `Q`:
/// `½ [[ρ^(−½)a^(¼), i·sgn(τ)ρ^(½)a^(−¼)], [ρ^(−½)a^(¼), −i·sgn(τ)ρ^(½)a^(−¼)]]`.
pub fn eval_q0_inverse(m: &Medium, p: &PhasePoint) -> Result<Matrix2<C64>> {
    let mp = m.point(p.z, p.x)?;
    let a = interior_a(&mp, p.xi, p.tau)?;
    let sg = p.tau.signum();
    let i = C64::i();
    let l = C64::from(0.5 * mp.rho.powf(-0.5) * a.powf(0.25));
    let r = 0.5 * mp.rho.sqrt() * a.powf(-0.25);
    Ok(Matrix2::new(l, i * sg * r, l, -i * sg * r))
}

/// Membership in `I'_θ`: `‖ν⁻¹τ⁻¹ξ‖ ≤ sin θ`.
pub fn in_cone(m: &Medium, p: &PhasePoint, theta: f64) -> Result<bool> {
    require_tau(p.tau)?;
    let (nu, _) = m.eval(p.z, p.x)?;
    Ok(sin_angle(nu, p.xi, p.tau) <= theta.sin())
}

pub(crate) fn damping_at(nu: f64, xi: f64, tau: f64, d: &DampingConfig) -> f64 {
    let w = match d.weight {
        WeightKind::FrequencyNorm => d.eta * xi.hypot(tau),
    };
    w * eval_h(sin_angle(nu, xi, tau) - d.cone.theta1.sin())
}

/// Damping symbol `c = w·h(ν⁻¹‖τ⁻¹ξ‖ − sin θ1)`.
pub fn eval_damping(m: &Medium, p: &PhasePoint, d: &DampingConfig) -> Result<f64> {
    require_tau(p.tau)?;
    let (nu, _) = m.eval(p.z, p.x)?;
    Ok(damping_at(nu, p.xi, p.tau, d))
}

/// Smallest `η'` with `c ≥ η'‖(ξ, τ)‖` outside `I'_θ2`.
pub fn damping_floor(d: &DampingConfig) -> f64 {
    d.eta * eval_h(d.cone.theta2.sin() - d.cone.theta1.sin())
}

/// Phase-space sample for [`check_damping_bounds`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsSample {
    pub z_values: Vec<f64>,
    pub x_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    /// Range of `sin(angle) = ν⁻¹|ξ/τ|` scanned at each `(z, x, τ)`.
    pub sin_range: (f64, f64),
    pub n_sin: usize,
    /// Base finite-difference step (relative to `‖(ξ, τ)‖` for frequency
    /// directions and to `length_scale` for `z` and `x`).
    pub h0: f64,
    pub length_scale: f64,
    /// Number of step halvings.
    pub levels: usize,
}

impl BoundsSample {
    pub fn standard(z_values: Vec<f64>, x_values: Vec<f64>) -> Self {
        Self {
            z_values,
            x_values,
            tau_values: vec![1.0, 4.0, 16.0],
            sin_range: (0.0, 1.5),
            n_sin: 1501,
            h0: 0.02,
            length_scale: 1.0,
            levels: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    /// Smallest admissible constant per step level (coarse to fine).
    pub constants: Vec<f64>,
    /// Worst multi-index `(j, α, β_ξ, β_τ)` at the finest level.
    pub worst_index: [usize; 4],
    /// Whether the estimates fail to settle under step refinement.
    pub violation: bool,
    pub samples: usize,
}

impl BoundsReport {
    pub fn constant(&self) -> f64 {
        *self.constants.last().unwrap_or(&f64::NAN)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central finite-difference stencil of order `k`: offsets (in steps) and weights.
fn stencil(k: usize) -> Vec<(f64, f64)> {
    (0..=k)
        .map(|j| {
            let w = if j % 2 == 0 { 1.0 } else { -1.0 } * binomial(k, j);
            (k as f64 / 2.0 - j as f64, w)
        })
        .collect()
}

/// Finite-difference estimate of the bounds
/// `|∂z^j ∂x^α ∂(ξ,τ)^β c| ≤ C (1+‖(ξ,τ)‖)^(−|β|+n/L) (1+c)^(1−n/L)`,
/// `n = j+|α|+|β| < L`, for an arbitrary real symbol `c(z, x, ξ, τ)`.
pub fn check_symbol_bounds(
    c: &dyn Fn(f64, f64, f64, f64) -> Result<f64>,
    nu_at: &dyn Fn(f64, f64) -> Result<f64>,
    l_check: usize,
    sample: &BoundsSample,
) -> Result<BoundsReport> {
    let mut indices = Vec::new();
    for n in 0..l_check {
        for j in 0..=n {
            for a in 0..=n - j {
                for bx in 0..=n - j - a {
                    indices.push([j, a, bx, n - j - a - bx]);
                }
            }
        }
    }
    let lf = l_check as f64;
    let mut constants = Vec::new();
    let mut worst_index = [0; 4];
    let mut count = 0;
    for level in 0..sample.levels.max(1) {
        let h = sample.h0 / f64::powi(2.0, level as i32);
        let mut best = 0.0f64;
        count = 0;
        for &z in &sample.z_values {
            for &x in &sample.x_values {
                let nu = nu_at(z, x)?;
                for &tau in &sample.tau_values {
                    for k in 0..sample.n_sin {
                        let frac = if sample.n_sin > 1 { k as f64 / (sample.n_sin - 1) as f64 } else { 0.0 };
                        let s = sample.sin_range.0 + frac * (sample.sin_range.1 - sample.sin_range.0);
                        let xi = s * nu * tau.abs();
                        let knorm = xi.hypot(tau);
                        let steps = [h * sample.length_scale, h * sample.length_scale, h * knorm, h * knorm];
                        let c0 = c(z, x, xi, tau)?;
                        for idx in &indices {
                            let n: usize = idx.iter().sum();
                            let mut d = 0.0;
                            let st: Vec<Vec<(f64, f64)>> = idx.iter().map(|&k| stencil(k)).collect();
                            for &(oz, wz) in &st[0] {
                                for &(ox, wx) in &st[1] {
                                    for &(oxi, wxi) in &st[2] {
                                        for &(ot, wt) in &st[3] {
                                            let v = c(
                                                z + oz * steps[0],
                                                x + ox * steps[1],
                                                xi + oxi * steps[2],
                                                tau + ot * steps[3],
                                            )?;
                                            d += wz * wx * wxi * wt * v;
                                        }
                                    }
                                }
                            }
                            for (k, &o) in idx.iter().enumerate() {
                                d /= steps[k].powi(o as i32);
                            }
                            let beta = (idx[2] + idx[3]) as f64;
                            let rhs = (1.0 + knorm).powf(-beta + n as f64 / lf)
                                * (1.0 + c0).powf(1.0 - n as f64 / lf);
                            let ratio = d.abs() / rhs;
                            if !ratio.is_finite() {
                                best = f64::INFINITY;
                            } else if ratio > best {
                                best = ratio;
                                worst_index = *idx;
                            }
                        }
                        count += 1;
                    }
                }
            }
        }
        constants.push(best);
    }
    let violation = constants.iter().any(|c| !c.is_finite())
        || constants
            .windows(2)
            .last()
            .map(|w| w[1] > 1.5 * w[0] && w[1] > 1e-12)
            .unwrap_or(false);
    Ok(BoundsReport { constants, worst_index, violation, samples: count })
}

/// [`check_symbol_bounds`] applied to the damping symbol of `d`.
pub fn check_damping_bounds(m: &Medium, d: &DampingConfig, sample: &BoundsSample) -> Result<BoundsReport> {
    d.validate()?;
    check_symbol_bounds(
        &|z, x, xi, tau| eval_damping(m, &PhasePoint::new(z, x, xi, tau), d),
        &|z, x| Ok(m.eval(z, x)?.0),
        d.l_check,
        sample,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{Density, Domain, Slowness};
    use proptest::prelude::*;

    fn dom() -> Domain {
        Domain::new(-1.0, 3.0, -3.0, 3.0).unwrap()
    }

    fn hom(nu: f64, rho: f64) -> Medium {
        Medium::homogeneous(nu, rho, dom()).unwrap()
    }

    fn lateral() -> Medium {
        Medium::analytic(
            Slowness::LinearSlowness { nu0: 1.0, dnu_dz: 0.0, dnu_dx: 0.1 },
            Density::Constant { rho: 1.0 },
            dom(),
        )
        .unwrap()
    }

    fn cone() -> ConeConfig {
        ConeConfig::from_degrees(45.0, 70.0, 4.0).unwrap()
    }

    #[test]
    fn a_examples() {
        assert_eq!(eval_a(&hom(1.0, 1.0), &PhasePoint::new(0.0, 0.0, 0.0, 1.0)).unwrap(), 1.0);
        assert_eq!(eval_a(&hom(1.0, 1.0), &PhasePoint::new(0.0, 0.0, 1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(eval_a(&hom(2.0, 1.0), &PhasePoint::new(0.0, 0.0, 1.0, 1.0)).unwrap(), 3.0);
    }

    #[test]
    fn a_rho_examples() {
        let p = PhasePoint::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(eval_a_rho(&hom(1.0, 2.0), &p).unwrap(), 0.5);
        let q = PhasePoint::new(0.2, 0.1, 0.3, 1.7);
        assert_eq!(eval_a_rho(&hom(1.3, 1.0), &q).unwrap(), eval_a(&hom(1.3, 1.0), &q).unwrap());
    }

    #[test]
    fn b_examples() {
        let m = hom(1.0, 1.0);
        assert_eq!(eval_b(&m, &PhasePoint::new(0.0, 0.0, 0.0, 1.0)).unwrap(), -1.0);
        assert!((eval_b(&m, &PhasePoint::new(0.0, 0.0, 0.6, 1.0)).unwrap() + 0.8).abs() < 1e-15);
        assert_eq!(eval_b(&m, &PhasePoint::new(0.0, 0.0, 0.0, -2.0)).unwrap(), 2.0);
        assert!(matches!(eval_b(&m, &PhasePoint::new(0.0, 0.0, 1.0, 1.0)), Err(Error::Domain(_))));
        assert!(eval_b(&m, &PhasePoint::new(0.0, 0.0, 0.1, 0.0)).is_err());
    }

    #[test]
    fn b_extended_examples() {
        let m = hom(1.3, 1.0);
        let c = cone();
        // inside the inner cone: identical
        let p = PhasePoint::new(0.0, 0.0, 0.5, 1.0);
        assert_eq!(eval_b_extended(&m, &p, &c).unwrap(), eval_b(&m, &p).unwrap());
        // grazing: floor active, |value| = sqrt(0.01) nu |tau|
        let g = PhasePoint::new(0.0, 0.0, 1.3 * 2.0, 2.0);
        let v = eval_b_extended(&m, &g, &c).unwrap();
        assert!(v.abs() > 0.05 * 1.3 * 2.0);
        assert!((v.abs() - 0.1 * 1.3 * 2.0).abs() < 1e-12);
        // evanescent points still get a finite real value
        let e = PhasePoint::new(0.0, 0.0, 5.0, 1.0);
        assert!(eval_b_extended(&m, &e, &c).unwrap().is_finite());
    }

    #[test]
    fn zeroth_correction_examples() {
        let p = PhasePoint::new(0.0, 0.0, 0.6, 1.0);
        assert_eq!(eval_zeroth_correction(&hom(1.0, 1.0), &p).unwrap(), 0.0);
        assert_eq!(eval_zeroth_correction(&lateral(), &PhasePoint::new(0.0, 0.0, 0.0, 1.0)).unwrap(), 0.0);
        let s = eval_zeroth_correction(&lateral(), &p).unwrap();
        assert!((s - 0.05859375).abs() < 1e-15, "{s}");
        let g = zeroth_correction_generic(&lateral(), &p).unwrap();
        assert!((g - 0.05859375).abs() < 1e-14, "{g}");
        // independent oracle: finite differences of b in ξ and x
        let m = lateral();
        let h = 1e-5;
        let b = |x: f64, xi: f64| eval_b(&m, &PhasePoint::new(0.0, x, xi, 1.0)).unwrap();
        let db_dxi = (b(0.0, 0.6 + h) - b(0.0, 0.6 - h)) / (2.0 * h);
        let db_dx = (b(h, 0.6) - b(-h, 0.6)) / (2.0 * h);
        let fd = 0.5 / b(0.0, 0.6) * db_dxi * db_dx;
        assert!((fd - 0.05859375).abs() < 1e-8, "{fd}");
        assert!(eval_zeroth_correction(&m, &PhasePoint::new(0.0, 0.0, 1.2, 1.0)).is_err());
    }

    #[test]
    fn big_b_examples() {
        let c = cone();
        let m = hom(1.2, 1.5);
        let p = PhasePoint::new(0.1, 0.2, 0.4, 1.1);
        for s in [Sign::Plus, Sign::Minus] {
            for n in [Normalization::Unitary, Normalization::Sum] {
                let v = eval_big_b(&m, &p, s, n, Some(&c)).unwrap();
                assert_eq!(v.im, 0.0);
                assert_eq!(v.re, s.value() * eval_b(&m, &p).unwrap());
            }
        }
        let v = eval_big_b(&lateral(), &PhasePoint::new(0.0, 0.0, 0.6, 1.0), Sign::Plus, Normalization::Unitary, Some(&c))
            .unwrap();
        assert!((v.im - 0.05859375).abs() < 1e-15);
        assert!((v.re + 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalization_difference() {
        let m = Medium::analytic(
            Slowness::LinearVelocity { v0: 1.0, dv_dz: 0.5, dv_dx: 0.1 },
            Density::ExponentialZ { rho0: 1.0, rate: 0.3 },
            dom(),
        )
        .unwrap();
        let p = PhasePoint::new(0.5, 0.3, 0.2, 1.4);
        let bs = eval_big_b(&m, &p, Sign::Plus, Normalization::Sum, None).unwrap();
        let bu = eval_big_b(&m, &p, Sign::Plus, Normalization::Unitary, None).unwrap();
        let mp = m.point(p.z, p.x).unwrap();
        let a = eval_a(&m, &p).unwrap();
        let da = 2.0 * mp.nu * mp.dnu_dz * p.tau * p.tau;
        let expected = 0.25 * da / a - 0.5 * mp.drho_dz / mp.rho;
        assert!((bs - bu - C64::new(0.0, expected)).norm() < 1e-15);
    }

    #[test]
    fn q_examples() {
        let m = hom(1.0, 1.0);
        let p = PhasePoint::new(0.0, 0.0, 0.0, 1.0);
        let q = eval_q(&m, &p, Normalization::Unitary).unwrap();
        let i = C64::i();
        let expected = Matrix2::new(C64::from(1.0), C64::from(1.0), -i, i);
        assert!((q - expected).norm() < 1e-15);
        let qi = eval_q0_inverse(&m, &p).unwrap();
        let half = C64::from(0.5);
        let expected_inv = Matrix2::new(half, 0.5 * i, half, -0.5 * i);
        assert!((qi - expected_inv).norm() < 1e-15);
        assert!(eval_q(&m, &PhasePoint::new(0.0, 0.0, 1.0, 1.0), Normalization::Sum).is_err());
    }

    #[test]
    fn q_determinant_and_inverse() {
        let m = Medium::analytic(
            Slowness::GaussianLens { v0: 1.0, amplitude: 0.1, z_c: 0.5, x_c: 0.0, width: 0.8 },
            Density::LinearZ { rho0: 1.0, drho_dz: 0.2 },
            dom(),
        )
        .unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let z = rng.random_range(-0.9..2.9);
            let x = rng.random_range(-2.9..2.9);
            let tau: f64 = rng.random_range(0.2..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let nu = m.eval(z, x).unwrap().0;
            let xi = rng.random_range(-0.95..0.95) * nu * tau.abs();
            let p = PhasePoint::new(z, x, xi, tau);
            let q = eval_q(&m, &p, Normalization::Unitary).unwrap();
            let det = q.determinant();
            assert!((det - C64::new(0.0, 2.0 * tau.signum())).norm() < 1e-12, "{det}");
            let prod = eval_q0_inverse(&m, &p).unwrap() * q;
            assert!((prod - Matrix2::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn sum_q_removes_upgoing_part_of_downgoing_plane_wave() {
        let m = hom(1.25, 1.7);
        let (xi, tau) = (0.4, 1.3);
        let p = PhasePoint::new(0.0, 0.0, xi, tau);
        let b = eval_b(&m, &p).unwrap();
        // U = exp(i(ξx + bz + τt)) at the origin, V = ρ⁻¹ ∂U/∂z.
        let u = C64::from(1.0);
        let v = C64::new(0.0, b) / 1.7;
        for norm in [Normalization::Sum, Normalization::Unitary] {
            let q = eval_q(&m, &p, norm).unwrap();
            let w = q.try_inverse().unwrap() * nalgebra::Vector2::new(u, v);
            assert!(w[1].norm() < 1e-15, "{norm:?}: {}", w[1]);
            assert!(w[0].norm() > 0.1);
        }
    }

    #[test]
    fn eigenvector_relation() {
        let (rho, a_rho) = (1.7f64, 0.6f64);
        let sys = Matrix2::new(C64::from(0.0), C64::from(rho), C64::from(-a_rho), C64::from(0.0));
        let v = nalgebra::Vector2::new(C64::from(rho.sqrt()), C64::new(0.0, a_rho.sqrt()));
        let lhs = sys * v;
        let rhs = v * C64::new(0.0, rho.sqrt() * a_rho.sqrt());
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn cone_examples() {
        let m = hom(1.0, 1.0);
        let th = 45f64.to_radians();
        assert!(in_cone(&m, &PhasePoint::new(0.0, 0.0, 0.0, 1.0), 0.01).unwrap());
        assert!(!in_cone(&m, &PhasePoint::new(0.0, 0.0, 60f64.to_radians().sin(), 1.0), th).unwrap());
        let b = PhasePoint::new(0.0, 0.0, 0.5, 1.0);
        assert!(in_cone(&m, &b, (0.5f64).asin()).unwrap());
        assert!(in_cone(&m, &PhasePoint::new(0.0, 0.0, 0.1, 0.0), th).is_err());
    }

    #[test]
    fn h_examples() {
        assert_eq!(eval_h(-1.0), 0.0);
        assert_eq!(eval_h(2.0), 1.0);
        assert!((eval_h(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 0..=20000 {
            let y = -0.5 + 2.0 * k as f64 / 20000.0;
            let v = eval_h(y);
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= prev);
            assert!((v + eval_h(1.0 - y) - 1.0).abs() < 1e-14);
            prev = v;
        }
    }

    #[test]
    fn h_is_flat_at_zero() {
        // Central differences of order 1..4 at y = 0 vanish to FD accuracy.
        for step in [0.01, 0.005] {
            for k in 1..=4 {
                let d: f64 = stencil(k).iter().map(|&(o, w)| w * eval_h(o * step)).sum::<f64>()
                    / f64::powi(step, k as i32);
                assert!(d.abs() < 1e-6, "order {k}, step {step}: {d}");
            }
        }
    }

    #[test]
    fn damping_examples() {
        let m = hom(1.0, 1.0);
        let d = DampingConfig::new(1.0, cone(), 4).unwrap();
        assert_eq!(eval_damping(&m, &PhasePoint::new(0.0, 0.0, 0.7, 1.0), &d).unwrap(), 0.0);
        let xi = 60f64.to_radians().sin();
        let v = eval_damping(&m, &PhasePoint::new(0.0, 0.0, xi, 1.0), &d).unwrap();
        // h(0.1589) ≈ 0.00604 times ‖(ξ, τ)‖
        let y = xi - 45f64.to_radians().sin();
        let hv = (-1.0 / y).exp() / ((-1.0 / y).exp() + (-1.0 / (1.0 - y)).exp());
        assert!((hv - 0.00604).abs() < 5e-5);
        assert!((v - hv * xi.hypot(1.0)).abs() < 1e-15);
        let v3 = eval_damping(&m, &PhasePoint::new(0.0, 0.0, 3.0 * xi, 3.0), &d).unwrap();
        assert!((v3 - 3.0 * v).abs() < 1e-14);
        // strictly positive outside the outer cone
        let out = PhasePoint::new(0.0, 0.0, 0.95, 1.0);
        assert!(eval_damping(&m, &out, &d).unwrap() >= damping_floor(&d) * out.freq_norm());
    }

    #[test]
    fn invalid_configs() {
        assert!(ConeConfig::from_degrees(70.0, 45.0, 2.0).is_err());
        assert!(ConeConfig::from_degrees(10.0, 89.0, 2.0).is_err());
        assert!(DampingConfig::new(1.0, cone(), 2).is_err());
        assert!(DampingConfig::new(0.0, cone(), 3).is_err());
        let m = hom(5.0, 1.0);
        assert!(cone().validate_for(&m).is_err());
    }

    #[test]
    fn damping_bounds_inside_inner_cone_are_trivial() {
        let m = hom(1.0, 1.0);
        let d = DampingConfig::new(1.0, cone(), 3).unwrap();
        let mut s = BoundsSample::standard(vec![0.0], vec![0.0]);
        s.sin_range = (0.0, 0.6);
        s.n_sin = 50;
        let r = check_damping_bounds(&m, &d, &s).unwrap();
        assert!(r.constants.iter().all(|&c| c == 0.0));
        assert!(!r.violation);
    }

    #[test]
    fn damping_bounds_of_smooth_example_settle() {
        let m = lateral();
        let d = DampingConfig::new(1.0, cone(), 3).unwrap();
        let mut s = BoundsSample::standard(vec![0.0, 1.0], vec![-1.0, 0.5]);
        s.n_sin = 600;
        let r = check_damping_bounds(&m, &d, &s).unwrap();
        assert!(!r.violation, "{r:?}");
        assert!(r.constant().is_finite() && r.constant() > 0.0);
    }

    #[test]
    fn hard_cutoff_is_flagged() {
        let m = hom(1.0, 1.0);
        let s1 = 45f64.to_radians().sin();
        let hard = |_z: f64, _x: f64, xi: f64, tau: f64| -> Result<f64> {
            let s = (xi / tau).abs();
            Ok(if s > s1 + 0.1 { xi.hypot(tau) } else { 0.0 })
        };
        let mut s = BoundsSample::standard(vec![0.0], vec![0.0]);
        s.tau_values = vec![1.0];
        let r = check_symbol_bounds(&hard, &|z, x| Ok(m.eval(z, x)?.0), 3, &s).unwrap();
        assert!(r.violation, "{r:?}");
    }

    proptest! {
        #[test]
        fn b_sign_and_characteristic_identity(
            z in -0.9f64..2.9, x in -2.9f64..2.9, frac in -0.999f64..0.999,
            tau in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0],
        ) {
            let m = Medium::analytic(
                Slowness::GaussianLens { v0: 1.0, amplitude: -0.1, z_c: 1.0, x_c: 0.0, width: 1.0 },
                Density::LinearZ { rho0: 1.0, drho_dz: 0.3 },
                dom(),
            ).unwrap();
            let (nu, rho) = m.eval(z, x).unwrap();
            let xi = frac * nu * tau.abs();
            let b = eval_b(&m, &PhasePoint::new(z, x, xi, tau)).unwrap();
            prop_assert_eq!(b.signum(), -tau.signum());
            for zeta in [b, -b] {
                let p = (nu * nu * tau * tau - xi * xi - zeta * zeta) / rho;
                prop_assert!(p.abs() <= 1e-12 * nu * nu * tau * tau / rho);
            }
        }

        #[test]
        fn generic_and_explicit_correction_agree(
            x in -2.5f64..2.5, frac in -0.95f64..0.95, tau in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        ) {
            let m = Medium::analytic(
                Slowness::LateralSine { nu0: 1.0, epsilon: 0.2, period: 1.7 },
                Density::Constant { rho: 1.0 },
                dom(),
            ).unwrap();
            let nu = m.eval(0.0, x).unwrap().0;
            let p = PhasePoint::new(0.0, x, frac * nu * tau.abs(), tau);
            let e = eval_zeroth_correction(&m, &p).unwrap();
            let g = zeroth_correction_generic(&m, &p).unwrap();
            prop_assert!((e - g).abs() <= 1e-10 * (1.0 + e.abs()));
        }

        #[test]
        fn homogeneity_of_degree_one(
            x in -2.5f64..2.5, frac in -1.5f64..1.5, tau in prop_oneof![-5.0f64..-1.0, 1.0f64..5.0],
            lambda in 1.0f64..50.0,
        ) {
            let m = lateral();
            let c = cone();
            let d = DampingConfig::new(1.3, c, 3).unwrap();
            let nu = m.eval(0.3, x).unwrap().0;
            let p = PhasePoint::new(0.3, x, frac * nu * tau.abs(), tau);
            let q = p.scaled(lambda);
            let be = eval_b_extended(&m, &p, &c).unwrap();
            prop_assert!((eval_b_extended(&m, &q, &c).unwrap() - lambda * be).abs() <= 1e-12 * lambda * (1.0 + be.abs()));
            let cd = eval_damping(&m, &p, &d).unwrap();
            prop_assert!((eval_damping(&m, &q, &d).unwrap() - lambda * cd).abs() <= 1e-12 * lambda * (1.0 + cd));
            if frac.abs() < 0.999 {
                let b = eval_b(&m, &p).unwrap();
                prop_assert!((eval_b(&m, &q).unwrap() - lambda * b).abs() <= 1e-12 * lambda * b.abs());
            }
        }

        #[test]
        fn damping_support(
            x in -2.5f64..2.5, s in 0.0f64..2.0, tau in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        ) {
            let m = lateral();
            let d = DampingConfig::new(1.0, cone(), 3).unwrap();
            let nu = m.eval(0.0, x).unwrap().0;
            let p = PhasePoint::new(0.0, x, s * nu * tau.abs(), tau);
            let c = eval_damping(&m, &p, &d).unwrap();
            prop_assert!(c >= 0.0);
            if in_cone(&m, &p, d.cone.theta1).unwrap() {
                prop_assert_eq!(c, 0.0);
            }
            if !in_cone(&m, &p, d.cone.theta2).unwrap() {
                prop_assert!(c > 0.0);
            }
        }
    }
}
