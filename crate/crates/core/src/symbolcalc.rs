//! Symbol calculus in the lateral variables: the truncated composition
//! formula, the asymptotic square root, and pointwise checks of the
//! diagonalization identities.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::medium::Medium;
use crate::symbols::{self, Normalization, PhasePoint, Sign};

/// Where a symbol is defined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValidRegion {
    Everywhere,
    /// `ν⁻¹|ξ/τ| < 1`, `τ ≠ 0`.
    Propagating,
}

/// A symbol `σ(z, x, ξ, τ)` with derivatives in `(ξ, x)` supplied as Taylor jets.
pub trait SymbolFn: Send + Sync {
    /// Declared order `m`.
    fn order(&self) -> f64;

    /// Jet in `(ξ, x)` at the point, exact up to `degree`.
    fn jet(&self, p: &PhasePoint, degree: usize) -> Result<Jet>;

    /// Highest jet degree available.
    fn max_degree(&self) -> usize {
        usize::MAX
    }

    fn valid_region(&self) -> ValidRegion {
        ValidRegion::Everywhere
    }

    fn eval(&self, p: &PhasePoint) -> Result<C64> {
        Ok(self.jet(p, 0)?.value())
    }

    /// `∂ξ^i ∂x^j σ`.
    fn partial(&self, p: &PhasePoint, i: usize, j: usize) -> Result<C64> {
        Ok(self.jet(p, i + j)?.partial(i, j))
    }

    /// `∂σ/∂z` by central differences.
    fn d_z(&self, p: &PhasePoint) -> Result<C64> {
        let h = 1e-5 * (1.0 + p.z.abs());
        let up = self.eval(&PhasePoint { z: p.z + h, ..*p })?;
        let dn = self.eval(&PhasePoint { z: p.z - h, ..*p })?;
        Ok((up - dn) / (2.0 * h))
    }
}

pub type Symbol = Arc<dyn SymbolFn>;

fn require_propagating(m: &Medium, p: &PhasePoint) -> Result<f64> {
    if p.tau == 0.0 {
        return Err(Error::domain("symbol evaluation requires tau != 0"));
    }
    let nu = m.eval(p.z, p.x)?.0;
    if symbols::sin_angle(nu, p.xi, p.tau) >= 1.0 {
        return Err(Error::domain("point outside the propagating cone"));
    }
    Ok(nu)
}

/// `a = ν²τ² − ξ²`, order 2.
pub struct SymbolA {
    pub medium: Arc<Medium>,
}

impl SymbolFn for SymbolA {
    fn order(&self) -> f64 {
        2.0
    }

    fn jet(&self, p: &PhasePoint, degree: usize) -> Result<Jet> {
        let nu = self.medium.nu_jet_x(p.z, p.x, degree)?;
        let xi = Jet::var_xi(p.xi, degree);
        Ok(&(&nu * &nu).scale(p.tau * p.tau) - &(&xi * &xi))
    }
}

/// Principal symbol `±b`, order 1.
pub struct SymbolB {
    pub medium: Arc<Medium>,
    pub sign: Sign,
}

impl SymbolFn for SymbolB {
    fn order(&self) -> f64 {
        1.0
    }

    fn valid_region(&self) -> ValidRegion {
        ValidRegion::Propagating
    }

    fn jet(&self, p: &PhasePoint, degree: usize) -> Result<Jet> {
        require_propagating(&self.medium, p)?;
        Ok(symbols::b_jet(&self.medium, p, degree)?.scale(self.sign.value()))
    }
}

/// Two-term selfadjoint symbol `±(b + i·s)` with the closed-form correction `s`.
pub struct SymbolTwoTermB {
    pub medium: Arc<Medium>,
    pub sign: Sign,
}

impl SymbolFn for SymbolTwoTermB {
    fn order(&self) -> f64 {
        1.0
    }

    fn valid_region(&self) -> ValidRegion {
        ValidRegion::Propagating
    }

    fn jet(&self, p: &PhasePoint, degree: usize) -> Result<Jet> {
        require_propagating(&self.medium, p)?;
        let nu = self.medium.nu_jet_x(p.z, p.x, degree + 1)?;
        let xi = Jet::var_xi(p.xi, degree);
        let nu_x = nu.d_x(1);
        let nu = nu.truncate(degree);
        let r2 = &(&nu * &nu) - &(&xi * &xi).scale(1.0 / (p.tau * p.tau));
        let b = r2.sqrt().scale(-p.tau);
        let s = (&(&nu * &xi) * &nu_x).scale(0.5 / p.tau);
        let s = &s * &r2.powf(-1.5);
        Ok((&b + &s.scale(C64::i())).scale(self.sign.value()))
    }
}

type PointFn = dyn Fn(&PhasePoint) -> Result<C64> + Send + Sync;

/// A symbol given only by its values; derivatives up to order 2 come from
/// centered differences with step `max(1e−5(1+|ξ|), 1e−5)` in `ξ` and
/// `1e−5·x_scale` in `x`.
pub struct FnSymbol {
    f: Box<PointFn>,
    order: f64,
    x_scale: f64,
}

impl FnSymbol {
    pub fn new(order: f64, f: impl Fn(&PhasePoint) -> Result<C64> + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f), order, x_scale: 1.0 }
    }

    pub fn with_x_scale(mut self, x_scale: f64) -> Self {
        self.x_scale = x_scale;
        self
    }
}

/// Second-order finite-difference jet of a pointwise function, degree ≤ 2.
fn fd_jet(f: &dyn Fn(&PhasePoint) -> Result<C64>, p: &PhasePoint, degree: usize, x_scale: f64) -> Result<Jet> {
    if degree > 2 {
        return Err(Error::Capability(format!(
            "finite-difference symbols provide derivatives up to order 2, {degree} requested"
        )));
    }
    let hk = (1e-5 * (1.0 + p.xi.abs())).max(1e-5);
    let hx = 1e-5 * x_scale;
    let at = |dk: f64, dx: f64| f(&PhasePoint { xi: p.xi + dk * hk, x: p.x + dx * hx, ..*p });
    let f0 = at(0.0, 0.0)?;
    let mut poly = Jet::constant(f0, degree);
    if degree == 0 {
        return Ok(poly);
    }
    let (fkp, fkm) = (at(1.0, 0.0)?, at(-1.0, 0.0)?);
    let (fxp, fxm) = (at(0.0, 1.0)?, at(0.0, -1.0)?);
    let mut coeffs = vec![
        (1, 0, (fkp - fkm) / (2.0 * hk)),
        (0, 1, (fxp - fxm) / (2.0 * hx)),
    ];
    if degree == 2 {
        coeffs.push((2, 0, (fkp - 2.0 * f0 + fkm) / (hk * hk) / 2.0));
        coeffs.push((0, 2, (fxp - 2.0 * f0 + fxm) / (hx * hx) / 2.0));
        let mixed = (at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * hk * hx);
        coeffs.push((1, 1, mixed));
    }
    for (i, jj, c) in coeffs {
        // Build c·δξ^i δx^jj from the coordinate jets.
        let mut term = Jet::constant(c, degree);
        for _ in 0..i {
            term = &term * &Jet::var_xi(0.0, degree);
        }
        for _ in 0..jj {
            term = &term * &Jet::var_x(0.0, degree);
        }
        poly = &poly + &term;
    }
    Ok(poly)
}

impl SymbolFn for FnSymbol {
    fn order(&self) -> f64 {
        self.order
    }

    fn max_degree(&self) -> usize {
        2
    }

    fn eval(&self, p: &PhasePoint) -> Result<C64> {
        (self.f)(p)
    }

    fn jet(&self, p: &PhasePoint, degree: usize) -> Result<Jet> {
        fd_jet(&*self.f, p, degree, self.x_scale)
    }
}

/// `Σ_{k ≤ K} (1/(k! i^k)) ∂ξ^k A ∂x^k B` on jets, truncated to `degree`.
fn compose_jets(a: &Jet, b: &Jet, max_order: usize, degree: usize) -> Jet {
    let mut out = Jet::constant(0.0, degree);
    let mut w = C64::new(1.0, 0.0);
    for k in 0..=max_order {
        if k > 0 {
            // 1/(k! i^k) = (−i)^k / k!
            w *= C64::new(0.0, -1.0) / k as f64;
        }
        let term = &a.d_xi(k).truncate(degree) * &b.d_x(k).truncate(degree);
        out = &out + &term.scale(w);
    }
    out
}

/// The truncated composition `A # B`.
pub struct Composed {
    a: Symbol,
    b: Symbol,
    max_order: usize,
}

impl SymbolFn for Composed {
    fn order(&self) -> f64 {
        self.a.order() + self.b.order()
    }

    fn max_degree(&self) -> usize {
        let inner = self.a.max_degree().min(self.b.max_degree());
        inner.saturating_sub(self.max_order).max(2)
    }

    fn valid_region(&self) -> ValidRegion {
        match (self.a.valid_region(), self.b.valid_region()) {
            (ValidRegion::Everywhere, ValidRegion::Everywhere) => ValidRegion::Everywhere,
            _ => ValidRegion::Propagating,
        }
    }

    fn eval(&self, p: &PhasePoint) -> Result<C64> {
        let d = self.max_order;
        Ok(compose_jets(&self.a.jet(p, d)?, &self.b.jet(p, d)?, self.max_order, 0).value())
    }

    fn jet(&self, p: &PhasePoint, degree: usize) -> Result<Jet> {
        let d = degree + self.max_order;
        let exact = self.a.max_degree().min(self.b.max_degree());
        if d <= exact {
            return Ok(compose_jets(&self.a.jet(p, d)?, &self.b.jet(p, d)?, self.max_order, degree));
        }
        fd_jet(&|q| self.eval(q), p, degree, 1.0)
    }
}

/// Composition of two symbols keeping the terms with `|α| ≤ max_order`.
pub fn compose(a: Symbol, b: Symbol, max_order: usize) -> Result<Symbol> {
    if max_order > 2 {
        return Err(Error::config("compose supports max_order in {0, 1, 2}"));
    }
    let have = a.max_degree().min(b.max_degree());
    if have < max_order {
        return Err(Error::Capability(format!(
            "composition to order {max_order} needs derivatives of order {max_order}, inputs supply {have}"
        )));
    }
    Ok(Arc::new(Composed { a, b, max_order }))
}

/// Asymptotic square root `T = T⁽⁰⁾ + T⁽¹⁾` of a positive elliptic symbol,
/// `T⁽⁰⁾ = −sgn(τ)√A`, `T⁽¹⁾ = −½ (T⁽⁰⁾)⁻¹ (T⁽⁰⁾ # T⁽⁰⁾ − A)`.
pub struct SqrtSymbol {
    a: Symbol,
    terms: usize,
    max_sin: f64,
}

impl SqrtSymbol {
    fn check(&self, p: &PhasePoint, a0: C64) -> Result<()> {
        if p.tau == 0.0 {
            return Err(Error::domain("square root requires tau != 0"));
        }
        // For a = ν²τ² − ξ² the propagation angle satisfies sin² = ξ²/(a + ξ²).
        let sin2 = p.xi * p.xi / (a0.re + p.xi * p.xi);
        if a0.re <= 0.0 || sin2 > self.max_sin * self.max_sin {
            return Err(Error::domain("square root requested outside the cone"));
        }
        Ok(())
    }
}

impl SymbolFn for SqrtSymbol {
    fn order(&self) -> f64 {
        0.5 * self.a.order()
    }

    fn max_degree(&self) -> usize {
        self.a.max_degree().saturating_sub(self.terms - 1)
    }

    fn valid_region(&self) -> ValidRegion {
        ValidRegion::Propagating
    }

    fn jet(&self, p: &PhasePoint, degree: usize) -> Result<Jet> {
        let extra = self.terms - 1;
        let a = self.a.jet(p, degree + extra)?;
        self.check(p, a.value())?;
        let t0 = a.sqrt().scale(-p.tau.signum());
        if self.terms == 1 {
            return Ok(t0);
        }
        let r0 = &compose_jets(&t0, &t0, 1, degree) - &a.truncate(degree);
        let t0d = t0.truncate(degree);
        let t1 = (&r0 * &t0d.recip()).scale(-0.5);
        Ok(&t0d + &t1)
    }
}

/// Square root of `a` with `terms ∈ {1, 2}` terms of the asymptotic sum,
/// restricted to `I'_θ2` of `cone`.
pub fn sqrt_symbol(a: Symbol, terms: usize, cone: &symbols::ConeConfig) -> Result<Symbol> {
    if !(1..=2).contains(&terms) {
        return Err(Error::config("sqrt_symbol supports 1 or 2 terms"));
    }
    cone.validate()?;
    if a.max_degree() < terms - 1 {
        return Err(Error::Capability("square root needs first derivatives of the radicand".into()));
    }
    Ok(Arc::new(SqrtSymbol { a, terms, max_sin: cone.theta2.sin() }))
}

/// Formal adjoint residual `σ − Σ_{k ≤ K} (1/(k! i^k)) ∂ξ^k ∂x^k conj(σ)`.
pub fn adjoint_residual(sym: &dyn SymbolFn, p: &PhasePoint, max_order: usize) -> Result<C64> {
    let j = sym.jet(p, 2 * max_order)?;
    let c = j.conj();
    let mut adj = C64::new(0.0, 0.0);
    let mut w = C64::new(1.0, 0.0);
    for k in 0..=max_order {
        if k > 0 {
            w *= C64::new(0.0, -1.0) / k as f64;
        }
        adj += w * c.partial(k, k);
    }
    Ok(j.value() - adj)
}

/// Default scale factors for asymptotic order estimates.
pub const LAMBDAS: [f64; 4] = [8.0, 16.0, 32.0, 64.0];

/// Least-squares slope of `log r(λ)` against `log λ`.
pub fn scaling_slope(r: impl Fn(f64) -> Result<f64>, lambdas: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| Ok((l.ln(), r(l)?.ln())))
        .collect::<Result<_>>()?;
    if pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::numeric("scaling residual is zero or not finite"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Pointwise check of the off-diagonal block of the transformed system.
#[derive(Clone, Debug, PartialEq)]
pub struct OffDiagonalReport {
    /// `¼((∂a_ρ/∂z)/a_ρ − (∂ρ/∂z)/ρ)` from the medium gradients.
    pub off_diagonal: f64,
    /// The same quantity from the product rule on `a_ρ^s` with a difference quotient in `z`.
    pub off_diagonal_fd: f64,
    /// Largest error of `∂(a_ρ^s)/∂z · a_ρ^(−s) = s (∂a_ρ/∂z)/a_ρ` over `s ∈ {±¼, ±½}`.
    pub power_rule_error: f64,
    pub passed: bool,
}

fn a_rho_and_dz(m: &Medium, p: &PhasePoint) -> Result<(f64, f64, f64, f64)> {
    let mp = m.point(p.z, p.x)?;
    let a = mp.nu * mp.nu * p.tau * p.tau - p.xi * p.xi;
    if a <= 0.0 || p.tau == 0.0 {
        return Err(Error::domain("check requires an interior cone point"));
    }
    let da = 2.0 * mp.nu * mp.dnu_dz * p.tau * p.tau;
    let a_rho = a / mp.rho;
    let da_rho = da / mp.rho - a * mp.drho_dz / (mp.rho * mp.rho);
    Ok((a_rho, da_rho, mp.rho, mp.drho_dz))
}

fn z_step(m: &Medium, p: &PhasePoint) -> Result<f64> {
    let d = m.domain();
    let h = 1e-5 * (1.0 + p.z.abs());
    if p.z - h < d.z_min || p.z + h > d.z_max {
        return Err(Error::domain("check point too close to the depth boundary"));
    }
    Ok(h)
}

pub fn verify_offdiagonal(m: &Medium, p: &PhasePoint) -> Result<OffDiagonalReport> {
    let (a_rho, da_rho, rho, drho) = a_rho_and_dz(m, p)?;
    let off = 0.25 * (da_rho / a_rho - drho / rho);
    let h = z_step(m, p)?;
    let a_rho_at = |z: f64| -> Result<f64> { symbols::eval_a_rho(m, &PhasePoint { z, ..*p }) };
    let (up, dn) = (a_rho_at(p.z + h)?, a_rho_at(p.z - h)?);
    let rho_at = |z: f64| -> Result<f64> { Ok(m.eval(z, p.x)?.1) };
    let drho_fd = (rho_at(p.z + h)? - rho_at(p.z - h)?) / (2.0 * h);
    let mut err = 0.0f64;
    let mut off_fd = 0.0;
    for s in [0.25, -0.25, 0.5, -0.5] {
        let lhs = (up.powf(s) - dn.powf(s)) / (2.0 * h) * a_rho.powf(-s);
        err = err.max((lhs - s * da_rho / a_rho).abs());
        if s == 0.25 {
            off_fd = lhs - 0.25 * drho_fd / rho;
        }
    }
    let scale = 1.0 + off.abs() + (da_rho / a_rho).abs();
    let passed = err <= 1e-6 * scale && (off - off_fd).abs() <= 1e-6 * scale;
    Ok(OffDiagonalReport { off_diagonal: off, off_diagonal_fd: off_fd, power_rule_error: err, passed })
}

/// Pointwise check of the normalization term `−∂D⁻¹/∂z · D`,
/// `D = ρ^(−½) a^(¼)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationShiftReport {
    /// `¼ (∂a/∂z)/a − ½ (∂ρ/∂z)/ρ`.
    pub shift: f64,
    /// Product and chain rule applied to `D⁻¹ = ρ^(½) a^(−¼)` factor by factor.
    pub shift_product_rule: f64,
    /// Difference quotient of `D⁻¹` in `z`.
    pub shift_fd: f64,
    /// `Im(B_sum − B_unitary)` from [`symbols::eval_big_b`].
    pub b_difference: f64,
    pub passed: bool,
}

pub fn verify_normalization_shift(m: &Medium, p: &PhasePoint) -> Result<NormalizationShiftReport> {
    let mp = m.point(p.z, p.x)?;
    let a = mp.nu * mp.nu * p.tau * p.tau - p.xi * p.xi;
    if a <= 0.0 || p.tau == 0.0 {
        return Err(Error::domain("check requires an interior cone point"));
    }
    let da = 2.0 * mp.nu * mp.dnu_dz * p.tau * p.tau;
    let shift = 0.25 * da / a - 0.5 * mp.drho_dz / mp.rho;

    let d = mp.rho.powf(-0.5) * a.powf(0.25);
    let d_inv_dz = 0.5 * mp.rho.powf(-0.5) * mp.drho_dz * a.powf(-0.25)
        - 0.25 * mp.rho.sqrt() * a.powf(-1.25) * da;
    let shift_product_rule = -d_inv_dz * d;

    let h = z_step(m, p)?;
    let d_inv_at = |z: f64| -> Result<f64> {
        let (nu, rho) = m.eval(z, p.x)?;
        Ok(rho.sqrt() * (nu * nu * p.tau * p.tau - p.xi * p.xi).powf(-0.25))
    };
    let shift_fd = -(d_inv_at(p.z + h)? - d_inv_at(p.z - h)?) / (2.0 * h) * d;

    let bs = symbols::eval_big_b(m, p, Sign::Plus, Normalization::Sum, None)?;
    let bu = symbols::eval_big_b(m, p, Sign::Plus, Normalization::Unitary, None)?;
    let b_difference = (bs - bu).im;

    let scale = 1.0 + shift.abs();
    let passed = (shift - shift_product_rule).abs() <= 1e-12 * scale
        && (shift - shift_fd).abs() <= 1e-6 * scale
        && (shift - b_difference).abs() <= 1e-12 * scale;
    Ok(NormalizationShiftReport { shift, shift_product_rule, shift_fd, b_difference, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{Density, Domain, Slowness};
    use crate::symbols::ConeConfig;
    use proptest::prelude::*;

    fn dom() -> Domain {
        Domain::new(-1.0, 3.0, -3.0, 3.0).unwrap()
    }

    fn lateral() -> Arc<Medium> {
        Arc::new(
            Medium::analytic(
                Slowness::LinearSlowness { nu0: 1.0, dnu_dz: 0.0, dnu_dx: 0.1 },
                Density::Constant { rho: 1.0 },
                dom(),
            )
            .unwrap(),
        )
    }

    fn smooth() -> Arc<Medium> {
        Arc::new(
            Medium::analytic(
                Slowness::LateralSine { nu0: 1.0, epsilon: 0.15, period: 2.3 },
                Density::Constant { rho: 1.0 },
                dom(),
            )
            .unwrap(),
        )
    }

    fn cone() -> ConeConfig {
        ConeConfig::from_degrees(45.0, 70.0, 4.0).unwrap()
    }

    fn xi_sym() -> Symbol {
        Arc::new(FnSymbol::new(1.0, |p| Ok(C64::from(p.xi))))
    }

    fn x_sym() -> Symbol {
        Arc::new(FnSymbol::new(0.0, |p| Ok(C64::from(p.x))))
    }

    #[test]
    fn xi_compose_x_gives_commutator_term() {
        let c = compose(xi_sym(), x_sym(), 1).unwrap();
        let p = PhasePoint::new(0.0, 0.7, 1.3, 1.0);
        let v = c.eval(&p).unwrap();
        assert!((v - C64::new(0.7 * 1.3, -1.0)).norm() < 1e-9, "{v}");
    }

    #[test]
    fn x_independent_compose_is_product() {
        let m = Arc::new(Medium::homogeneous(1.2, 1.0, dom()).unwrap());
        let a: Symbol = Arc::new(SymbolA { medium: m.clone() });
        let b: Symbol = Arc::new(SymbolB { medium: m, sign: Sign::Plus });
        let p = PhasePoint::new(0.0, 0.1, 0.4, 1.1);
        for k in 0..=2 {
            let c = compose(a.clone(), b.clone(), k).unwrap();
            let expect = a.eval(&p).unwrap() * b.eval(&p).unwrap();
            assert!((c.eval(&p).unwrap() - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn compose_rejects_missing_derivatives() {
        assert!(matches!(compose(xi_sym(), x_sym(), 3), Err(Error::Config(_))));
        let fd = FnSymbol::new(0.0, |p| Ok(C64::from(p.x)));
        assert!(matches!(fd.jet(&PhasePoint::new(0.0, 0.0, 1.0, 1.0), 3), Err(Error::Capability(_))));
    }

    #[test]
    fn fd_partials_match_exact_jets() {
        let m = smooth();
        let exact = SymbolTwoTermB { medium: m.clone(), sign: Sign::Plus };
        let mm = m.clone();
        let fd = FnSymbol::new(1.0, move |p| {
            symbols::eval_big_b(&mm, p, Sign::Plus, Normalization::Unitary, None)
        });
        let p = PhasePoint::new(0.0, 0.4, 0.5, 1.3);
        let je = exact.jet(&p, 2).unwrap();
        let jf = fd.jet(&p, 2).unwrap();
        for (i, j) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
            let (a, b) = (je.partial(i, j), jf.partial(i, j));
            assert!((a - b).norm() < 1e-5 * (1.0 + a.norm()), "({i},{j}): {a} vs {b}");
        }
    }

    #[test]
    fn symbol_growth_is_bounded_by_order() {
        let m = smooth();
        let s = SymbolTwoTermB { medium: m, sign: Sign::Plus };
        let mut worst = 0.0f64;
        for k in 0..200 {
            let lam = 1.0 + k as f64;
            let p = PhasePoint::new(0.0, -1.0 + 0.01 * k as f64, 0.6 * lam, lam);
            worst = worst.max(s.eval(&p).unwrap().norm() / (1.0 + p.freq_norm()));
        }
        assert!(worst < 2.0);
    }

    #[test]
    fn sqrt_homogeneous_is_b() {
        let m = Arc::new(Medium::homogeneous(1.3, 2.0, dom()).unwrap());
        let a: Symbol = Arc::new(SymbolA { medium: m.clone() });
        let t = sqrt_symbol(a, 2, &cone()).unwrap();
        let p = PhasePoint::new(0.0, 0.0, 0.5, -1.7);
        let b = symbols::eval_b(&m, &p).unwrap();
        assert!((t.eval(&p).unwrap() - b).norm() < 1e-14 * b.abs());
    }

    #[test]
    fn sqrt_two_terms_matches_closed_form() {
        let m = lateral();
        let a: Symbol = Arc::new(SymbolA { medium: m.clone() });
        let t = sqrt_symbol(a, 2, &cone()).unwrap();
        for (x, xi, tau) in [(0.0, 0.6, 1.0), (1.2, -0.3, 2.0), (-0.5, 0.4, -1.5)] {
            let p = PhasePoint::new(0.0, x, xi, tau);
            let want = symbols::eval_big_b(&m, &p, Sign::Plus, Normalization::Unitary, None).unwrap();
            let got = t.eval(&p).unwrap();
            assert!((got - want).norm() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn sqrt_residual_is_order_zero() {
        let m = smooth();
        let a: Symbol = Arc::new(SymbolA { medium: m.clone() });
        let t = sqrt_symbol(a.clone(), 2, &cone()).unwrap();
        let tt = compose(t.clone(), t, 2).unwrap();
        let p = PhasePoint::new(0.0, 0.3, 0.5, 1.0);
        let slope = scaling_slope(
            |l| {
                let q = p.scaled(l);
                Ok((tt.eval(&q)? - a.eval(&q)?).norm())
            },
            &LAMBDAS,
        )
        .unwrap();
        assert!(slope <= 0.3, "slope {slope}");
        // with only the principal term the residual is of order 1
        let t1 = sqrt_symbol(a.clone(), 1, &cone()).unwrap();
        let tt1 = compose(t1.clone(), t1, 2).unwrap();
        let slope1 = scaling_slope(
            |l| {
                let q = p.scaled(l);
                Ok((tt1.eval(&q)? - a.eval(&q)?).norm())
            },
            &LAMBDAS,
        )
        .unwrap();
        assert!((slope1 - 1.0).abs() < 0.3, "slope {slope1}");
    }

    #[test]
    fn two_term_b_is_selfadjoint_to_order_minus_one() {
        let m = smooth();
        let s = SymbolTwoTermB { medium: m.clone(), sign: Sign::Plus };
        let p = PhasePoint::new(0.0, 0.3, 0.5, 1.0);
        let slope = scaling_slope(|l| Ok(adjoint_residual(&s, &p.scaled(l), 1)?.norm()), &LAMBDAS).unwrap();
        assert!(slope <= -0.7, "slope {slope}");
        // the principal part alone fails at order 0
        let b = SymbolB { medium: m, sign: Sign::Plus };
        let slope_b = scaling_slope(|l| Ok(adjoint_residual(&b, &p.scaled(l), 1)?.norm()), &LAMBDAS).unwrap();
        assert!(slope_b.abs() < 0.3, "slope {slope_b}");
    }

    #[test]
    fn compose_truncation_orders() {
        let m = smooth();
        let a: Symbol = Arc::new(SymbolTwoTermB { medium: m.clone(), sign: Sign::Plus });
        let b: Symbol = Arc::new(SymbolA { medium: m });
        let p = PhasePoint::new(0.0, 0.2, 0.4, 1.0);
        for k in 1..=2 {
            let hi = compose(a.clone(), b.clone(), k).unwrap();
            let lo = compose(a.clone(), b.clone(), k - 1).unwrap();
            let slope = scaling_slope(
                |l| {
                    let q = p.scaled(l);
                    Ok((hi.eval(&q)? - lo.eval(&q)?).norm())
                },
                &LAMBDAS,
            )
            .unwrap();
            assert!((slope - (3.0 - k as f64)).abs() <= 0.3, "k = {k}: slope {slope}");
        }
    }

    #[test]
    fn compose_is_associative_to_retained_order() {
        let m = smooth();
        let a: Symbol = Arc::new(SymbolTwoTermB { medium: m.clone(), sign: Sign::Plus });
        let b: Symbol = Arc::new(SymbolA { medium: m.clone() });
        let c: Symbol = Arc::new(SymbolB { medium: m, sign: Sign::Minus });
        let left = compose(compose(a.clone(), b.clone(), 1).unwrap(), c.clone(), 1).unwrap();
        let right = compose(a, compose(b, c, 1).unwrap(), 1).unwrap();
        let p = PhasePoint::new(0.0, -0.4, 0.3, 1.0);
        // products are of order 4; the first-order truncation leaves order 2
        let slope = scaling_slope(
            |l| {
                let q = p.scaled(l);
                Ok((left.eval(&q)? - right.eval(&q)?).norm())
            },
            &LAMBDAS,
        )
        .unwrap();
        assert!(slope <= 2.3, "slope {slope}");
    }

    #[test]
    fn offdiagonal_examples() {
        let hom = Medium::homogeneous(1.0, 1.0, dom()).unwrap();
        let r = verify_offdiagonal(&hom, &PhasePoint::new(0.0, 0.0, 0.3, 1.0)).unwrap();
        assert_eq!(r.off_diagonal, 0.0);
        assert!(r.passed);

        let v = Medium::analytic(
            Slowness::LinearVelocity { v0: 1.0, dv_dz: 0.5, dv_dx: 0.0 },
            Density::Constant { rho: 1.0 },
            dom(),
        )
        .unwrap();
        let r = verify_offdiagonal(&v, &PhasePoint::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((r.off_diagonal + 0.25).abs() < 1e-14, "{r:?}");
        assert!(r.passed);

        let d = Medium::analytic(
            Slowness::Constant { nu: 1.0 },
            Density::LinearZ { rho0: 1.0, drho_dz: 1.0 },
            Domain::new(-0.5, 1.0, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let r = verify_offdiagonal(&d, &PhasePoint::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((r.off_diagonal + 0.5).abs() < 1e-14, "{r:?}");
        assert!(r.passed);
    }

    #[test]
    fn normalization_shift_examples() {
        let v = Medium::analytic(
            Slowness::LinearVelocity { v0: 1.0, dv_dz: 0.5, dv_dx: 0.0 },
            Density::Constant { rho: 1.0 },
            dom(),
        )
        .unwrap();
        let r = verify_normalization_shift(&v, &PhasePoint::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((r.shift + 0.25).abs() < 1e-14 && r.passed, "{r:?}");

        let e = Medium::analytic(
            Slowness::Constant { nu: 1.0 },
            Density::ExponentialZ { rho0: 1.0, rate: 1.0 },
            dom(),
        )
        .unwrap();
        let r = verify_normalization_shift(&e, &PhasePoint::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((r.shift + 0.5).abs() < 1e-14 && r.passed, "{r:?}");

        let h = Medium::homogeneous(1.4, 2.0, dom()).unwrap();
        let r = verify_normalization_shift(&h, &PhasePoint::new(1.0, 0.0, 0.2, 1.0)).unwrap();
        assert_eq!(r.shift, 0.0);
        assert_eq!(r.b_difference, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn normalization_shift_holds_everywhere(
            z in -0.5f64..2.5, x in -2.5f64..2.5, frac in -0.95f64..0.95,
            tau in prop_oneof![-8.0f64..-0.2, 0.2f64..8.0],
        ) {
            let m = Medium::analytic(
                Slowness::GaussianLens { v0: 1.0, amplitude: 0.2, z_c: 1.0, x_c: 0.3, width: 0.7 },
                Density::ExponentialZ { rho0: 1.2, rate: 0.4 },
                dom(),
            ).unwrap();
            let nu = m.eval(z, x).unwrap().0;
            let p = PhasePoint::new(z, x, frac * nu * tau.abs(), tau);
            let r = verify_normalization_shift(&m, &p).unwrap();
            prop_assert!(r.passed, "{:?}", r);
            let o = verify_offdiagonal(&m, &p).unwrap();
            prop_assert!(o.passed, "{:?}", o);
        }

        #[test]
        fn composition_is_bilinear(
            x in -2.0f64..2.0, xi in -3.0f64..3.0, alpha in -2.0f64..2.0,
        ) {
            let m = smooth();
            let a: Symbol = Arc::new(SymbolA { medium: m.clone() });
            let b: Symbol = Arc::new(SymbolB { medium: m.clone(), sign: Sign::Plus });
            let c: Symbol = Arc::new(SymbolTwoTermB { medium: m.clone(), sign: Sign::Plus });
            let sum: Symbol = {
                let (b, c) = (b.clone(), c.clone());
                Arc::new(FnSymbol::new(1.0, move |p| Ok(b.eval(p)? + c.eval(p)? * alpha)))
            };
            let p = PhasePoint::new(0.0, x, xi * 0.2, 1.0);
            let lhs = compose(a.clone(), sum, 1).unwrap().eval(&p).unwrap();
            let rhs = compose(a.clone(), b, 1).unwrap().eval(&p).unwrap()
                + compose(a, c, 1).unwrap().eval(&p).unwrap() * alpha;
            prop_assert!((lhs - rhs).norm() <= 1e-6 * (1.0 + lhs.norm()));
        }
    }
}
