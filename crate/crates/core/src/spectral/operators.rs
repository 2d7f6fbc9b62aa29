use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::transform::Workspace;
use super::{SpectralError, SpectralField, TorusGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Brinkman viscosity `μ`, Forchheimer coefficient `β` and absorption
/// exponent `r`. The Darcy coefficient is fixed at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub mu: f64,
    pub beta: f64,
    pub r: f64,
}

impl OperatorParams {
    /// Rejects `r < 3`, non-positive coefficients, and the critical case
    /// `r = 3` with `2βμ < 1`.
    pub fn new(mu: f64, beta: f64, r: f64) -> Result<Self, SpectralError> {
        let p = Self { mu, beta, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(SpectralError::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(SpectralError::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.r >= 3.0) || !self.r.is_finite() {
            return Err(SpectralError::Config(format!(
                "absorption exponent must satisfy r >= 3, got {}",
                self.r
            )));
        }
        if self.r == 3.0 && 2.0 * self.beta * self.mu < 1.0 {
            return Err(SpectralError::Config(format!(
                "critical case r = 3 requires 2*beta*mu >= 1, got {}",
                2.0 * self.beta * self.mu
            )));
        }
        Ok(())
    }

    /// `Some(r)` when `r` is an odd integer, i.e. `|u|^{r−1}u` is a
    /// polynomial that dealiasing can treat exactly.
    pub fn odd_integer_exponent(&self) -> Option<i32> {
        let r = self.r.round();
        if (self.r - r).abs() < 1e-12 && (r as i64) % 2 == 1 {
            Some(r as i32)
        } else {
            None
        }
    }

    /// Shift `η` that makes `G + ηI` monotone:
    /// `η = (r−3)/(2μ(r−1)) · (2/(βμ(r−1)))^{2/(r−3)}` for `r > 3`, and 0 in
    /// the critical case.
    pub fn eta(&self) -> f64 {
        if self.r == 3.0 {
            return 0.0;
        }
        let r = self.r;
        (r - 3.0) / (2.0 * self.mu * (r - 1.0)) * (2.0 / (self.beta * self.mu * (r - 1.0))).powf(2.0 / (r - 3.0))
    }

    /// Oversampling needed for exact evaluation of the damping term.
    pub fn damping_padding(&self) -> f64 {
        (self.r + 1.0) / 2.0
    }
}

/// Helmholtz–Hodge projection, mode by mode: `û ← û − k (k·û)/|k|²`,
/// mean mode zeroed.
pub fn leray_project(raw: &SpectralField) -> SpectralField {
    let mut out = raw.clone();
    project_in_place(&mut out);
    out
}

pub(crate) fn project_in_place(u: &mut SpectralField) {
    let grid = u.grid().clone();
    let ksq = grid.ksq();
    for (idx, c) in u.coeffs_mut().iter_mut().enumerate() {
        let (k1, k2) = grid.wavevector(idx);
        if ksq[idx] == 0.0 {
            *c = [ZERO, ZERO];
            continue;
        }
        let k = [k1 as f64, k2 as f64];
        let dot = (c[0] * k[0] + c[1] * k[1]) / ksq[idx];
        c[0] -= dot * k[0];
        c[1] -= dot * k[1];
    }
}

/// Stokes operator `A = −P_H Δ`: multiplies mode `k` by `|k|²`.
pub fn stokes_apply(u: &SpectralField) -> SpectralField {
    u.map_modes(|q| q)
}

/// `A^α`: multiplies mode `k` by `|k|^{2α}`. Negative powers are fine since
/// the mean mode is excluded.
pub fn fractional_power_apply(u: &SpectralField, alpha: f64) -> SpectralField {
    if alpha == 0.0 {
        return u.clone();
    }
    if alpha == 1.0 {
        return stokes_apply(u);
    }
    u.map_modes(|q| q.powf(alpha))
}

/// `B(u) = P_H (u·∇)u`, evaluated pseudospectrally on the padded grid.
pub fn advection(u: &SpectralField) -> Result<SpectralField, SpectralError> {
    advection_bilinear(u, u)
}

/// `B(u, v) = P_H (u·∇)v`.
pub fn advection_bilinear(u: &SpectralField, v: &SpectralField) -> Result<SpectralField, SpectralError> {
    u.check_grid(v)?;
    u.grid().require_alias_free(1.5)?;
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let [gx, gy] = physical_gradient(&mut ws, v);
    let mut prod: Vec<Complex64> = pu
        .iter()
        .zip(gx.iter().zip(&gy))
        .map(|(p, (a, b))| *a * p.re + *b * p.im)
        .collect();
    Ok(back_to_field(&mut ws, &mut prod))
}

/// `b(u, v, w) = ∫ (u·∇)v · w dx` by quadrature on the padded grid.
pub fn trilinear_form(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64, SpectralError> {
    u.check_grid(v)?;
    u.check_grid(w)?;
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let pw = physical_values(&mut ws, w);
    let [gx, gy] = physical_gradient(&mut ws, v);
    let sum: f64 = (0..pu.len())
        .map(|j| {
            let adv = gx[j] * pu[j].re + gy[j] * pu[j].im;
            adv.re * pw[j].re + adv.im * pw[j].im
        })
        .sum();
    Ok(sum * ws.cell_area())
}

/// `C(u) = P_H(|u|^{r−1} u)`.
pub fn forchheimer(u: &SpectralField, params: &OperatorParams) -> Result<SpectralField, SpectralError> {
    if params.odd_integer_exponent().is_some() {
        u.grid().require_alias_free(params.damping_padding())?;
    }
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let mut prod: Vec<Complex64> = pu.iter().map(|p| *p * abs_pow(p.norm_sqr(), params.r - 1.0)).collect();
    Ok(back_to_field(&mut ws, &mut prod))
}

/// `C'(u)δ = P_H(|u|^{r−1}δ + (r−1)|u|^{r−3}(u·δ)u)`. The derivative is
/// symmetric in the `H` inner product, so this is also its transpose.
pub fn forchheimer_derivative(
    u: &SpectralField,
    delta: &SpectralField,
    params: &OperatorParams,
) -> Result<SpectralField, SpectralError> {
    u.check_grid(delta)?;
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let pd = physical_values(&mut ws, delta);
    let mut out = Vec::new();
    forchheimer_derivative_physical(&pu, &pd, params.r, &mut out);
    Ok(back_to_field(&mut ws, &mut out))
}

pub(crate) fn forchheimer_derivative_physical(pu: &[Complex64], pd: &[Complex64], r: f64, out: &mut Vec<Complex64>) {
    out.clear();
    out.extend(pu.iter().zip(pd).map(|(u, d)| {
        let s = u.norm_sqr();
        let dot = u.re * d.re + u.im * d.im;
        *d * abs_pow(s, r - 1.0) + *u * ((r - 1.0) * abs_pow(s, r - 3.0) * dot)
    }));
}

/// Transpose of `δ ↦ B(δ,u) + B(u,δ)` in `H`:
/// `P_H[Σ_i λ_i ∇u_i] − P_H[(u·∇)λ]`.
pub fn advection_derivative_transpose(
    u: &SpectralField,
    lambda: &SpectralField,
) -> Result<SpectralField, SpectralError> {
    u.check_grid(lambda)?;
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let pl = physical_values(&mut ws, lambda);
    let gu = physical_gradient(&mut ws, u);
    let gl = physical_gradient(&mut ws, lambda);
    let mut out = Vec::new();
    advection_transpose_physical(&pu, &pl, &gu, &gl, &mut out);
    Ok(back_to_field(&mut ws, &mut out))
}

pub(crate) fn advection_transpose_physical(
    pu: &[Complex64],
    pl: &[Complex64],
    gu: &[Vec<Complex64>; 2],
    gl: &[Vec<Complex64>; 2],
    out: &mut Vec<Complex64>,
) {
    out.clear();
    out.extend((0..pu.len()).map(|j| {
        let l = pl[j];
        // component m of (∇u)ᵀλ is Σ_i λ_i ∂_m u_i
        let tx = l.re * gu[0][j].re + l.im * gu[0][j].im;
        let ty = l.re * gu[1][j].re + l.im * gu[1][j].im;
        let adv = gl[0][j] * pu[j].re + gl[1][j] * pu[j].im;
        Complex64::new(tx, ty) - adv
    }));
}

/// `|s|^{e/2}` for `s = |u|²`, with `0^0 = 1` and `0^{>0} = 0`.
#[inline]
pub(crate) fn abs_pow(sq: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        return 1.0;
    }
    let half = exponent * 0.5;
    if half == half.trunc() && half.abs() < 16.0 {
        sq.powi(half as i32)
    } else if sq == 0.0 {
        0.0
    } else {
        sq.powf(half)
    }
}

/// Norms used throughout: `‖u‖_H²`, `‖u‖_V²` by Parseval and the `L^p`
/// norms for `p ∈ {r+1, 2(r+1)/(r−1), 4}` by padded-grid quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormBundle {
    pub h_norm_sq: f64,
    pub v_norm_sq: f64,
    pub l_r_plus_1: f64,
    pub l_interp: f64,
    pub l4: f64,
}

pub fn norms(u: &SpectralField, params: &OperatorParams) -> NormBundle {
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let area = ws.cell_area();
    let lp = |p: f64| -> f64 {
        let s: f64 = pu.iter().map(|v| abs_pow(v.norm_sqr(), p)).sum();
        (s * area).powf(1.0 / p)
    };
    let r = params.r;
    let interp = if r > 1.0 {
        2.0 * (r + 1.0) / (r - 1.0)
    } else {
        f64::INFINITY
    };
    NormBundle {
        h_norm_sq: u.h_norm_sq(),
        v_norm_sq: u.v_norm_sq(),
        l_r_plus_1: lp(r + 1.0),
        l_interp: lp(interp),
        l4: lp(4.0),
    }
}

/// `‖u‖_{L^p}` by quadrature on the padded grid.
pub fn lp_norm(u: &SpectralField, p: f64) -> f64 {
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    let s: f64 = pu.iter().map(|v| abs_pow(v.norm_sqr(), p)).sum();
    (s * ws.cell_area()).powf(1.0 / p)
}

/// `‖|w|^{(r−1)/2} x‖_H² = ∫ |w|^{r−1} |x|² dx`.
pub fn weighted_h_norm_sq(weight: &SpectralField, x: &SpectralField, r: f64) -> Result<f64, SpectralError> {
    weight.check_grid(x)?;
    let mut ws = Workspace::new(x.grid());
    let pw = physical_values(&mut ws, weight);
    let px = physical_values(&mut ws, x);
    let s: f64 = pw
        .iter()
        .zip(&px)
        .map(|(w, v)| abs_pow(w.norm_sqr(), r - 1.0) * v.norm_sqr())
        .sum();
    Ok(s * ws.cell_area())
}

/// Physical-grid quadrature of `|u|²`; agrees with `h_norm_sq` by Parseval.
pub fn quadrature_h_norm_sq(u: &SpectralField) -> f64 {
    let mut ws = Workspace::new(u.grid());
    let pu = physical_values(&mut ws, u);
    pu.iter().map(|v| v.norm_sqr()).sum::<f64>() * ws.cell_area()
}

/// Shifted monotonicity pairing
/// `⟨G(u)−G(v), u−v⟩ + η‖u−v‖_H²` with `G = μA + B + βC`.
pub fn monotonicity_gap(u: &SpectralField, v: &SpectralField, params: &OperatorParams) -> Result<f64, SpectralError> {
    params.validate()?;
    u.check_grid(v)?;
    let w = u - v;
    let linear = params.mu * w.v_norm_sq();
    let bu = advection(u)?;
    let bv = advection(v)?;
    let cu = forchheimer(u, params)?;
    let cv = forchheimer(v, params)?;
    let nonlinear = (&bu - &bv).inner(&w) + params.beta * (&cu - &cv).inner(&w);
    Ok(linear + nonlinear + params.eta() * w.h_norm_sq())
}

/// Physical values of `u` packed as `u1 + i u2`.
pub(crate) fn physical_values(ws: &mut Workspace, u: &SpectralField) -> Vec<Complex64> {
    let packed: Vec<Complex64> = u.coeffs().iter().map(|c| c[0] + I * c[1]).collect();
    let mut out = Vec::new();
    ws.to_physical(&packed, &mut out);
    out
}

/// `[∂_x u, ∂_y u]`, each packed as `∂u1 + i ∂u2`.
pub(crate) fn physical_gradient(ws: &mut Workspace, u: &SpectralField) -> [Vec<Complex64>; 2] {
    let grid = u.grid().clone();
    let mut result = [Vec::new(), Vec::new()];
    for (axis, slot) in result.iter_mut().enumerate() {
        let packed: Vec<Complex64> = u
            .coeffs()
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let (k1, k2) = grid.wavevector(idx);
                let k = if axis == 0 { k1 } else { k2 } as f64;
                (c[0] + I * c[1]) * (I * k)
            })
            .collect();
        ws.to_physical(&packed, slot);
    }
    result
}

/// Forward transform of a packed physical pair, truncated to the lattice
/// and Leray-projected.
pub(crate) fn back_to_field(ws: &mut Workspace, phys: &mut [Complex64]) -> SpectralField {
    let grid: TorusGrid = ws.grid().clone();
    let mut coeffs = vec![[ZERO; 2]; grid.lattice_len()];
    ws.to_spectral(phys, &mut coeffs);
    let mut field = SpectralField::from_raw(&grid, coeffs).expect("lattice length");
    project_in_place(&mut field);
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(4, 2.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        let g = grid();
        let mut raw = SpectralField::zeros(&g);
        raw.set_mode(1, 0, [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let p = leray_project(&raw);
        let c = p.coeff(1, 0).unwrap();
        assert_eq!(c, [ZERO, Complex64::new(1.0, 0.0)]);

        // pure gradient: û = i k ĝ
        let mut grad = SpectralField::zeros(&g);
        grad.set_mode(2, -1, [I * 2.0 * 0.3, I * (-1.0) * 0.3]);
        grad.set_mode(1, 3, [I * Complex64::new(0.1, 0.2), I * 3.0 * Complex64::new(0.1, 0.2)]);
        assert!(leray_project(&grad).h_norm() < 1e-14);
    }

    #[test]
    fn stokes_on_mode_three() {
        let g = grid();
        let mut u = SpectralField::zeros(&g);
        u.set_mode(3, 0, [ZERO, Complex64::new(0.7, 0.0)]);
        let au = stokes_apply(&u);
        assert!(au.max_abs_diff(&u.scaled(9.0)) < 1e-15);
        assert_eq!(fractional_power_apply(&u, 0.0), u);
    }

    #[test]
    fn taylor_green_advection_vanishes() {
        let g = grid();
        // (sin x cos y, −cos x sin y)
        let mut u = SpectralField::zeros(&g);
        let q = Complex64::new(0.0, -0.25);
        u.set_mode(1, 1, [q, -q]);
        u.set_mode(1, -1, [q, q]);
        assert!(u.divergence_defect() < 1e-15);
        let b = advection(&u).unwrap();
        assert!(b.h_norm() < 1e-14, "{}", b.h_norm());
    }

    #[test]
    fn cubic_damping_on_cosine() {
        // r = 3, u = (0, a cos x): C(u) = (0, 3a³/4 cos x + a³/4 cos 3x)
        let g = grid();
        let params = OperatorParams::new(1.0, 1.0, 3.0).unwrap();
        let a = 0.8;
        let mut u = SpectralField::zeros(&g);
        u.set_mode(1, 0, [ZERO, Complex64::new(a / 2.0, 0.0)]);
        let c = forchheimer(&u, &params).unwrap();
        let mut want = SpectralField::zeros(&g);
        want.set_mode(1, 0, [ZERO, Complex64::new(3.0 * a.powi(3) / 8.0, 0.0)]);
        want.set_mode(3, 0, [ZERO, Complex64::new(a.powi(3) / 8.0, 0.0)]);
        assert!(c.max_abs_diff(&want) < 1e-15);

        let g2 = TorusGrid::new(2, 2.0).unwrap();
        let mut u2 = SpectralField::zeros(&g2);
        u2.set_mode(1, 0, [ZERO, Complex64::new(a / 2.0, 0.0)]);
        let c2 = forchheimer(&u2, &params).unwrap();
        assert!((c2.coeff(1, 0).unwrap()[1].re - 3.0 * a.powi(3) / 8.0).abs() < 1e-15);
        assert!(c2.coeff(2, 0).unwrap()[1].norm() < 1e-15);
    }

    #[test]
    fn strict_grid_rejects_underpadding() {
        let g = TorusGrid::with_points(4, 10).unwrap();
        let u = SpectralField::zeros(&g);
        assert!(matches!(advection(&u), Err(SpectralError::GridTooSmall { .. })));
        let p5 = OperatorParams::new(1.0, 1.0, 5.0).unwrap();
        assert!(matches!(forchheimer(&u, &p5), Err(SpectralError::GridTooSmall { .. })));
        assert!(advection(&u.clone_onto(&g.relaxed())).is_ok());
        let p = OperatorParams::new(1.0, 1.0, 4.5).unwrap();
        assert!(forchheimer(&u, &p).is_ok());
    }

    #[test]
    fn eta_examples() {
        let p = OperatorParams::new(1.0, 1.0, 5.0).unwrap();
        assert!((p.eta() - 0.125).abs() < 1e-15);
        let p3 = OperatorParams::new(1.0, 0.5, 3.0).unwrap();
        assert_eq!(p3.eta(), 0.0);
        assert!(OperatorParams::new(1.0, 0.4, 3.0).is_err());
        assert!(OperatorParams::new(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn cosine_norm_values() {
        let g = grid();
        let params = OperatorParams::new(1.0, 1.0, 3.0).unwrap();
        let mut u = SpectralField::zeros(&g);
        u.set_mode(1, 0, [ZERO, Complex64::new(0.5, 0.0)]);
        let nb = norms(&u, &params);
        assert!((nb.h_norm_sq - 2.0 * PI * PI).abs() < 1e-12);
        assert!((nb.v_norm_sq - 2.0 * PI * PI).abs() < 1e-12);
        // ∫cos⁴x = (3/8)(2π)²
        assert!((nb.l4.powi(4) - 0.375 * 4.0 * PI * PI).abs() < 1e-12);
        let z = norms(&SpectralField::zeros(&g), &params);
        assert_eq!(
            (z.h_norm_sq, z.v_norm_sq, z.l_r_plus_1, z.l_interp, z.l4),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }
}
