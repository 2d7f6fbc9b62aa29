use std::f64::consts::{PI, SQRT_2};
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::{SpectralError, TorusGrid};

/// `(2π)²`, the area of the torus.
pub const TORUS_AREA: f64 = 4.0 * PI * PI;

/// Modal coordinate ↔ complex amplitude scale: a unit real mode
/// `k̂⊥ cos(k·x)/(π√2)` has amplitude `1/(2π√2)` at `±k`.
const MODAL_SCALE: f64 = 2.0 * PI * SQRT_2;

/// Velocity field on the torus stored as Fourier coefficients
/// `u(x) = Σ_k û(k) e^{ik·x}`, one complex 2-vector per lattice site.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<[Complex64; 2]>,
}

impl SpectralField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![[Complex64::new(0.0, 0.0); 2]; grid.lattice_len()],
        }
    }

    /// Wraps raw coefficients without projecting; callers are responsible for
    /// the field invariants (see [`leray_project`](super::leray_project)).
    pub fn from_raw(grid: &TorusGrid, coeffs: Vec<[Complex64; 2]>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.lattice_len() {
            return Err(SpectralError::Config(format!(
                "expected {} lattice coefficients, got {}",
                grid.lattice_len(),
                coeffs.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Same coefficients attached to another grid with the same lattice
    /// (e.g. a relaxed or differently padded one).
    pub fn clone_onto(&self, grid: &TorusGrid) -> Self {
        assert_eq!(grid.modes(), self.grid.modes(), "lattice mismatch");
        Self {
            grid: grid.clone(),
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn coeffs(&self) -> &[[Complex64; 2]] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [[Complex64; 2]] {
        &mut self.coeffs
    }

    pub fn coeff(&self, k1: i32, k2: i32) -> Option<[Complex64; 2]> {
        self.grid.index(k1, k2).map(|i| self.coeffs[i])
    }

    /// Sets `û(k)` and the mirrored `û(−k) = conj(û(k))`.
    pub fn set_mode(&mut self, k1: i32, k2: i32, value: [Complex64; 2]) {
        let i = self.grid.index(k1, k2).expect("wavevector outside truncation");
        let j = self.grid.mirror(i);
        self.coeffs[i] = value;
        self.coeffs[j] = [value[0].conj(), value[1].conj()];
    }

    pub(crate) fn check_grid(&self, other: &SpectralField) -> Result<(), SpectralError> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch)
        }
    }

    /// Builds a field from its coordinates in the real orthonormal Stokes
    /// eigenbasis. Mode `2j` is `k̂⊥ cos(k·x)/(π√2)`, mode `2j+1` the sine
    /// partner, for `k = half_plane()[j]` and `k̂⊥ = (−k2, k1)/|k|`.
    pub fn from_modal(grid: &TorusGrid, modal: &[f64]) -> Self {
        assert_eq!(modal.len(), grid.modal_len(), "modal vector length");
        let mut field = Self::zeros(grid);
        for (j, &idx) in grid.half_plane().iter().enumerate() {
            let c = modal[2 * j];
            let s = modal[2 * j + 1];
            let amp = Complex64::new(c, -s) / MODAL_SCALE;
            let perp = unit_perp(grid.wavevector(idx));
            let v = [amp * perp[0], amp * perp[1]];
            field.coeffs[idx] = v;
            field.coeffs[grid.mirror(idx)] = [v[0].conj(), v[1].conj()];
        }
        field
    }

    /// Coordinates in the real orthonormal Stokes eigenbasis. Gradient
    /// components (along `k`) are discarded.
    pub fn to_modal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.modal_len()];
        self.write_modal(&mut out);
        out
    }

    pub fn write_modal(&self, out: &mut [f64]) {
        for (j, &idx) in self.grid.half_plane().iter().enumerate() {
            let perp = unit_perp(self.grid.wavevector(idx));
            let c = self.coeffs[idx];
            let amp = c[0] * perp[0] + c[1] * perp[1];
            out[2 * j] = MODAL_SCALE * amp.re;
            out[2 * j + 1] = -MODAL_SCALE * amp.im;
        }
    }

    /// In-place `self += a·from_modal(modal)` without allocating.
    pub fn add_modal(&mut self, a: f64, modal: &[f64]) {
        let grid = self.grid.clone();
        for (j, &idx) in grid.half_plane().iter().enumerate() {
            let (c, s) = (modal[2 * j], modal[2 * j + 1]);
            if c == 0.0 && s == 0.0 {
                continue;
            }
            let amp = Complex64::new(c, -s) * (a / MODAL_SCALE);
            let perp = unit_perp(grid.wavevector(idx));
            let m = grid.mirror(idx);
            for (i, &p) in perp.iter().enumerate() {
                let v = amp * p;
                self.coeffs[idx][i] += v;
                self.coeffs[m][i] += v.conj();
            }
        }
    }

    /// `‖u‖_H² = (2π)² Σ_k |û(k)|²`.
    pub fn h_norm_sq(&self) -> f64 {
        TORUS_AREA
            * self
                .coeffs
                .iter()
                .map(|c| c[0].norm_sqr() + c[1].norm_sqr())
                .sum::<f64>()
    }

    pub fn h_norm(&self) -> f64 {
        self.h_norm_sq().sqrt()
    }

    /// `‖u‖_V² = ‖∇u‖² = (2π)² Σ_k |k|² |û(k)|²`.
    pub fn v_norm_sq(&self) -> f64 {
        let ksq = self.grid.ksq();
        TORUS_AREA
            * self
                .coeffs
                .iter()
                .zip(ksq)
                .map(|(c, &q)| q * (c[0].norm_sqr() + c[1].norm_sqr()))
                .sum::<f64>()
    }

    /// `L²(O)` inner product `(u, v)`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert!(self.grid.same_as(&other.grid));
        TORUS_AREA
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a[0] * b[0].conj() + a[1] * b[1].conj()).re)
                .sum::<f64>()
    }

    /// `max_k |k·û(k)|`.
    pub fn divergence_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (k1, k2) = self.grid.wavevector(i);
                (c[0] * k1 as f64 + c[1] * k2 as f64).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max_k |û(−k) − conj(û(k))|`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| {
                let j = self.grid.mirror(i);
                let a = self.coeffs[i];
                let b = self.coeffs[j];
                (a[0] - b[0].conj()).norm().max((a[1] - b[1].conj()).norm())
            })
            .fold(0.0, f64::max)
    }

    /// In-place `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        debug_assert!(self.grid.same_as(&other.grid));
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            x[0] += y[0] * a;
            x[1] += y[1] * a;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.coeffs.iter_mut() {
            x[0] *= a;
            x[1] *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// Multiplies mode `k` by `m(|k|²)`.
    pub fn map_modes(&self, mut m: impl FnMut(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (c, &q) in out.coeffs.iter_mut().zip(self.grid.ksq()) {
            let f = if q == 0.0 { 0.0 } else { m(q) };
            c[0] *= f;
            c[1] *= f;
        }
        out
    }

    /// Largest coefficient difference, for exact-equality style checks.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a[0] - b[0]).norm().max((a[1] - b[1]).norm()))
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c[0] == Complex64::new(0.0, 0.0) && c[1] == Complex64::new(0.0, 0.0))
    }
}

pub(crate) fn unit_perp((k1, k2): (i32, i32)) -> [f64; 2] {
    let norm = ((k1 * k1 + k2 * k2) as f64).sqrt();
    [-(k2 as f64) / norm, k1 as f64 / norm]
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.coeffs == other.coeffs
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_mode_norms() {
        let g = TorusGrid::new(4, 2.0).unwrap();
        let mut u = SpectralField::zeros(&g);
        // u = (0, cos x)
        u.set_mode(1, 0, [Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0)]);
        let two_pi_sq = 2.0 * PI * PI;
        assert!((u.h_norm_sq() - two_pi_sq).abs() < 1e-12);
        assert!((u.v_norm_sq() - two_pi_sq).abs() < 1e-12);
        assert_eq!(u.divergence_defect(), 0.0);
        assert_eq!(u.hermitian_defect(), 0.0);
    }

    #[test]
    fn modal_basis_is_orthonormal() {
        let g = TorusGrid::new(3, 1.0).unwrap();
        for j in [0, 1, 5, 17, g.modal_len() - 1] {
            let mut e = vec![0.0; g.modal_len()];
            e[j] = 1.0;
            let f = SpectralField::from_modal(&g, &e);
            assert!((f.h_norm_sq() - 1.0).abs() < 1e-13);
            assert!(f.divergence_defect() < 1e-15);
            assert!(f.hermitian_defect() < 1e-15);
            let back = f.to_modal();
            for (i, v) in back.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-13);
            }
        }
    }
}
