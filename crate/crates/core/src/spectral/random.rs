use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{leray_project, SpectralField, TorusGrid};

/// Random divergence-free field for property checks: i.i.d. complex Gaussian
/// coefficients damped by `|k|^{−decay}`, Hermitian-symmetrised and
/// Leray-projected.
pub fn random_field<R: Rng + ?Sized>(grid: &TorusGrid, decay: f64, rng: &mut R) -> SpectralField {
    let mut raw = SpectralField::zeros(grid);
    for &idx in grid.half_plane() {
        let (k1, k2) = grid.wavevector(idx);
        let damp = grid.ksq()[idx].powf(-0.5 * decay);
        let mut draw = || {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * damp
        };
        let v = [draw(), draw()];
        raw.set_mode(k1, k2, v);
    }
    leray_project(&raw)
}

/// Random field rescaled to `‖u‖_H = h_norm`.
pub fn random_field_with_norm<R: Rng + ?Sized>(
    grid: &TorusGrid,
    decay: f64,
    h_norm: f64,
    rng: &mut R,
) -> SpectralField {
    let u = random_field(grid, decay, rng);
    let n = u.h_norm();
    if n == 0.0 {
        u
    } else {
        u.scaled(h_norm / n)
    }
}
