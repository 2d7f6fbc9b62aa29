use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::SpectralError;

/// Truncated Fourier lattice on the periodic torus `[0, 2π]²` together with
/// the padded collocation grid used for pseudospectral products.
///
/// Retained wavevectors are `k = (k1, k2)` with `|k1|, |k2| ≤ N`. The zero
/// mode is part of the lattice storage but is always kept at zero, so the
/// smallest Stokes eigenvalue is exactly 1.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<GridInner>,
}

struct GridInner {
    modes: usize,
    points: usize,
    padding: f64,
    strict: bool,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavevectors: Vec<(i32, i32)>,
    ksq: Vec<f64>,
    half_plane: Vec<usize>,
}

impl TorusGrid {
    /// Grid with `modes_per_axis = n` and collocation size chosen as the
    /// smallest 5-smooth integer `M ≥ padding·(2N+1)`.
    pub fn new(n: usize, padding: f64) -> Result<Self, SpectralError> {
        if n == 0 {
            return Err(SpectralError::Config("modes_per_axis must be positive".into()));
        }
        if !(padding >= 1.0) || !padding.is_finite() {
            return Err(SpectralError::Config(format!(
                "padding_factor must be a finite number >= 1, got {padding}"
            )));
        }
        let side = 2 * n + 1;
        let min_points = (padding * side as f64 - 1e-9).ceil() as usize;
        let points = next_smooth(min_points.max(side));
        Self::build(n, points, padding, true)
    }

    /// Grid with an explicit collocation size `m`.
    pub fn with_points(n: usize, m: usize) -> Result<Self, SpectralError> {
        if n == 0 {
            return Err(SpectralError::Config("modes_per_axis must be positive".into()));
        }
        let side = 2 * n + 1;
        if m < side {
            return Err(SpectralError::GridTooSmall {
                required: side,
                actual: m,
            });
        }
        Self::build(n, m, m as f64 / side as f64, true)
    }

    /// Same lattice, quadrature mode: operators accept under-padded grids
    /// instead of returning `GridTooSmall`.
    pub fn relaxed(&self) -> Self {
        Self::build(self.modes(), self.points(), self.inner.padding, false).expect("rebuilding a valid grid")
    }

    fn build(n: usize, m: usize, padding: f64, strict: bool) -> Result<Self, SpectralError> {
        let side = 2 * n + 1;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut wavevectors = Vec::with_capacity(side * side);
        let mut ksq = Vec::with_capacity(side * side);
        for a in 0..side {
            for b in 0..side {
                let k1 = a as i32 - n as i32;
                let k2 = b as i32 - n as i32;
                wavevectors.push((k1, k2));
                ksq.push((k1 * k1 + k2 * k2) as f64);
            }
        }
        let mut half_plane: Vec<usize> = (0..side * side)
            .filter(|&i| {
                let (k1, k2) = wavevectors[i];
                k1 > 0 || (k1 == 0 && k2 > 0)
            })
            .collect();
        half_plane.sort_by(|&i, &j| {
            let (a1, a2) = wavevectors[i];
            let (b1, b2) = wavevectors[j];
            ksq[i].partial_cmp(&ksq[j]).unwrap().then(a1.cmp(&b1)).then(a2.cmp(&b2))
        });
        Ok(Self {
            inner: Arc::new(GridInner {
                modes: n,
                points: m,
                padding,
                strict,
                forward,
                inverse,
                wavevectors,
                ksq,
                half_plane,
            }),
        })
    }

    /// Fourier truncation `N`.
    pub fn modes(&self) -> usize {
        self.inner.modes
    }

    /// Lattice side length `2N+1`.
    pub fn side(&self) -> usize {
        2 * self.inner.modes + 1
    }

    /// Number of lattice sites, `(2N+1)²`.
    pub fn lattice_len(&self) -> usize {
        self.side() * self.side()
    }

    /// Collocation points per axis `M`.
    pub fn points(&self) -> usize {
        self.inner.points
    }

    /// Requested padding factor.
    pub fn padding(&self) -> f64 {
        self.inner.padding
    }

    /// Realised oversampling `M / (2N+1)`.
    pub fn effective_padding(&self) -> f64 {
        self.points() as f64 / self.side() as f64
    }

    pub fn is_strict(&self) -> bool {
        self.inner.strict
    }

    /// Number of real divergence-free degrees of freedom, `(2N+1)² − 1`.
    pub fn modal_len(&self) -> usize {
        self.lattice_len() - 1
    }

    pub fn index(&self, k1: i32, k2: i32) -> Option<usize> {
        let n = self.inner.modes as i32;
        if k1.abs() > n || k2.abs() > n {
            return None;
        }
        Some(((k1 + n) as usize) * self.side() + (k2 + n) as usize)
    }

    pub fn wavevector(&self, idx: usize) -> (i32, i32) {
        self.inner.wavevectors[idx]
    }

    pub fn ksq(&self) -> &[f64] {
        &self.inner.ksq
    }

    /// Lattice index of `−k`.
    pub fn mirror(&self, idx: usize) -> usize {
        self.lattice_len() - 1 - idx
    }

    pub fn zero_index(&self) -> usize {
        self.lattice_len() / 2
    }

    /// Half-plane wavevectors (k1 > 0, or k1 = 0 and k2 > 0) ordered by
    /// `|k|²`. Real mode `2j` is the cosine and `2j+1` the sine partner of
    /// `half_plane()[j]`.
    pub fn half_plane(&self) -> &[usize] {
        &self.inner.half_plane
    }

    /// Stokes eigenvalue `|k|²` of real mode `j`.
    pub fn modal_eigenvalue(&self, mode: usize) -> f64 {
        self.inner.ksq[self.inner.half_plane[mode / 2]]
    }

    pub fn modal_eigenvalues(&self) -> Vec<f64> {
        (0..self.modal_len()).map(|j| self.modal_eigenvalue(j)).collect()
    }

    /// Collocation size needed for oversampling `factor`: quadratic
    /// products need 3/2, the degree-`r` Forchheimer term `(r+1)/2`.
    pub fn alias_free_points(&self, factor: f64) -> usize {
        (factor * self.side() as f64 - 1e-9).ceil() as usize
    }

    pub(crate) fn require_alias_free(&self, factor: f64) -> Result<(), SpectralError> {
        let required = self.alias_free_points(factor);
        if self.is_strict() && self.points() < required {
            return Err(SpectralError::GridTooSmall {
                required,
                actual: self.points(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_plan(&self) -> &Arc<dyn Fft<f64>> {
        &self.inner.forward
    }

    pub(crate) fn inverse_plan(&self) -> &Arc<dyn Fft<f64>> {
        &self.inner.inverse
    }

    /// Two grids are compatible when they share lattice and collocation size.
    pub fn same_as(&self, other: &TorusGrid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || (self.modes() == other.modes() && self.points() == other.points())
    }
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("modes_per_axis", &self.modes())
            .field("points_per_axis", &self.points())
            .field("padding_factor", &self.padding())
            .field("strict", &self.is_strict())
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

fn next_smooth(mut m: usize) -> usize {
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collocation_size_respects_padding() {
        let g = TorusGrid::new(8, 1.5).unwrap();
        assert!(g.points() as f64 >= 1.5 * 17.0);
        assert_eq!(g.points(), 27);
        let g = TorusGrid::new(4, 2.0).unwrap();
        assert_eq!(g.points(), 18);
    }

    #[test]
    fn half_plane_covers_every_nonzero_pair_once() {
        let g = TorusGrid::new(3, 1.0).unwrap();
        assert_eq!(g.half_plane().len() * 2, g.modal_len());
        for &i in g.half_plane() {
            let m = g.mirror(i);
            assert!(!g.half_plane().contains(&m));
            let (a, b) = g.wavevector(i);
            assert_eq!(g.wavevector(m), (-a, -b));
        }
        assert_eq!(g.wavevector(g.zero_index()), (0, 0));
        assert_eq!(g.modal_eigenvalue(0), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TorusGrid::new(0, 2.0).is_err());
        assert!(TorusGrid::new(4, 0.5).is_err());
        assert!(matches!(
            TorusGrid::with_points(4, 5),
            Err(SpectralError::GridTooSmall { .. })
        ));
    }
}
