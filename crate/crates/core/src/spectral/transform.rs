use std::f64::consts::PI;

use num_complex::Complex64;

use super::TorusGrid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Scratch space for moving pairs of real fields between the Fourier
/// lattice and the padded collocation grid.
///
/// Two real fields `a`, `b` travel packed as `a + i b`, so one complex
/// transform serves both. Physical arrays are stored with layout
/// `[j2][j1]` (the transposed order falls out of the 2-D pass structure);
/// pointwise products and quadrature do not care.
pub struct Workspace {
    grid: TorusGrid,
    buf: Vec<Complex64>,
    tmp: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Workspace {
    pub fn new(grid: &TorusGrid) -> Self {
        let m = grid.points();
        let scratch_len = grid
            .forward_plan()
            .get_inplace_scratch_len()
            .max(grid.inverse_plan().get_inplace_scratch_len());
        Self {
            grid: grid.clone(),
            buf: vec![ZERO; m * m],
            tmp: vec![ZERO; m * m],
            scratch: vec![ZERO; scratch_len],
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Quadrature weight `(2π/M)²`.
    pub fn cell_area(&self) -> f64 {
        let h = 2.0 * PI / self.grid.points() as f64;
        h * h
    }

    fn wrap(&self, k: i32) -> usize {
        let m = self.grid.points() as i32;
        k.rem_euclid(m) as usize
    }

    /// Evaluates `a(x) + i b(x)` on the collocation grid, where `packed[idx]`
    /// holds `â(k) + i b̂(k)` for lattice site `idx`. Output goes to `out`.
    pub fn to_physical(&mut self, packed: &[Complex64], out: &mut Vec<Complex64>) {
        let m = self.grid.points();
        let n = self.grid.modes() as i32;
        let side = self.grid.side();
        self.buf.iter_mut().for_each(|c| *c = ZERO);
        for (idx, &p) in packed.iter().enumerate() {
            let (k1, k2) = self.grid.wavevector(idx);
            let pos = self.wrap(k1) * m + self.wrap(k2);
            self.buf[pos] = p;
        }
        let inv = self.grid.inverse_plan().clone();
        for a in 0..side {
            let row = self.wrap(a as i32 - n);
            inv.process_with_scratch(&mut self.buf[row * m..(row + 1) * m], &mut self.scratch);
        }
        transpose(&self.buf, &mut self.tmp, m);
        inv.process_with_scratch(&mut self.tmp, &mut self.scratch);
        out.clear();
        out.extend_from_slice(&self.tmp);
    }

    /// Inverse of [`to_physical`](Self::to_physical) restricted to the
    /// retained lattice: returns `(â(k), b̂(k))` for the real fields packed
    /// in `phys`. `phys` is consumed as scratch.
    pub fn to_spectral(&mut self, phys: &mut [Complex64], out: &mut [[Complex64; 2]]) {
        let m = self.grid.points();
        let n = self.grid.modes() as i32;
        let fwd = self.grid.forward_plan().clone();
        fwd.process_with_scratch(phys, &mut self.scratch);
        transpose(phys, &mut self.buf, m);
        for k1 in -n..=n {
            let row = self.wrap(k1);
            fwd.process_with_scratch(&mut self.buf[row * m..(row + 1) * m], &mut self.scratch);
        }
        let norm = 1.0 / (m * m) as f64;
        for (idx, slot) in out.iter_mut().enumerate() {
            let (k1, k2) = self.grid.wavevector(idx);
            let f = self.buf[self.wrap(k1) * m + self.wrap(k2)];
            let g = self.buf[self.wrap(-k1) * m + self.wrap(-k2)].conj();
            let a = (f + g) * 0.5 * norm;
            let b = (f - g) * Complex64::new(0.0, -0.5) * norm;
            *slot = [a, b];
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in 0..m {
            dst[j * m + i] = src[i * m + j];
        }
    }
}
