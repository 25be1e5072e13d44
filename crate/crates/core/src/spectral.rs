//! Discrete Fourier transform layer.
//!
//! Convention: the forward transform is unscaled, the inverse carries the
//! 1/(Nx*Nv) factor. FFT bin k along an axis of length N represents the
//! signed integer frequency n = k (k < N/2) or k - N (k >= N/2), with
//! physical frequency pi*n/L. Plancherel on the grid therefore reads
//! hx*hv*sum|f|^2 = hx*hv/(Nx*Nv) * sum|fhat|^2.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::{Field, PhaseGrid};
use crate::scalar::{from_usize, Scalar};

/// Complex spectral coefficients of a field, FFT bin order, unscaled forward.
#[derive(Debug, Clone)]
pub struct SpectralField<S: Scalar> {
    pub grid: PhaseGrid<S>,
    pub coefficients: Array2<Complex<S>>,
}

impl<S: Scalar> SpectralField<S> {
    /// Coefficient at signed integer frequencies (nx_freq, nv_freq).
    pub fn at_freq(&self, fx: i64, fv: i64) -> Complex<S> {
        let kx = fx.rem_euclid(self.grid.nx as i64) as usize;
        let kv = fv.rem_euclid(self.grid.nv as i64) as usize;
        self.coefficients[(kx, kv)]
    }
}

/// Planned FFTs for one grid shape. Construct once, reuse across steps.
pub struct SpectralEngine<S: Scalar> {
    pub grid: PhaseGrid<S>,
    fwd_x: Arc<dyn Fft<S>>,
    inv_x: Arc<dyn Fft<S>>,
    fwd_v: Arc<dyn Fft<S>>,
    inv_v: Arc<dyn Fft<S>>,
    kx: Vec<S>,
    kv: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> SpectralEngine<S> {
    pub fn new(grid: PhaseGrid<S>) -> Self {
        let mut planner = FftPlanner::new();
        SpectralEngine {
            grid,
            fwd_x: planner.plan_fft(grid.nx, FftDirection::Forward),
            inv_x: planner.plan_fft(grid.nx, FftDirection::Inverse),
            fwd_v: planner.plan_fft(grid.nv, FftDirection::Forward),
            inv_v: planner.plan_fft(grid.nv, FftDirection::Inverse),
            kx: (0..grid.nx).map(|k| grid.kx(k)).collect(),
            kv: (0..grid.nv).map(|k| grid.kv(k)).collect(),
            v: (0..grid.nv).map(|j| grid.v(j)).collect(),
        }
    }

    /// Physical x-frequencies per bin.
    pub fn kx(&self) -> &[S] {
        &self.kx
    }

    /// Physical v-frequencies per bin.
    pub fn kv(&self) -> &[S] {
        &self.kv
    }

    pub fn v_nodes(&self) -> &[S] {
        &self.v
    }

    fn fft_axis_v(&self, data: &mut Array2<Complex<S>>, fft: &Arc<dyn Fft<S>>) {
        for mut row in data.outer_iter_mut() {
            let slice = row.as_slice_mut().expect("contiguous v-rows");
            fft.process(slice);
        }
    }

    fn fft_axis_x(&self, data: &mut Array2<Complex<S>>, fft: &Arc<dyn Fft<S>>) {
        let nx = self.grid.nx;
        let nv = self.grid.nv;
        let mut scratch = vec![Complex::new(S::zero(), S::zero()); nx];
        for j in 0..nv {
            for i in 0..nx {
                scratch[i] = data[(i, j)];
            }
            fft.process(&mut scratch);
            for i in 0..nx {
                data[(i, j)] = scratch[i];
            }
        }
    }

    /// Unscaled 2-D forward transform of a complex buffer, in place.
    pub fn forward2_inplace(&self, data: &mut Array2<Complex<S>>) {
        self.fft_axis_v(data, &self.fwd_v);
        self.fft_axis_x(data, &self.fwd_x);
    }

    /// Scaled 2-D inverse transform (divides by Nx*Nv), in place.
    pub fn inverse2_inplace(&self, data: &mut Array2<Complex<S>>) {
        self.fft_axis_v(data, &self.inv_v);
        self.fft_axis_x(data, &self.inv_x);
        let scale = S::one() / (from_usize::<S>(self.grid.nx) * from_usize::<S>(self.grid.nv));
        data.mapv_inplace(|c| c * scale);
    }

    /// Inverse transform along v only (scaled by 1/Nv), in place.
    pub fn inverse_v_inplace(&self, data: &mut Array2<Complex<S>>) {
        self.fft_axis_v(data, &self.inv_v);
        let scale = S::one() / from_usize::<S>(self.grid.nv);
        data.mapv_inplace(|c| c * scale);
    }

    /// Inverse transform along x only (scaled by 1/Nx), in place.
    pub fn inverse_x_inplace(&self, data: &mut Array2<Complex<S>>) {
        self.fft_axis_x(data, &self.inv_x);
        let scale = S::one() / from_usize::<S>(self.grid.nx);
        data.mapv_inplace(|c| c * scale);
    }

    /// Forward transform along x only (unscaled), in place.
    pub fn forward_x_inplace(&self, data: &mut Array2<Complex<S>>) {
        self.fft_axis_x(data, &self.fwd_x);
    }

    pub fn complexify(&self, field: &Field<S>) -> Array2<Complex<S>> {
        field.values.mapv(|a| Complex::new(a, S::zero()))
    }

    pub fn realify(&self, data: &Array2<Complex<S>>) -> Field<S> {
        Field {
            grid: self.grid,
            values: data.mapv(|c| c.re),
        }
    }

    /// Full forward transform of a real field.
    pub fn to_spectral(&self, field: &Field<S>) -> SpectralField<S> {
        assert!(
            field.grid.same_shape(&self.grid),
            "engine/grid shape mismatch"
        );
        let mut data = self.complexify(field);
        self.forward2_inplace(&mut data);
        SpectralField {
            grid: self.grid,
            coefficients: data,
        }
    }

    /// Inverse transform back to a real field (imaginary residue dropped).
    pub fn from_spectral(&self, sf: &SpectralField<S>) -> Field<S> {
        let mut data = sf.coefficients.clone();
        self.inverse2_inplace(&mut data);
        self.realify(&data)
    }

    /// Multiplies each coefficient by m(kx_phys, kv_phys).
    pub fn apply_multiplier(
        &self,
        sf: &mut SpectralField<S>,
        m: impl Fn(S, S) -> Complex<S>,
    ) {
        for (i, &kx) in self.kx.iter().enumerate() {
            for (j, &kv) in self.kv.iter().enumerate() {
                let w = m(kx, kv);
                let c = sf.coefficients[(i, j)];
                sf.coefficients[(i, j)] = c * w;
            }
        }
    }

    /// Spectral partial derivative of given orders in x and v.
    pub fn derivative(&self, field: &Field<S>, dx_order: u32, dv_order: u32) -> Field<S> {
        let mut sf = self.to_spectral(field);
        let i_unit = Complex::new(S::zero(), S::one());
        self.apply_multiplier(&mut sf, |kx, kv| {
            let mut w = Complex::new(S::one(), S::zero());
            for _ in 0..dx_order {
                w = w * i_unit * kx;
            }
            for _ in 0..dv_order {
                w = w * i_unit * kv;
            }
            w
        });
        self.from_spectral(&sf)
    }

    /// Exact band-limited translation: result(x, v) = f(x - dx, v - dv).
    pub fn translate(&self, field: &Field<S>, dx: S, dv: S) -> Field<S> {
        let mut sf = self.to_spectral(field);
        self.apply_multiplier(&mut sf, |kx, kv| {
            let phase = -(kx * dx + kv * dv);
            Complex::new(phase.cos(), phase.sin())
        });
        self.from_spectral(&sf)
    }

    /// Low-pass projection keeping modes with |n_x| <= bx and |n_v| <= bv
    /// (integer frequencies).
    pub fn band_limit(&self, field: &Field<S>, bx: usize, bv: usize) -> Field<S> {
        let mut sf = self.to_spectral(field);
        let (nx, nv) = (self.grid.nx, self.grid.nv);
        for i in 0..nx {
            let fx = PhaseGrid::<S>::freq_index(i, nx).unsigned_abs() as usize;
            for j in 0..nv {
                let fv = PhaseGrid::<S>::freq_index(j, nv).unsigned_abs() as usize;
                if fx > bx || fv > bv {
                    sf.coefficients[(i, j)] = Complex::new(S::zero(), S::zero());
                }
            }
        }
        self.from_spectral(&sf)
    }
}

/// One-shot forward transform (plans on the fly; prefer an engine in loops).
pub fn to_spectral<S: Scalar>(field: &Field<S>) -> SpectralField<S> {
    SpectralEngine::new(field.grid).to_spectral(field)
}

/// One-shot inverse transform.
pub fn from_spectral<S: Scalar>(sf: &SpectralField<S>) -> Field<S> {
    SpectralEngine::new(sf.grid).from_spectral(sf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, make_grid};
    use crate::noise::CounterRng;

    fn random_field(grid: PhaseGrid<f64>, seed: u64) -> Field<f64> {
        let mut rng = CounterRng::new(seed, 0);
        let mut f = Field::zeros(grid);
        f.values.mapv_inplace(|_| rng.normal());
        f
    }

    #[test]
    fn constant_field_is_dc_mode() {
        let g = make_grid(8.0f64, 8.0, 32, 32).unwrap();
        let f = Field::constant(g, 3.25);
        let sf = to_spectral(&f);
        assert!((sf.at_freq(0, 0).re - 3.25 * (32.0 * 32.0)).abs() < 1e-9);
        for (idx, c) in sf.coefficients.indexed_iter() {
            if idx != (0, 0) {
                assert!(c.norm() < 1e-9, "leak at {:?}: {}", idx, c.norm());
            }
        }
    }

    #[test]
    fn pure_cosine_has_two_modes() {
        let g = make_grid(8.0, 8.0, 64, 32).unwrap();
        let f = Field::from_fn(g, |x, _| (std::f64::consts::PI * x / 8.0).cos());
        let sf = to_spectral(&f);
        // bin k carries e^{i kappa (x + Lx)}: the -Lx origin contributes the
        // phase e^{-i kappa Lx} = -1 for the fundamental mode
        let expected = 0.5 * 64.0 * 32.0;
        assert!((sf.at_freq(1, 0).norm() - expected).abs() < 1e-8);
        assert!((sf.at_freq(-1, 0).norm() - expected).abs() < 1e-8);
        let mut others = 0.0f64;
        for (idx, c) in sf.coefficients.indexed_iter() {
            if idx != (1, 0) && idx != (63, 0) {
                others = others.max(c.norm());
            }
        }
        assert!(others < 1e-8);
    }

    #[test]
    fn roundtrip_is_identity() {
        let g = make_grid(4.0, 2.0, 64, 32).unwrap();
        let f = random_field(g, 7);
        let back = from_spectral(&to_spectral(&f));
        let num = lp_norm(&back.sub(&f), f64::INFINITY);
        let den = lp_norm(&f, f64::INFINITY);
        assert!(num / den < 1e-12, "roundtrip error {}", num / den);
    }

    #[test]
    fn plancherel_identity() {
        let g = make_grid(4.0, 2.0, 64, 32).unwrap();
        let f = random_field(g, 8);
        let sf = to_spectral(&f);
        let phys: f64 = g.cell() * f.values.iter().map(|a| a * a).sum::<f64>();
        let spec: f64 = g.cell() / (g.nx as f64 * g.nv as f64)
            * sf.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!((phys - spec).abs() / phys < 1e-10);
    }

    #[test]
    fn translation_by_cells_matches_roll() {
        let g = make_grid(4.0, 4.0, 32, 32).unwrap();
        let f = random_field(g, 9);
        let eng = SpectralEngine::new(g);
        // f(x - 3hx, v + 2hv) == roll with (mx, mv) = (-3, +2)
        let t = eng.translate(&f, 3.0 * g.hx(), -2.0 * g.hv());
        let r = f.rolled(-3, 2);
        assert!(lp_norm(&t.sub(&r), f64::INFINITY) < 1e-10);
    }

    #[test]
    fn derivative_of_sine_is_cosine() {
        let g = make_grid(8.0, 8.0, 64, 64).unwrap();
        let k = std::f64::consts::PI / 8.0;
        let f = Field::from_fn(g, |x, _| (3.0 * k * x).sin());
        let eng = SpectralEngine::new(g);
        let d = eng.derivative(&f, 1, 0);
        let exact = Field::from_fn(g, |x, _| 3.0 * k * (3.0 * k * x).cos());
        assert!(lp_norm(&d.sub(&exact), f64::INFINITY) < 1e-10);
    }
}
