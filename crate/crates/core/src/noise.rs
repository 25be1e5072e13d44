//! Velocity-time white noise: orthonormal velocity bases, counter-based
//! Gaussian increments for the driving Brownian motions W^k, the truncated
//! Brownian-sheet representation B(t,v) = sum_k (int_0^v eta_k) W^k_t, and
//! the lifting h -> (h eta_1, ..., h eta_N).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{Field, PhaseGrid};
use crate::scalar::{from_usize, lit, Scalar};

// ---------------------------------------------------------------------------
// counter-based RNG
// ---------------------------------------------------------------------------

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stateless hash of the counter tuple (seed, stream, step, lane) to a u64.
/// Identical inputs give identical outputs on every platform and thread
/// schedule, which is what makes trajectories reproducible and parallel-safe.
#[inline]
pub fn counter_u64(seed: u64, stream: u64, step: u64, lane: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x243f6a8885a308d3);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ lane);
    h
}

#[inline]
fn to_open_unit(bits: u64) -> f64 {
    // (0, 1]: avoids log(0) in Box-Muller
    (((bits >> 11) as f64) + 1.0) / 9007199254740992.0
}

/// Standard normal from the counter tuple via Box-Muller (cosine branch).
pub fn counter_normal<S: Scalar>(seed: u64, stream: u64, step: u64, lane: u64) -> S {
    let u1 = to_open_unit(counter_u64(seed, stream, step, lane.wrapping_mul(2)));
    let u2 = to_open_unit(counter_u64(
        seed,
        stream,
        step,
        lane.wrapping_mul(2).wrapping_add(1),
    ));
    let mag = (-2.0 * u1.ln()).sqrt();
    lit(mag * (2.0 * std::f64::consts::PI * u2).cos())
}

/// Sequential convenience wrapper over the counter hash.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng {
            seed,
            stream,
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = counter_u64(self.seed, self.stream, 0, self.counter);
        self.counter += 1;
        out
    }

    pub fn uniform(&mut self) -> f64 {
        to_open_unit(self.next_u64())
    }

    pub fn normal<S: Scalar>(&mut self) -> S {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        lit(mag * (2.0 * std::f64::consts::PI * u2).cos())
    }
}

// ---------------------------------------------------------------------------
// orthonormal velocity bases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Trigonometric,
    Haar,
}

/// Orthonormal family {eta_k} on the v-grid: hv * sum_j eta_a(v_j) eta_b(v_j)
/// = delta_ab.
#[derive(Debug, Clone)]
pub struct NoiseBasis<S: Scalar> {
    pub kind: BasisKind,
    pub lv: S,
    pub n: usize,
    /// n x Nv sampled basis functions.
    pub eta: Array2<S>,
    /// n x Nv trapezoid antiderivatives int_0^{v_j} eta_k.
    pub eta_int: Array2<S>,
}

/// Builds the basis; trigonometric = normalized constant/cosine/sine family,
/// haar = L2-normalized Haar wavelets on dyadic subintervals.
pub fn make_basis<S: Scalar>(grid: &PhaseGrid<S>, n: usize, kind: BasisKind) -> Result<NoiseBasis<S>> {
    if n == 0 || n > grid.nv / 2 {
        return Err(Error::Config(format!(
            "basis size must satisfy 1 <= N <= Nv/2, got N={n}, Nv={}",
            grid.nv
        )));
    }
    let nv = grid.nv;
    let mut eta = Array2::zeros((n, nv));
    match kind {
        BasisKind::Trigonometric => {
            let inv_sqrt_2lv = (lit::<S>(2.0) * grid.lv).sqrt().recip();
            let inv_sqrt_lv = grid.lv.sqrt().recip();
            for j in 0..nv {
                eta[(0, j)] = inv_sqrt_2lv;
            }
            let mut k = 1usize;
            let mut m = 1usize;
            while k < n {
                let freq = S::PI() * from_usize::<S>(m) / grid.lv;
                for j in 0..nv {
                    eta[(k, j)] = (freq * grid.v(j)).cos() * inv_sqrt_lv;
                }
                k += 1;
                if k < n {
                    for j in 0..nv {
                        eta[(k, j)] = (freq * grid.v(j)).sin() * inv_sqrt_lv;
                    }
                    k += 1;
                }
                m += 1;
            }
        }
        BasisKind::Haar => {
            // father wavelet then dyadic levels, all grid-aligned
            let inv_sqrt_2lv = (lit::<S>(2.0) * grid.lv).sqrt().recip();
            for j in 0..nv {
                eta[(0, j)] = inv_sqrt_2lv;
            }
            let mut k = 1usize;
            let mut level = 0usize;
            'outer: loop {
                let pieces = 1usize << level; // wavelets at this level
                let width = nv / pieces;
                if width < 2 {
                    return Err(Error::Config(format!(
                        "haar basis of size {n} needs finer grid (Nv={nv})"
                    )));
                }
                // L2 normalization: |h| = 1/sqrt(interval length)
                let interval = lit::<S>(2.0) * grid.lv / from_usize::<S>(pieces);
                let amp = interval.sqrt().recip();
                for p in 0..pieces {
                    if k >= n {
                        break 'outer;
                    }
                    let start = p * width;
                    for j in 0..width / 2 {
                        eta[(k, start + j)] = amp;
                    }
                    for j in width / 2..width {
                        eta[(k, start + j)] = -amp;
                    }
                    k += 1;
                }
                level += 1;
            }
        }
    }
    // antiderivatives int_0^v eta_k by trapezoid rule from the v = 0 node
    let j0 = nv / 2; // v(j0) = 0 exactly
    let hv = grid.hv();
    let half = lit::<S>(0.5);
    let mut eta_int = Array2::zeros((n, nv));
    for k in 0..n {
        let mut acc = S::zero();
        for j in j0..nv - 1 {
            eta_int[(k, j)] = acc;
            acc += half * hv * (eta[(k, j)] + eta[(k, j + 1)]);
        }
        eta_int[(k, nv - 1)] = acc;
        let mut acc = S::zero();
        for j in (0..j0).rev() {
            acc -= half * hv * (eta[(k, j)] + eta[(k, j + 1)]);
            eta_int[(k, j)] = acc;
        }
        eta_int[(k, j0)] = S::zero();
    }
    Ok(NoiseBasis {
        kind,
        lv: grid.lv,
        n,
        eta,
        eta_int,
    })
}

impl<S: Scalar> NoiseBasis<S> {
    /// Gram matrix entry hv * <eta_a, eta_b> on the grid.
    pub fn gram(&self, grid: &PhaseGrid<S>, a: usize, b: usize) -> S {
        let mut s = S::zero();
        for j in 0..grid.nv {
            s += self.eta[(a, j)] * self.eta[(b, j)];
        }
        s * grid.hv()
    }

    /// Projection of a v-profile onto the first `n` basis functions.
    pub fn project(&self, grid: &PhaseGrid<S>, profile: &[S], n: usize) -> Vec<S> {
        assert!(n <= self.n);
        let hv = grid.hv();
        (0..n)
            .map(|k| {
                let mut s = S::zero();
                for j in 0..grid.nv {
                    s += self.eta[(k, j)] * profile[j];
                }
                s * hv
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Wiener increments
// ---------------------------------------------------------------------------

/// Precomputed Gaussian increments dW[step][k] ~ N(0, dt), reproducible from
/// (seed, stream_id) via the counter hash (seed, stream, step, k).
#[derive(Debug, Clone)]
pub struct WienerIncrements<S: Scalar> {
    pub seed: u64,
    pub stream_id: u64,
    pub dt: S,
    pub steps: usize,
    pub channels: usize,
    pub dw: Array2<S>,
}

impl<S: Scalar> WienerIncrements<S> {
    pub fn generate(seed: u64, stream_id: u64, dt: S, steps: usize, channels: usize) -> Self {
        let sqrt_dt = dt.sqrt();
        let mut dw = Array2::zeros((steps, channels));
        for step in 0..steps {
            for k in 0..channels {
                dw[(step, k)] =
                    counter_normal::<S>(seed, stream_id, step as u64, k as u64) * sqrt_dt;
            }
        }
        WienerIncrements {
            seed,
            stream_id,
            dt,
            steps,
            channels,
            dw,
        }
    }

    pub fn row(&self, step: usize) -> ndarray::ArrayView1<'_, S> {
        self.dw.row(step)
    }

    /// W^k at step boundaries: cumulative sums, W(0) = 0.
    pub fn path(&self, k: usize) -> Vec<S> {
        let mut out = Vec::with_capacity(self.steps + 1);
        let mut acc = S::zero();
        out.push(acc);
        for step in 0..self.steps {
            acc += self.dw[(step, k)];
            out.push(acc);
        }
        out
    }
}

/// Truncated Brownian sheet B(t_step, v) = sum_k (int_0^v eta_k) W^k_step.
pub fn sheet_value<S: Scalar>(
    inc: &WienerIncrements<S>,
    basis: &NoiseBasis<S>,
    grid: &PhaseGrid<S>,
    step: usize,
    v: S,
) -> S {
    assert!(step <= inc.steps, "step out of range");
    assert!(inc.channels >= basis.n);
    // nearest node for the precomputed antiderivative
    let hv = grid.hv();
    let j = ((v + grid.lv) / hv)
        .round()
        .to_usize()
        .unwrap_or(0)
        .min(grid.nv - 1);
    let mut out = S::zero();
    for k in 0..basis.n {
        let mut w = S::zero();
        for s in 0..step {
            w += inc.dw[(s, k)];
        }
        out += basis.eta_int[(k, j)] * w;
    }
    out
}

// ---------------------------------------------------------------------------
// sequence-valued fields and the lifting G_N
// ---------------------------------------------------------------------------

/// l2-sequence-valued field: component fields indexed by the basis index k.
#[derive(Debug, Clone)]
pub struct SequenceField<S: Scalar> {
    pub components: Vec<Field<S>>,
}

impl<S: Scalar> SequenceField<S> {
    /// Pointwise l2 norm across components, as a field.
    pub fn pointwise_l2(&self) -> Field<S> {
        let grid = self.components[0].grid;
        let mut acc = Field::zeros(grid);
        for c in &self.components {
            ndarray::Zip::from(&mut acc.values)
                .and(&c.values)
                .for_each(|a, &b| *a += b * b);
        }
        acc.map(|a| a.sqrt())
    }

    /// L^p norm of the pointwise l2 norm.
    pub fn lp_l2_norm(&self, p: S) -> S {
        crate::grid::lp_norm(&self.pointwise_l2(), p)
    }
}

/// The lifting G_N(h) = (h eta_1, ..., h eta_N): scalar noise intensity to a
/// finite family of Ito integrands.
pub fn lift_g<S: Scalar>(h: &Field<S>, basis: &NoiseBasis<S>, n: usize) -> SequenceField<S> {
    assert!(n <= basis.n, "lift size exceeds basis size");
    let grid = h.grid;
    let mut components = Vec::with_capacity(n);
    for k in 0..n {
        let mut c = Field::zeros(grid);
        for i in 0..grid.nx {
            for j in 0..grid.nv {
                c.values[(i, j)] = h.values[(i, j)] * basis.eta[(k, j)];
            }
        }
        components.push(c);
    }
    SequenceField { components }
}

/// The v-profile sum_k eta_k(v) w_k; multiplying a field by this profile is
/// the collapsed form of sum_k G_N(h)^k w_k.
pub fn noise_profile<S: Scalar>(basis: &NoiseBasis<S>, weights: &[S]) -> Vec<S> {
    let nv = basis.eta.ncols();
    let mut out = vec![S::zero(); nv];
    for (k, &w) in weights.iter().enumerate().take(basis.n) {
        for j in 0..nv {
            out[j] += basis.eta[(k, j)] * w;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn trig_orthonormality() {
        let g = make_grid(8.0f64, 8.0, 16, 64).unwrap();
        let b = make_basis(&g, 2, BasisKind::Trigonometric).unwrap();
        assert!((b.gram(&g, 0, 0) - 1.0).abs() < 1e-12);
        assert!((b.gram(&g, 1, 1) - 1.0).abs() < 1e-12);
        assert!(b.gram(&g, 0, 1).abs() < 1e-12);
    }

    #[test]
    fn haar_gram_is_identity() {
        let g = make_grid(8.0f64, 8.0, 16, 64).unwrap();
        let b = make_basis(&g, 4, BasisKind::Haar).unwrap();
        for a in 0..4 {
            for c in 0..4 {
                let want = if a == c { 1.0 } else { 0.0 };
                assert!(
                    (b.gram(&g, a, c) - want).abs() < 1e-12,
                    "gram({a},{c}) = {}",
                    b.gram(&g, a, c)
                );
            }
        }
    }

    #[test]
    fn full_trig_gram_identity() {
        let g = make_grid(8.0f64, 4.0, 16, 64).unwrap();
        let b = make_basis(&g, 32, BasisKind::Trigonometric).unwrap();
        for a in 0..32 {
            for c in a..32 {
                let want = if a == c { 1.0 } else { 0.0 };
                assert!(
                    (b.gram(&g, a, c) - want).abs() < 1e-10,
                    "gram({a},{c}) = {}",
                    b.gram(&g, a, c)
                );
            }
        }
    }

    #[test]
    fn basis_size_precondition() {
        let g = make_grid(8.0f64, 8.0, 16, 64).unwrap();
        assert!(make_basis(&g, 33, BasisKind::Trigonometric).is_err());
        assert!(make_basis(&g, 0, BasisKind::Trigonometric).is_err());
    }

    #[test]
    fn completeness_refinement() {
        // projection error onto the first N functions decreases to ~0 for a
        // band-limited profile as N -> Nv/2
        let g = make_grid(8.0f64, 8.0, 16, 128).unwrap();
        let b = make_basis(&g, 64, BasisKind::Trigonometric).unwrap();
        let profile: Vec<f64> = (0..g.nv)
            .map(|j| {
                let v = g.v(j);
                (std::f64::consts::PI * v / 8.0).cos() + 0.3 * (3.0 * std::f64::consts::PI * v / 8.0).sin()
            })
            .collect();
        let mut prev = f64::INFINITY;
        for &n in &[2usize, 8, 32, 64] {
            let coef = b.project(&g, &profile, n);
            let mut err = 0.0;
            for j in 0..g.nv {
                let mut rec = 0.0;
                for k in 0..n {
                    rec += coef[k] * b.eta[(k, j)];
                }
                err += (profile[j] - rec).powi(2);
            }
            err = (err * g.hv()).sqrt();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
        assert!(prev < 1e-10, "final projection error {prev}");
    }

    #[test]
    fn increments_are_reproducible() {
        let a = WienerIncrements::<f64>::generate(42, 7, 1e-3, 100, 8);
        let b = WienerIncrements::<f64>::generate(42, 7, 1e-3, 100, 8);
        assert_eq!(a.dw, b.dw);
        let c = WienerIncrements::<f64>::generate(42, 8, 1e-3, 100, 8);
        assert_ne!(a.dw, c.dw);
    }

    #[test]
    fn increment_moments() {
        let dt = 1e-2;
        let inc = WienerIncrements::<f64>::generate(1, 0, dt, 20_000, 2);
        for k in 0..2 {
            let col: Vec<f64> = (0..inc.steps).map(|s| inc.dw[(s, k)]).collect();
            let (mean, se) = crate::stats::mean_se(&col);
            assert!(mean.abs() < 5.0 * se, "mean {mean} vs se {se}");
            let var = crate::stats::variance(&col);
            // SE of the variance of a Gaussian sample: var*sqrt(2/(n-1))
            let var_se = var * (2.0 / (inc.steps as f64 - 1.0)).sqrt();
            assert!((var - dt).abs() < 5.0 * var_se);
        }
    }

    #[test]
    fn column_independence() {
        let inc = WienerIncrements::<f64>::generate(3, 1, 1.0, 10_000, 4);
        for a in 0..4 {
            for b in (a + 1)..4 {
                let mut corr = 0.0;
                for s in 0..inc.steps {
                    corr += inc.dw[(s, a)] * inc.dw[(s, b)];
                }
                corr /= inc.steps as f64;
                assert!(corr.abs() < 5.0 / (inc.steps as f64).sqrt());
            }
        }
    }

    #[test]
    fn sheet_vanishes_on_axes() {
        let g = make_grid(8.0f64, 8.0, 16, 64).unwrap();
        let b = make_basis(&g, 16, BasisKind::Trigonometric).unwrap();
        let inc = WienerIncrements::<f64>::generate(5, 0, 1e-2, 50, 16);
        for step in [0usize, 10, 50] {
            assert_eq!(sheet_value(&inc, &b, &g, step, 0.0), 0.0);
        }
        for &v in &[-3.0, 0.5, 2.0] {
            assert_eq!(sheet_value(&inc, &b, &g, 0, v), 0.0);
        }
    }

    #[test]
    fn lift_g_basics() {
        let g = make_grid(4.0f64, 4.0, 8, 32).unwrap();
        let b = make_basis(&g, 4, BasisKind::Trigonometric).unwrap();
        let zero = Field::zeros(g);
        let lz = lift_g(&zero, &b, 4);
        assert!(lz.lp_l2_norm(2.0) == 0.0);
        let one = Field::constant(g, 1.0);
        let l1 = lift_g(&one, &b, 1);
        for i in 0..g.nx {
            for j in 0..g.nv {
                assert_eq!(l1.components[0].values[(i, j)], b.eta[(0, j)]);
            }
        }
    }
}
