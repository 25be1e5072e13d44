//! Reusable field constructors for experiments and tests: smooth bumps,
//! random band-limited fields, rough Weierstrass-type profiles, and
//! mollified velocity combs.

use crate::grid::{Field, PhaseGrid};
use crate::noise::CounterRng;
use crate::scalar::{from_usize, lit, Scalar};
use crate::spectral::SpectralEngine;

/// Gaussian bump exp(-(x/sx)^2 - (v/sv)^2).
pub fn gaussian_bump<S: Scalar>(grid: PhaseGrid<S>, sx: S, sv: S) -> Field<S> {
    Field::from_fn(grid, |x, v| {
        (-(x / sx) * (x / sx) - (v / sv) * (v / sv)).exp()
    })
}

/// Random field with iid normal entries, then band-limited to integer
/// frequencies |n_x| <= bx, |n_v| <= bv and normalized to unit sup norm.
pub fn band_limited_random<S: Scalar>(
    grid: PhaseGrid<S>,
    bx: usize,
    bv: usize,
    seed: u64,
) -> Field<S> {
    let mut rng = CounterRng::new(seed, 0);
    let mut f = Field::zeros(grid);
    f.values.mapv_inplace(|_| rng.normal());
    let engine = SpectralEngine::new(grid);
    let f = engine.band_limit(&f, bx, bv);
    let sup = crate::grid::lp_norm(&f, S::infinity());
    f.scaled(sup.recip())
}

/// Random band-limited field multiplied by a Gaussian window in v, so the
/// shear never touches significant mass at the v-boundary.
pub fn localized_random<S: Scalar>(
    grid: PhaseGrid<S>,
    bx: usize,
    bv: usize,
    seed: u64,
) -> Field<S> {
    let f = band_limited_random(grid, bx, bv, seed);
    let w = lit::<S>(0.35) * grid.lv;
    let windowed = Field::from_fn(grid, |_, v| (-(v / w) * (v / w)).exp());
    let g = f.mul(&windowed);
    let sup = crate::grid::lp_norm(&g, S::infinity());
    g.scaled(sup.recip())
}

/// Lacunary Weierstrass-type profile in x with Hoelder exponent `alpha`:
/// sum_k 2^(-alpha k) cos(2^k pi x / Lx + phase_k), normalized to unit sup
/// and extended constantly in v. Rough at every scale down to the grid.
pub fn weierstrass_x<S: Scalar>(grid: PhaseGrid<S>, alpha: S, seed: u64) -> Field<S> {
    let mut rng = CounterRng::new(seed, 1);
    let k_max = (grid.nx as f64 / 4.0).log2().floor() as usize;
    let phases: Vec<S> = (0..=k_max)
        .map(|_| lit::<S>(rng.uniform() * 2.0 * std::f64::consts::PI))
        .collect();
    let mut profile = vec![S::zero(); grid.nx];
    for (k, &phase) in phases.iter().enumerate() {
        let amp = lit::<S>(2f64.powf(-(k as f64) * alpha.to_f64().unwrap()));
        let freq = S::PI() * lit::<S>(2f64.powi(k as i32)) / grid.lx;
        for (i, p) in profile.iter_mut().enumerate() {
            *p += amp * (freq * grid.x(i) + phase).cos();
        }
    }
    let sup = profile
        .iter()
        .fold(S::zero(), |acc, &a| acc.max(a.abs()));
    let mut f = Field::zeros(grid);
    for i in 0..grid.nx {
        let val = profile[i] / sup;
        for j in 0..grid.nv {
            f.values[(i, j)] = val;
        }
    }
    f
}

/// Mollified Dirac comb in v: unit-mass spikes (height 1/hv) at the grid
/// nodes nearest to the given positions, constant in x.
pub fn comb_v<S: Scalar>(grid: PhaseGrid<S>, positions: &[S]) -> Field<S> {
    let mut f = Field::zeros(grid);
    let hv = grid.hv();
    for &p in positions {
        let j = ((p + grid.lv) / hv)
            .round()
            .to_i64()
            .unwrap_or(0)
            .rem_euclid(grid.nv as i64) as usize;
        let spike = hv.recip();
        for i in 0..grid.nx {
            f.values[(i, j)] += spike;
        }
    }
    f
}

/// Uniformly random comb positions inside (1-margin) of the box.
pub fn random_comb_positions<S: Scalar>(grid: &PhaseGrid<S>, count: usize, seed: u64) -> Vec<S> {
    let mut rng = CounterRng::new(seed, 2);
    (0..count)
        .map(|_| {
            let u = lit::<S>(rng.uniform() * 2.0 - 1.0);
            u * grid.lv * lit::<S>(0.9)
        })
        .collect()
}

/// Corpus of `count` distinct localized random fields for constant-measuring
/// sweeps.
pub fn corpus<S: Scalar>(grid: PhaseGrid<S>, bx: usize, bv: usize, count: usize) -> Vec<Field<S>> {
    (0..count)
        .map(|i| localized_random(grid, bx, bv, 1000 + i as u64))
        .collect()
}

/// Product Gaussian probability density centered at (cx, cv).
pub fn gaussian_density<S: Scalar>(
    grid: PhaseGrid<S>,
    cx: S,
    cv: S,
    sx: S,
    sv: S,
) -> Field<S> {
    let two = lit::<S>(2.0);
    let f = Field::from_fn(grid, |x, v| {
        (-((x - cx) / sx).powi(2) / two - ((v - cv) / sv).powi(2) / two).exp()
    });
    let m = f.mass();
    f.scaled(m.recip())
}

/// Discrete delta bump: 1/(hx hv) at the node nearest the origin.
pub fn delta_bump<S: Scalar>(grid: PhaseGrid<S>) -> Field<S> {
    let mut f = Field::zeros(grid);
    f.values[(grid.nx / 2, grid.nv / 2)] = grid.cell().recip();
    f
}

/// Sum over a field iterator, used by experiments to average block norms.
pub fn average_fields<S: Scalar>(fields: &[Field<S>]) -> Field<S> {
    let mut acc = Field::zeros(fields[0].grid);
    for f in fields {
        acc = acc.add(f);
    }
    acc.scaled(from_usize::<S>(fields.len()).recip())
}
