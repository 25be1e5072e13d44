//! Kernel and semigroup identity checks (acceptance criteria 1 and 2).

use skelab::fields::gaussian_bump;
use skelab::grid::{lp_norm, make_grid, Field};
use skelab::semigroup::*;
use skelab::spectral::SpectralEngine;

use crate::config::ExperimentConfig;
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    let gcfg = cfg.grid.unwrap();

    // --- kernel normalization, boxes scaled to ten standard deviations ---
    let mut rows = Vec::new();
    for &t in &[0.1, 1.0, 4.0] {
        let lx = 10.0 * (2.0 * t * t * t / 3.0f64).sqrt();
        let lv = 10.0 * (2.0 * t).sqrt();
        let g = make_grid(lx, lv, 256, 256)?;
        let p = KernelParams::new(t, 1.0)?;
        let mass = Field::from_fn(g, |x, v| kernel_density(p, x, v)).mass();
        rep.check_close(&format!("kernel-normalization t={t}"), mass, 1.0, 1e-8);
        rows.push(vec![t, mass]);
    }
    rep.write_csv("kernel_normalization.csv", "t,mass", &rows)?;

    // --- scaling law, closed form, relative 1e-12 ---
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let base = KernelParams::new(0.7f64, 1.0)?;
    for &lambda in &[0.5f64, 2.0, 4.0] {
        for &(x, v) in &[(0.1, -0.3), (0.5, 0.2), (-1.0, 1.0), (0.05, 0.9)] {
            let lhs = kernel_density(KernelParams::new(lambda * 0.7, 1.0)?, x, v);
            let rhs = kernel_density_scaled(base, lambda, x, v);
            let rel = ((lhs - rhs) / lhs).abs();
            worst = worst.max(rel);
            rows.push(vec![lambda, x, v, rel]);
        }
    }
    rep.check_below("kernel-scaling-law", worst, 1e-12);
    rep.write_csv("scaling_law.csv", "lambda,x,v,rel_err", &rows)?;

    // --- covariance of the kernel from forward moments of a delta bump ---
    let g = make_grid(gcfg.lx, gcfg.lv, gcfg.nx, gcfg.nv)?;
    let engine = SpectralEngine::new(g);
    let delta = skelab::fields::delta_bump(g);
    let pt = apply_adjoint_semigroup(&engine, &delta, 1.0, 1.0)?;
    let m = pt.moments();
    rep.check_close("covariance-var-x", m.var_x, 2.0 / 3.0, 0.01 * (2.0 / 3.0));
    rep.check_close("covariance-var-v", m.var_v, 2.0, 0.02);
    rep.check_close("covariance-cov-xv", m.cov_xv, 1.0, 0.01);
    rep.write_csv(
        "covariance.csv",
        "t,var_x,var_v,cov_xv,mass",
        &[vec![1.0, m.var_x, m.var_v, m.cov_xv, m.mass]],
    )?;

    // --- semigroup law and Chapman-Kolmogorov on a shear-compatible grid ---
    // Lv/Lx = 4 makes multiples of 1/4 lattice-exact shear times.
    let gc = make_grid(2.0, 8.0, 256, 256)?;
    let ec = SpectralEngine::new(gc);
    let corpus: Vec<Field<f64>> = (0..3)
        .map(|i| {
            let f = skelab::fields::band_limited_random(gc, 8, 8, 500 + i);
            let w = gaussian_bump(gc, 1e12, 0.35 * gc.lv);
            f.mul(&w)
        })
        .collect();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (fi, f) in corpus.iter().enumerate() {
        for &(t, s) in &[(0.25, 0.25), (0.25, 0.5), (0.5, 0.5)] {
            let two = apply_semigroup(&ec, &apply_semigroup(&ec, f, s, 1.0)?, t, 1.0)?;
            let one = apply_semigroup(&ec, f, t + s, 1.0)?;
            let rel = lp_norm(&two.sub(&one), 2.0) / lp_norm(&one, 2.0);
            worst = worst.max(rel);
            rows.push(vec![fi as f64, t, s, rel]);
        }
    }
    rep.check_below("semigroup-law", worst, 1e-8);
    rep.write_csv("semigroup_law.csv", "field,t,s,rel_err", &rows)?;

    // --- generator residual: second order in the central difference ---
    let f = Field::from_fn(gc, |x, v| {
        (std::f64::consts::PI * x).cos() * (-v * v / 2.0).exp()
    });
    let r1 = generator_residual(&ec, &f, 1.0, 1e-2, 1.0)?;
    let r2 = generator_residual(&ec, &f, 1.0, 5e-3, 1.0)?;
    let ratio = r1 / r2;
    rep.check_window("generator-residual-ratio", ratio, 4.0 * 0.7, 4.0 * 1.3);
    rep.write_csv(
        "generator_ratio.csv",
        "h1,res1,h2,res2,ratio",
        &[vec![1e-2, r1, 5e-3, r2, ratio]],
    )?;

    // --- analytic Fourier kernel reproduces the closed form on the grid ---
    let gk = make_grid(10.0, 10.0, 256, 256)?;
    let ek = SpectralEngine::new(gk);
    let params = KernelParams::new(1.0, 1.0)?;
    let via_fft = kernel_by_inverse_transform(&ek, params);
    let direct = Field::from_fn(gk, |x, v| kernel_density(params, x, v));
    let err = lp_norm(&via_fft.sub(&direct), f64::INFINITY);
    rep.check_below("fourier-kernel-reproduction", err, 1e-8);

    // --- transport isometry, non-commutativity, strong continuity ---
    let f = skelab::fields::band_limited_random(g, g.nx / 2 - 1, g.nv / 2 - 1, 77);
    let n0 = lp_norm(&f, 2.0);
    let n1 = lp_norm(&transport(&engine, &f, 0.37)?, 2.0);
    rep.check_below("transport-isometry", ((n1 - n0) / n0).abs(), 1e-10);

    let asym = Field::from_fn(g, |x, v| {
        (-(x - 1.0) * (x - 1.0) - (v + 0.5) * (v + 0.5)).exp()
    });
    let t = 0.5;
    let a = transport(&engine, &apply_semigroup(&engine, &asym, t, 1.0)?, t)?;
    let b = apply_semigroup(&engine, &transport(&engine, &asym, t)?, t, 1.0)?;
    let gap = lp_norm(&a.sub(&b), 2.0);
    rep.check(
        "noncommutativity-gap",
        gap > 1e-6,
        format!("|Gamma_t P_t f - P_t Gamma_t f|_2 = {gap:.3e} > 1e-6"),
    );

    let bump = gaussian_bump(g, 1.0, 1.0);
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut rows = Vec::new();
    for &t in &[0.1, 0.01, 0.001] {
        let d = lp_norm(&apply_semigroup(&engine, &bump, t, 1.0)?.sub(&bump), 2.0);
        monotone &= d < prev;
        prev = d;
        rows.push(vec![t, d]);
    }
    rep.check(
        "strong-continuity",
        monotone && prev < 0.05,
        format!("|P_t f - f|_2 decreasing to {prev:.3e}"),
    );
    rep.write_csv("strong_continuity.csv", "t,l2_gap", &rows)?;

    Ok(())
}
