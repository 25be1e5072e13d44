//! Pathwise regularity exponents of the multiplicative-noise solution with
//! critically rough initial data (acceptance criterion 8).
//!
//! The driving noise is white in (t, v) and constant in x, so the solution's
//! x-regularity is inherited from the initial data; preparing u0 at the
//! critical anisotropic regularity (x-Hoelder 1/6 Weierstrass profile) makes
//! all three measured exponents informative: v from the noise (1/2), x from
//! the data (1/6), t from the shear acting on the x-roughness (1/6).
//!
//! Measurement windows are regime-limited: the x-exponent is read off an
//! early snapshot (before kinetic diffusion erases the fine rough band),
//! v and t come from the mean-subtracted fluctuation at the final time, and
//! the t-gaps sit between the noise-onset scale and the accumulation scale.

use std::collections::BTreeMap;

use rayon::prelude::*;
use skelab::besov::holder_exponent;
use skelab::fields::weierstrass_x;
use skelab::grid::{lp_norm, Field};
use skelab::noise::{make_basis, noise_profile, WienerIncrements};
use skelab::semigroup::apply_semigroup;
use skelab::spectral::SpectralEngine;
use crate::config::ExperimentConfig;
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    let g = cfg.grid.unwrap().build()?;
    let tcfg = cfg.time.unwrap();
    let steps = (tcfg.horizon / tcfg.dt).round() as usize;
    let dt = tcfg.horizon / steps as f64;
    let paths = cfg.mc.unwrap().paths;
    let ncfg = cfg.noise.clone().unwrap();
    let n_chan = ncfg.resolve_channels(g.nv);
    let basis = make_basis(&g, n_chan, ncfg.kind()?)?;
    let intensity = 0.25f64;

    // critically rough, positive, v-localized initial data
    let rough = weierstrass_x(g, 1.0 / 6.0, cfg.seed);
    let envelope = Field::from_fn(g, |_, v| (-(v / 1.8) * (v / 1.8)).exp());
    let u0 = rough.map(|w| 0.55 + 0.45 * w).mul(&envelope);

    // offsets per axis (cells / steps); see the module docs for the regimes
    let x_ms: Vec<i64> = vec![2, 4, 8, 16, 32];
    let v_ms: Vec<i64> = vec![2, 3, 4, 6, 8];
    let t_gaps: Vec<usize> = vec![50, 71, 100, 141, 200];
    let early_step = (0.02 / dt).round() as usize;
    let p = 4.0f64;

    // deterministic mean field at snapshot times (the mean of the linear
    // multiplicative equation solves the deterministic kinetic equation)
    let engine = SpectralEngine::new(g);
    let mut mean_at: BTreeMap<usize, Field<f64>> = BTreeMap::new();
    for &gap in &t_gaps {
        let n = steps - gap;
        mean_at.insert(n, apply_semigroup(&engine, &u0, n as f64 * dt, 1.0)?);
    }
    mean_at.insert(steps, apply_semigroup(&engine, &u0, tcfg.horizon, 1.0)?);

    struct PathLadders {
        v: Vec<f64>,
        x: Vec<f64>,
        t: Vec<f64>,
    }
    let snap_set: Vec<usize> = t_gaps.iter().map(|&gap| steps - gap).collect();
    let results: Vec<PathLadders> = (0..paths as u64)
        .into_par_iter()
        .map(|stream| {
            let eng = SpectralEngine::new(g);
            let inc = WienerIncrements::<f64>::generate(cfg.seed, stream, dt, steps, n_chan);
            let mut u = u0.clone();
            let mut snaps: BTreeMap<usize, Field<f64>> = BTreeMap::new();
            let mut early: Option<Field<f64>> = None;
            for n in 0..steps {
                let profile = noise_profile(&basis, &inc.row(n).as_slice().unwrap()[..n_chan]);
                let mut w = u.clone();
                for i in 0..g.nx {
                    for j in 0..g.nv {
                        w.values[(i, j)] *= 1.0 + intensity * profile[j];
                    }
                }
                u = apply_semigroup(&eng, &w, dt, 1.0).unwrap();
                if snap_set.contains(&(n + 1)) {
                    snaps.insert(n + 1, u.clone());
                }
                if n + 1 == early_step {
                    early = Some(u.clone());
                }
            }
            let early = early.expect("early snapshot step inside the horizon");
            let fluct = u.sub(&mean_at[&steps]);
            // v increments of the fluctuation at the final time
            let v_l: Vec<f64> = v_ms
                .iter()
                .map(|&m| lp_norm(&fluct.rolled(0, m).sub(&fluct), p))
                .collect();
            // x increments of the early snapshot (rough band still intact)
            let x_l: Vec<f64> = x_ms
                .iter()
                .map(|&m| lp_norm(&early.rolled(m, 0).sub(&early), p))
                .collect();
            // t increments of the fluctuation, centered window
            let chi = Field::from_fn(g, |x, v| {
                if x.abs() <= 0.5 * g.lx && v.abs() <= 0.5 * g.lv {
                    1.0
                } else {
                    0.0
                }
            });
            let t_l: Vec<f64> = t_gaps
                .iter()
                .map(|&gap| {
                    let n1 = steps - gap;
                    let w1 = snaps[&n1].sub(&mean_at[&n1]);
                    lp_norm(&fluct.sub(&w1).mul(&chi), p)
                })
                .collect();
            PathLadders { v: v_l, x: x_l, t: t_l }
        })
        .collect();

    // pooled estimator: regress the path-averaged log-norms; the standard
    // error comes from a leave-one-out jackknife over paths
    let pooled = |offsets: &[f64], ladders: &[Vec<f64>]| -> (f64, f64) {
        let n_paths = ladders.len();
        let fit_at = |skip: Option<usize>| -> f64 {
            let mut means = vec![0.0f64; offsets.len()];
            let mut count = 0usize;
            for (pi, l) in ladders.iter().enumerate() {
                if Some(pi) == skip {
                    continue;
                }
                count += 1;
                for (k, &v) in l.iter().enumerate() {
                    means[k] += v.ln();
                }
            }
            for m in means.iter_mut() {
                *m /= count as f64;
            }
            let samples: Vec<(f64, f64)> = offsets
                .iter()
                .zip(means.iter())
                .map(|(&h, &m)| (h, m.exp()))
                .collect();
            holder_exponent(&samples).map(|f| f.slope).unwrap_or(f64::NAN)
        };
        let full = fit_at(None);
        let jack: Vec<f64> = (0..n_paths).map(|i| fit_at(Some(i))).collect();
        let jm = jack.iter().sum::<f64>() / n_paths as f64;
        let var = (n_paths as f64 - 1.0) / n_paths as f64
            * jack.iter().map(|s| (s - jm).powi(2)).sum::<f64>();
        (full, var.sqrt())
    };
    let v_offsets: Vec<f64> = v_ms.iter().map(|&m| m as f64 * g.hv()).collect();
    let x_offsets: Vec<f64> = x_ms.iter().map(|&m| m as f64 * g.hx()).collect();
    let t_offsets: Vec<f64> = t_gaps.iter().map(|&m| m as f64 * dt).collect();
    let v_ladders: Vec<Vec<f64>> = results.iter().map(|r| r.v.clone()).collect();
    let x_ladders: Vec<Vec<f64>> = results.iter().map(|r| r.x.clone()).collect();
    let t_ladders: Vec<Vec<f64>> = results.iter().map(|r| r.t.clone()).collect();
    let (v_mean, v_se) = pooled(&v_offsets, &v_ladders);
    let (x_mean, x_se) = pooled(&x_offsets, &x_ladders);
    let (t_mean, t_se) = pooled(&t_offsets, &t_ladders);
    rep.check_window("holder-exponent-v", v_mean, 0.35, 0.55);
    rep.check_window("holder-exponent-x", x_mean, 0.10, 0.22);
    rep.check_window("holder-exponent-t", t_mean, 0.10, 0.22);
    let mut rows = Vec::new();
    for (pi, r) in results.iter().enumerate() {
        for (k, &v) in r.v.iter().enumerate() {
            rows.push(vec![pi as f64, 0.0, v_offsets[k], v]);
        }
        for (k, &v) in r.x.iter().enumerate() {
            rows.push(vec![pi as f64, 1.0, x_offsets[k], v]);
        }
        for (k, &v) in r.t.iter().enumerate() {
            rows.push(vec![pi as f64, 2.0, t_offsets[k], v]);
        }
    }
    rep.write_csv("holder_ladders.csv", "path,axis,offset,norm", &rows)?;
    rep.write_csv(
        "holder_summary.csv",
        "axis,slope,jackknife_se",
        &[
            vec![0.0, v_mean, v_se],
            vec![1.0, x_mean, x_se],
            vec![2.0, t_mean, t_se],
        ],
    )?;

    // --- estimator oracles ---
    // deterministic square-root cusp, sup-norm increments: exponent 1/2
    {
        let gx = skelab::grid::make_grid(4.0f64, 4.0, 512, 8)?;
        let f = Field::from_fn(gx, |x, _| x.abs().sqrt() * (-(x * x) / 4.0).exp());
        let mut samples = Vec::new();
        for k in 0..5 {
            let m = 1i64 << k;
            let d = skelab::besov::difference(&f, m, 0, 1);
            samples.push((m as f64 * gx.hx(), lp_norm(&d, f64::INFINITY)));
        }
        let fit = holder_exponent(&samples)?;
        rep.check_close("cusp-oracle-exponent", fit.slope, 0.5, 0.05);
    }
    // Brownian-path oracle, 64 realizations: exponent 1/2
    {
        let n = 1024usize;
        let hv = 8.0 / n as f64;
        let slopes: Vec<f64> = (0..64u64)
            .map(|real| {
                let mut rng = skelab::noise::CounterRng::new(cfg.seed ^ 0xb0, real);
                let mut path = vec![0.0f64];
                for _ in 1..n {
                    let prev = *path.last().unwrap();
                    path.push(prev + rng.normal::<f64>() * hv.sqrt());
                }
                let mut samples = Vec::new();
                for k in 0..5 {
                    let m = 1usize << k;
                    let mut s4 = 0.0;
                    for j in 0..n - m {
                        s4 += (path[j + m] - path[j]).powi(4);
                    }
                    samples.push((m as f64 * hv, (s4 * hv).powf(0.25)));
                }
                holder_exponent(&samples).unwrap().slope
            })
            .collect();
        let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
        rep.check_close("brownian-oracle-exponent", mean, 0.5, 0.1);
    }

    Ok(())
}
