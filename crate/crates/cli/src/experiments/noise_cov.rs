//! Velocity-time white-noise checks (acceptance criterion 4): truncated
//! Brownian-sheet covariance, Walsh-sum consistency, and the lifting
//! operator's block estimate.

use rayon::prelude::*;
use skelab::besov::{blocks_all, build_partition, max_safe_level, AnisotropyWeights};
use skelab::grid::{lp_norm, Field};
use skelab::noise::*;
use skelab::spectral::SpectralEngine;
use skelab::stats::{linear_fit, mean_se};

use crate::config::ExperimentConfig;
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    let g = cfg.grid.unwrap().build()?;
    let ncfg = cfg.noise.clone().unwrap();
    let n_channels = ncfg.resolve_channels(g.nv);
    let basis = make_basis(&g, n_channels, ncfg.kind()?)?;
    let tcfg = cfg.time.unwrap();
    let steps = (tcfg.horizon / tcfg.dt).round() as usize;
    let paths = cfg.mc.unwrap().paths;

    // --- orthonormality for both bases ---
    for (name, kind) in [("trig", BasisKind::Trigonometric), ("haar", BasisKind::Haar)] {
        let b = make_basis(&g, 16, kind)?;
        let mut dev: f64 = 0.0;
        for a in 0..16 {
            for c in a..16 {
                let want = if a == c { 1.0 } else { 0.0 };
                dev = dev.max((b.gram(&g, a, c) - want).abs());
            }
        }
        rep.check_below(&format!("orthonormality-{name}"), dev, 1e-10);
    }

    // --- Monte-Carlo sheet covariance against (t ^ s) |[0,v] cap [0,w]| ---
    // dedicated fine-v grid: the truncation bias of the N = Nv/2 expansion
    // scales like Lv/N and must sit well below five standard errors
    let g_sheet = skelab::grid::make_grid(1.0f64, 4.0, 8, 512)?;
    let n_sheet = g_sheet.nv / 2;
    let basis_sheet = make_basis(&g_sheet, n_sheet, BasisKind::Trigonometric)?;
    let probes = [(1.0f64, 1.0, 0.5, 0.5), (1.0, 1.0, 0.5, 1.0), (0.5, 1.0, 1.0, 1.0), (0.5, 0.5, 1.0, 0.5)];
    let samples: Vec<Vec<(f64, f64)>> = (0..paths as u64)
        .into_par_iter()
        .map(|stream| {
            let inc = WienerIncrements::<f64>::generate(cfg.seed, stream, tcfg.dt, steps, n_sheet);
            probes
                .iter()
                .map(|&(t, s, v, w)| {
                    let st = ((t / tcfg.dt).round() as usize).min(steps);
                    let ss = ((s / tcfg.dt).round() as usize).min(steps);
                    (
                        sheet_value(&inc, &basis_sheet, &g_sheet, st, v),
                        sheet_value(&inc, &basis_sheet, &g_sheet, ss, w),
                    )
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for (pi, &(t, s, v, w)) in probes.iter().enumerate() {
        let prods: Vec<f64> = samples.iter().map(|row| row[pi].0 * row[pi].1).collect();
        let (mean, se) = mean_se(&prods);
        let exact = t.min(s) * v.min(w);
        rep.check_close(
            &format!("sheet-covariance t={t} s={s} v={v} w={w}"),
            mean,
            exact,
            5.0 * se,
        );
        rows.push(vec![t, s, v, w, mean, se, exact]);
    }
    rep.write_csv("sheet_covariance.csv", "t,s,v,w,mc,se,exact", &rows)?;

    // --- Walsh integral reduction: projection sum vs sheet-increment sum ---
    // deterministic step-function integrand xi(s, v)
    let xi = |step: usize, v: f64| -> f64 {
        let tv = if v > 0.0 { 1.0 } else { -0.5 };
        if step < steps / 2 {
            tv
        } else {
            0.25 * tv
        }
    };
    let xi_profiles: Vec<Vec<f64>> = (0..steps)
        .map(|s| (0..g.nv).map(|j| xi(s, g.v(j))).collect())
        .collect();
    let coefs: Vec<Vec<f64>> = xi_profiles
        .iter()
        .map(|p| basis.project(&g, p, n_channels))
        .collect();
    let walsh: Vec<f64> = (0..paths.min(10_000) as u64)
        .into_par_iter()
        .map(|stream| {
            let inc = WienerIncrements::<f64>::generate(cfg.seed ^ 0xa11, stream, tcfg.dt, steps, n_channels);
            // order 1: sum over steps then channels
            let mut a = 0.0;
            for s in 0..steps {
                for k in 0..n_channels {
                    a += coefs[s][k] * inc.dw[(s, k)];
                }
            }
            a
        })
        .collect();
    // reorder check on one path: channels outer, steps inner
    {
        let inc = WienerIncrements::<f64>::generate(cfg.seed ^ 0xa11, 0, tcfg.dt, steps, n_channels);
        let mut b = 0.0;
        for k in 0..n_channels {
            for s in 0..steps {
                b += coefs[s][k] * inc.dw[(s, k)];
            }
        }
        let rel = (walsh[0] - b).abs() / b.abs().max(1e-12);
        rep.check_below("walsh-reduction-reorder", rel, 1e-12);
    }
    // Ito isometry: Var = int |Pi_N xi|^2_{L2_v} ds (projected norm)
    let mut iso = 0.0;
    for c in &coefs {
        let nsq: f64 = c.iter().map(|a| a * a).sum();
        iso += nsq * tcfg.dt;
    }
    let var = skelab::stats::variance(&walsh);
    let var_se = var * (2.0 / (walsh.len() as f64 - 1.0)).sqrt();
    rep.check_close("walsh-ito-isometry", var, iso, 5.0 * var_se);

    // --- independence and reproducibility ---
    let inc = WienerIncrements::<f64>::generate(cfg.seed, 0, 1.0, 10_000, 4);
    let mut max_corr: f64 = 0.0;
    for a in 0..4 {
        for b in (a + 1)..4 {
            let mut corr = 0.0;
            for s in 0..inc.steps {
                corr += inc.dw[(s, a)] * inc.dw[(s, b)];
            }
            max_corr = max_corr.max((corr / inc.steps as f64).abs());
        }
    }
    rep.check_below("column-independence", max_corr, 5.0 / (inc.steps as f64).sqrt());
    let inc2 = WienerIncrements::<f64>::generate(cfg.seed, 0, 1.0, 10_000, 4);
    rep.check(
        "reproducibility",
        inc.dw == inc2.dw,
        "identical (seed, stream) gives bit-identical increments".into(),
    );

    // --- lifting block estimate: |R_j G_N(h)|_{L2(l2)} ~ 2^{j/2} |h|_2 ---
    let bcfg = cfg.besov.unwrap();
    let theta = AnisotropyWeights::default();
    let j_max = if bcfg.j_max == 0 {
        max_safe_level(&g, theta)
    } else {
        bcfg.j_max
    };
    let part = build_partition(&g, theta, j_max)?;
    let engine = SpectralEngine::new(g);
    // x-constant profile: the lifting acts on the v-axis only, and any
    // x-structure on this squeezed grid would sit at anisotropic radius > 6
    let h = Field::from_fn(g, |_, v| (-(v / (0.25 * g.lv)).powi(2) * 2.0).exp());
    let hn = lp_norm(&h, 2.0);
    // basis frequencies reach m_max/2; fit only blocks whose annulus the
    // basis covers
    let basis_top_freq = (n_channels as f64) / 2.0 * std::f64::consts::PI / g.lv;
    let j_fit_max = (1..=j_max)
        .filter(|&j| 2f64.powi(j as i32 + 1) <= basis_top_freq)
        .max()
        .unwrap_or(j_max);
    let lifted = lift_g(&h, &basis, n_channels);
    let per_block: Vec<Vec<Field<f64>>> = lifted
        .components
        .par_iter()
        .map(|c| blocks_all(&engine, c, &part))
        .collect();
    let mut vals = vec![0.0f64; j_max + 1];
    for comp_blocks in &per_block {
        for (j, b) in comp_blocks.iter().enumerate() {
            let n = lp_norm(b, 2.0);
            vals[j] += n * n;
        }
    }
    let vals: Vec<f64> = vals.iter().map(|v| v.sqrt() / hn).collect();
    let js: Vec<f64> = (1..=j_fit_max).map(|j| j as f64).collect();
    let logs: Vec<f64> = (1..=j_fit_max).map(|j| vals[j].log2()).collect();
    let fit = linear_fit(&js, &logs);
    rep.check_close("lifting-block-exponent", fit.slope, 0.5, 0.1);
    let consts: Vec<f64> = (1..=j_fit_max)
        .map(|j| vals[j] / 2f64.powf(0.5 * j as f64))
        .collect();
    let cmax = consts.iter().cloned().fold(0.0f64, f64::max);
    let cmin = consts.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.check_below("lifting-constant-uniformity", cmax / cmin - 1.0, 0.20);
    let rows: Vec<Vec<f64>> = (0..=j_max).map(|j| vec![j as f64, vals[j]]).collect();
    rep.write_csv("lifting_blocks.csv", "j,l2l2_over_h", &rows)?;

    // --- basis independence of the truncated sheet variance profile ---
    // Var B(t, v) = t sum_k I_k(v)^2 -> t*|v| for any orthonormal family
    let haar = make_basis(&g_sheet, n_sheet, BasisKind::Haar)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &v in &[0.5f64, 1.0, 2.0] {
        let j = ((v + g_sheet.lv) / g_sheet.hv()).round() as usize;
        let trig_sum: f64 = (0..n_sheet).map(|k| basis_sheet.eta_int[(k, j)].powi(2)).sum();
        let haar_sum: f64 = (0..n_sheet).map(|k| haar.eta_int[(k, j)].powi(2)).sum();
        worst = worst
            .max((trig_sum - v).abs() / v)
            .max((haar_sum - v).abs() / v);
        rows.push(vec![v, trig_sum, haar_sum]);
    }
    rep.check_below("basis-independence-variance-profile", worst, 0.05);
    rep.write_csv("basis_independence.csv", "v,trig_parseval,haar_parseval", &rows)?;

    // --- completeness refinement of the projections ---
    let profile: Vec<f64> = (0..g.nv)
        .map(|j| {
            let v = g.v(j);
            (std::f64::consts::PI * v / g.lv).cos() + 0.3 * (3.0 * std::f64::consts::PI * v / g.lv).sin()
        })
        .collect();
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for &n in &[4usize, 16, 64, n_channels] {
        let coef = basis.project(&g, &profile, n);
        let mut err = 0.0;
        for j in 0..g.nv {
            let mut recv = 0.0;
            for (k, &ck) in coef.iter().enumerate() {
                recv += ck * basis.eta[(k, j)];
            }
            err += (profile[j] - recv).powi(2);
        }
        err = (err * g.hv()).sqrt();
        monotone &= err <= prev + 1e-12;
        prev = err;
    }
    rep.check(
        "completeness-refinement",
        monotone && prev < 1e-8,
        format!("projection error decreases to {prev:.2e}"),
    );

    Ok(())
}
