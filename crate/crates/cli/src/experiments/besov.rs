//! Anisotropic Besov machinery checks (acceptance criterion 3).

use skelab::besov::*;
use skelab::fields;
use skelab::grid::{lp_norm, Field};
use skelab::semigroup::apply_semigroup;
use skelab::spectral::SpectralEngine;
use skelab::stats::linear_fit;

use crate::config::ExperimentConfig;
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    let g = cfg.grid.unwrap().build()?;
    let theta = AnisotropyWeights::default();
    let bcfg = cfg.besov.unwrap();
    let j_max = if bcfg.j_max == 0 {
        max_safe_level(&g, theta)
    } else {
        bcfg.j_max
    };
    let part = build_partition(&g, theta, j_max)?;
    let engine = SpectralEngine::new(g);

    // --- partition-of-unity reconstruction on a band-limited field ---
    let f = {
        let raw = fields::band_limited_random(g, g.nx / 2, g.nv / 2, cfg.seed);
        band_limit_modulus(&engine, &raw, &part, 2f64.powi(j_max as i32))
    };
    let mut rec = Field::zeros(g);
    for bj in blocks_all(&engine, &f, &part) {
        rec = rec.add(&bj);
    }
    let rel = lp_norm(&rec.sub(&f), f64::INFINITY) / lp_norm(&f, f64::INFINITY);
    rep.check_below("partition-reconstruction", rel, 1e-10);

    // --- Bernstein constants over a random corpus, uniform in j ---
    let mut cv: f64 = 0.0;
    let mut cx: f64 = 0.0;
    let mut rows = Vec::new();
    for trial in 0..5u64 {
        let w = fields::band_limited_random(g, g.nx / 2, g.nv / 2, 900 + trial);
        let blocks = blocks_all(&engine, &w, &part);
        for (j, bj) in blocks.iter().enumerate().take(j_max + 1).skip(1) {
            let n0 = lp_norm(bj, 2.0);
            if n0 < 1e-13 {
                continue;
            }
            let rv = lp_norm(&engine.derivative(bj, 0, 1), 2.0) / (2f64.powi(j as i32) * n0);
            let rx = lp_norm(&engine.derivative(bj, 1, 0), 2.0) / (2f64.powi(3 * j as i32) * n0);
            cv = cv.max(rv);
            cx = cx.max(rx);
            rows.push(vec![trial as f64, j as f64, rv, rx]);
        }
    }
    rep.check_below("bernstein-constant-v", cv, 10.0);
    rep.check_below("bernstein-constant-x", cx, 10.0);
    rep.write_csv("bernstein.csv", "trial,j,c_v,c_x", &rows)?;

    // --- difference-characterization vs block-norm equivalence ---
    // ratio stable within +-20% of the corpus median across 10 fields
    let spec = BesovSpec {
        s: bcfg.s,
        p: bcfg.p,
        theta,
        j_max,
    };
    let mut ratios = Vec::new();
    let mut rows = Vec::new();
    for i in 0..10u64 {
        let raw = fields::band_limited_random(g, g.nx / 4, g.nv / 4, 2000 + i);
        let dn = difference_norm(&raw, bcfg.s, bcfg.p, 1, theta);
        let bn = besov_norm(&engine, &raw, &spec, &part);
        let ratio = dn / bn;
        ratios.push(ratio);
        rows.push(vec![i as f64, dn, bn, ratio]);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let max_dev = ratios
        .iter()
        .map(|r| (r / median - 1.0).abs())
        .fold(0.0f64, f64::max);
    rep.check_below("difference-block-ratio-stability", max_dev, 0.20);
    rep.write_csv("equivalence.csv", "field,difference_norm,block_norm,ratio", &rows)?;

    // --- pure x-mode ratio sweep stays within [median/C, median*C] ---
    let mut sweep_dev: f64 = 0.0;
    for &n in &[1i64, 2, 4] {
        let freq = std::f64::consts::PI * n as f64 / g.lx;
        let mode = Field::from_fn(g, |x, _| (freq * x).cos());
        let dn = difference_norm(&mode, bcfg.s, bcfg.p, 1, theta);
        let bn = besov_norm(&engine, &mode, &spec, &part);
        sweep_dev = sweep_dev.max((dn / bn / median - 1.0).abs());
    }
    rep.check_below("difference-block-xmode-sweep", sweep_dev, 1.0);

    // --- measure-like initial data: block norms grow like 2^{j(1-1/p)} ---
    // Each unit-mass spike turns into a wave packet of height ~2^j and
    // v-width ~2^-j under R_j; the L^p rate needs the packets separated,
    // so only levels whose packet width is below the spike spacing enter
    // the fit. Norms are averaged over comb realizations first.
    let n_spikes = 5usize;
    let j_fit_lo = 2usize;
    let mut rows = Vec::new();
    for &p in &[2.0f64, 4.0] {
        let mut avg = vec![0.0f64; j_max + 1];
        let realizations = 8u64;
        for r in 0..realizations {
            let pos = fields::random_comb_positions(&g, n_spikes, cfg.seed + 31 * r);
            let comb = fields::comb_v(g, &pos);
            let blocks = blocks_all(&engine, &comb, &part);
            for (j, b) in blocks.iter().enumerate() {
                avg[j] += lp_norm(b, p).powi(2);
            }
        }
        // quadratic mean over realizations
        for a in avg.iter_mut() {
            *a = (*a / realizations as f64).sqrt();
        }
        let js: Vec<f64> = (j_fit_lo..=j_max).map(|j| j as f64).collect();
        let logs: Vec<f64> = (j_fit_lo..=j_max).map(|j| avg[j].log2()).collect();
        let fit = linear_fit(&js, &logs);
        let target = 1.0 - 1.0 / p;
        rep.check_close(
            &format!("comb-data-slope-p{p}"),
            fit.slope,
            target,
            0.1,
        );
        for j in 0..=j_max {
            rows.push(vec![p, j as f64, avg[j]]);
        }
    }
    rep.write_csv("example_comb.csv", "p,j,block_norm", &rows)?;

    // --- semigroup block smoothing: |R_j P_t delta|_1 (t 4^j)^2 bounded ---
    let delta = fields::delta_bump(g);
    let mut bound: f64 = 0.0;
    let mut rows = Vec::new();
    for &t in &[0.05, 0.1, 0.2, 0.4] {
        let pt = apply_semigroup(&engine, &delta, t, 1.0)?;
        let blocks = blocks_all(&engine, &pt, &part);
        for (j, bj) in blocks.iter().enumerate().skip(1) {
            let scale = t * 4f64.powi(j as i32);
            if scale >= 4.0 {
                let val = lp_norm(bj, 1.0) * scale * scale;
                bound = bound.max(val);
                rows.push(vec![j as f64, t, val]);
            }
        }
    }
    // qualitative decay with a logged constant; 500 is comfortably above
    // the measured plateau (~80 on the reference grid)
    rep.check_below("block-smoothing-constant", bound, 500.0);
    rep.write_csv("smoothing.csv", "j,t,l1_times_scale_sq", &rows)?;

    // --- localized norm: delta vs 2 delta equivalence, stable constant ---
    let spec_loc = BesovSpec {
        s: bcfg.s,
        p: bcfg.p,
        theta,
        j_max,
    };
    let centers: Vec<(f64, f64)> = (0..4)
        .flat_map(|i| {
            (0..4).map(move |j| {
                (
                    -0.75 + 0.5 * i as f64,
                    -0.75 + 0.5 * j as f64,
                )
            })
        })
        .map(|(a, b)| (a * g.lx, b * g.lv))
        .collect();
    let delta_r = 0.25 * g.lv.min(8.0 * g.lx);
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi = 0.0f64;
    for i in 0..4u64 {
        let f = fields::band_limited_random(g, g.nx / 8, g.nv / 8, 3000 + i);
        let n1 = localized_besov_norm(&engine, &f, &spec_loc, &part, delta_r, &centers)?;
        let n2 = localized_besov_norm(&engine, &f, &spec_loc, &part, 2.0 * delta_r, &centers)?;
        let ratio = n2 / n1;
        ratio_lo = ratio_lo.min(ratio);
        ratio_hi = ratio_hi.max(ratio);
    }
    rep.check(
        "localized-norm-equivalence",
        ratio_lo > 1.0 / 5.0 && ratio_hi < 5.0,
        format!("delta vs 2delta ratio in [{ratio_lo:.3}, {ratio_hi:.3}], constant < 5"),
    );

    Ok(())
}
