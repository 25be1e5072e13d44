//! Positive-part L1 contraction under bounded multiplicative noise
//! (acceptance criterion 7).

use std::sync::Arc;

use rayon::prelude::*;
use skelab::fields::gaussian_bump;
use skelab::grid::Field;
use skelab::noise::{make_basis, WienerIncrements};
use skelab::solver::*;
use skelab::stats::mean_se;

use crate::config::ExperimentConfig;
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    let g = cfg.grid.unwrap().build()?;
    let tcfg = cfg.time.unwrap();
    let steps = (tcfg.horizon / tcfg.dt).round() as usize;
    let dt = tcfg.horizon / steps as f64;
    let mc = cfg.mc.unwrap();
    let ncfg = cfg.noise.clone().unwrap();
    let n_chan = ncfg.resolve_channels(g.nv);
    let basis = Arc::new(make_basis(&g, n_chan, ncfg.kind()?)?);

    // bounded multiplicative intensity |xi| <= 1
    let xi = Field::from_fn(g, |x, v| (0.5 * x).sin() * (-(v * v) / 8.0).exp());

    let run_ensemble = |u0: Field<f64>, tag: u64| -> Vec<Trajectory<f64>> {
        (0..mc.paths as u64)
            .into_par_iter()
            .map(|stream| {
                let inc =
                    WienerIncrements::<f64>::generate(cfg.seed ^ tag, stream, dt, steps, n_chan);
                let xi = xi.clone();
                let prob = NonlinearSke {
                    nu: 1.0,
                    f: None,
                    g: Some(Arc::new(move |_t, u: &Field<f64>| u.mul(&xi))),
                    basis: basis.clone(),
                    channels: n_chan,
                    u0: u0.clone(),
                };
                solve_nonlinear(&prob, tcfg.horizon, steps, &inc, Picard::Off, mc.snapshot_stride)
                    .unwrap()
            })
            .collect()
    };

    // --- mixed-sign data: E |u^+(t)|_1 <= |u0^+|_1 + 3 SE at every snapshot ---
    let u0_mixed = Field::from_fn(g, |x, v| (x / 2.0) * (-(x * x) / 4.0 - v * v).exp());
    let bound = u0_mixed.positive_mass();
    let ensemble = run_ensemble(u0_mixed, 0x11);
    let report = l1_positive_check(&ensemble, bound);
    rep.check(
        "l1-contraction-mixed-sign",
        report.pass,
        format!(
            "min margin {:.3e} over {} snapshots (bound {:.6})",
            report
                .margins
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min),
            report.times.len(),
            bound
        ),
    );
    let rows: Vec<Vec<f64>> = (0..report.times.len())
        .map(|i| {
            vec![
                report.times[i],
                report.mean_pos_l1[i],
                report.se[i],
                report.margins[i],
            ]
        })
        .collect();
    rep.write_csv("l1_mixed.csv", "t,mean_pos_l1,se,margin", &rows)?;

    // --- nonnegative data: positivity preserved pathwise ---
    let u0_pos = gaussian_bump(g, 1.5, 1.0);
    let ensemble_pos = run_ensemble(u0_pos.clone(), 0x22);
    let mut worst_min = f64::INFINITY;
    for tr in &ensemble_pos {
        for f in &tr.fields {
            worst_min = worst_min.min(f.min());
        }
    }
    rep.check(
        "positivity-preservation",
        worst_min >= -1e-8,
        format!("min u over paths and snapshots = {worst_min:.3e} >= -1e-8"),
    );
    // and the contraction (equality in the mean, since mass is a martingale)
    let report_pos = l1_positive_check(&ensemble_pos, u0_pos.positive_mass());
    rep.check(
        "l1-contraction-nonnegative",
        report_pos.pass,
        "E |u^+|_1 <= |u0|_1 + 3 SE".into(),
    );

    // --- sign-flipped data: positive part stays at statistical zero ---
    let u0_neg = gaussian_bump(g, 1.5, 1.0).scaled(-1.0);
    let ensemble_neg = run_ensemble(u0_neg, 0x33);
    let final_pos: Vec<f64> = ensemble_neg
        .iter()
        .map(|tr| tr.diagnostics.last().unwrap().pos_l1)
        .collect();
    let (mean_pos, se_pos) = mean_se(&final_pos);
    rep.check_below(
        "l1-signflip-zero",
        mean_pos,
        3.0 * se_pos.max(1e-10) + 1e-8,
    );

    Ok(())
}
