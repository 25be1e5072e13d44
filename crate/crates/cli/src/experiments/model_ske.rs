//! Model-equation moment checks (acceptance criterion 5), the weak-form
//! martingale invariant, the transport-compensated time-regularity slope,
//! and the deterministic-reduction order study.

use std::sync::Arc;

use rayon::prelude::*;
use skelab::besov::{difference_norm, AnisotropyWeights};
use skelab::fields::gaussian_bump;
use skelab::grid::{inner, lp_norm, Field};
use skelab::noise::{make_basis, noise_profile, WienerIncrements};
use skelab::semigroup::{apply_semigroup, transport_unchecked};
use skelab::solver::*;
use skelab::spectral::SpectralEngine;
use skelab::stats::{linear_fit, mean_se};

use crate::config::ExperimentConfig;
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    let g = cfg.grid.unwrap().build()?;
    let tcfg = cfg.time.unwrap();
    let steps = (tcfg.horizon / tcfg.dt).round() as usize;
    let dt = tcfg.horizon / steps as f64;
    let paths = cfg.mc.unwrap().paths;
    let engine = SpectralEngine::new(g);

    // --- additive-noise variance: g^1 = c constant, Var u(T, z) = c^2 T ---
    let c_noise = 0.7f64;
    let probe_nodes = [(g.nx / 2, g.nv / 2), (g.nx / 4, 3 * g.nv / 4)];
    let finals: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|stream| {
            let inc = WienerIncrements::<f64>::generate(cfg.seed, stream, dt, steps, 1);
            let prob = SkeProblem::model(
                1.0,
                TimeCoeff::Zero,
                vec![TimeCoeff::Const(c_noise)],
                Field::zeros(g),
            );
            let mut u = Field::zeros(g);
            for n in 0..steps {
                u = step_model(&engine, &u, n as f64 * dt, dt, &prob, inc.row(n).as_slice().unwrap())
                    .unwrap();
            }
            probe_nodes.iter().map(|&(i, j)| u.values[(i, j)]).collect()
        })
        .collect();
    let mut rows = Vec::new();
    for (k, &(i, j)) in probe_nodes.iter().enumerate() {
        let vals: Vec<f64> = finals.iter().map(|f| f[k]).collect();
        let var = skelab::stats::variance(&vals);
        let se = var * (2.0 / (vals.len() as f64 - 1.0)).sqrt();
        let target = c_noise * c_noise * tcfg.horizon;
        rep.check_close(
            &format!("additive-variance node ({i},{j})"),
            var,
            target,
            5.0 * se,
        );
        rows.push(vec![i as f64, j as f64, var, se, target]);
    }
    rep.write_csv("additive_variance.csv", "i,j,var,se,target", &rows)?;

    // --- Duhamel mean field: E u(T) = P_T u0 + sum_n dt P_{T - t_n} f ---
    let u0 = gaussian_bump(g, 1.0, 1.0);
    let forcing = gaussian_bump(g, 2.0, 1.5).scaled(0.8);
    let n_mean = paths.min(256);
    let mean_fields: Vec<Field<f64>> = (0..n_mean as u64)
        .into_par_iter()
        .map(|stream| {
            let inc = WienerIncrements::<f64>::generate(cfg.seed ^ 0xd, stream, dt, steps, 1);
            let prob = SkeProblem::model(
                1.0,
                TimeCoeff::Field(forcing.clone()),
                vec![TimeCoeff::Const(1.0)],
                u0.clone(),
            );
            let mut u = u0.clone();
            for n in 0..steps {
                u = step_model(&engine, &u, n as f64 * dt, dt, &prob, inc.row(n).as_slice().unwrap())
                    .unwrap();
            }
            u
        })
        .collect();
    let mc_mean = skelab::fields::average_fields(&mean_fields);
    // deterministic reference by the same left-endpoint quadrature
    let mut reference = apply_semigroup(&engine, &u0, tcfg.horizon, 1.0)?;
    for n in 0..steps {
        let lag = tcfg.horizon - n as f64 * dt;
        reference.axpy(dt, &apply_semigroup(&engine, &forcing, lag, 1.0)?);
    }
    // tolerance: five pointwise MC standard errors at the bump center
    let spread: Vec<f64> = mean_fields
        .iter()
        .map(|f| f.values[(g.nx / 2, g.nv / 2)])
        .collect();
    let (_, se_center) = mean_se(&spread);
    let dev = lp_norm(&mc_mean.sub(&reference), f64::INFINITY);
    rep.check_below("duhamel-mean-field", dev, 5.0 * se_center.max(1e-6));

    // --- weak-form residual: deterministic bias is O(dt) and the
    // noise-induced part is a mean-zero martingale sum ---
    let phis = test_functions(&g);
    let compute_residuals = |inc: Option<&WienerIncrements<f64>>| -> Vec<f64> {
        let eng = SpectralEngine::new(g);
        let prob = SkeProblem::model(
            1.0,
            TimeCoeff::Field(forcing.clone()),
            vec![TimeCoeff::Const(1.0)],
            u0.clone(),
        );
        let mut u = u0.clone();
        let mut drift = vec![0.0f64; phis.len()];
        let mut noise = vec![0.0f64; phis.len()];
        let prepared: Vec<(Field<f64>, Field<f64>)> = phis
            .iter()
            .map(|phi| {
                let lap = eng.derivative(phi, 0, 2);
                let dx = eng.derivative(phi, 1, 0);
                let mut v_dx = dx.clone();
                for i in 0..g.nx {
                    for j in 0..g.nv {
                        v_dx.values[(i, j)] *= g.v(j);
                    }
                }
                (lap, v_dx)
            })
            .collect();
        let zeros = vec![0.0f64];
        for n in 0..steps {
            let dw = match inc {
                Some(inc) => inc.row(n).to_vec(),
                None => zeros.clone(),
            };
            for (pi, phi) in phis.iter().enumerate() {
                let (lap, v_dx) = &prepared[pi];
                drift[pi] += dt * (inner(&u, lap) - inner(&u, v_dx) + inner(&forcing, phi));
                noise[pi] += dw[0] * inner(&Field::constant(g, 1.0), phi);
            }
            u = step_model(&eng, &u, n as f64 * dt, dt, &prob, &dw).unwrap();
        }
        phis.iter()
            .enumerate()
            .map(|(pi, phi)| inner(&u, phi) - inner(&u0, phi) - drift[pi] - noise[pi])
            .collect()
    };
    let det_residual = compute_residuals(None);
    let scale = inner(&u0, &phis[0]).abs();
    let det_worst = det_residual
        .iter()
        .map(|r| r.abs())
        .fold(0.0f64, f64::max);
    rep.check_below(
        "weak-form-deterministic-bias",
        det_worst,
        10.0 * dt * scale.max(1.0),
    );
    let residuals: Vec<Vec<f64>> = (0..n_mean as u64)
        .into_par_iter()
        .map(|stream| {
            let inc = WienerIncrements::<f64>::generate(cfg.seed ^ 0xd, stream, dt, steps, 1);
            compute_residuals(Some(&inc))
                .iter()
                .zip(det_residual.iter())
                .map(|(r, d)| r - d)
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut all_ok = true;
    for pi in 0..phis.len() {
        let vals: Vec<f64> = residuals.iter().map(|r| r[pi]).collect();
        let (mean, se) = mean_se(&vals);
        all_ok &= mean.abs() < 3.0 * se.max(1e-12);
        rows.push(vec![pi as f64, mean, se]);
    }
    rep.check(
        "weak-form-martingale",
        all_ok,
        "centered weak-form residual mean below 3 SE for all test functions".into(),
    );
    rep.write_csv("weak_residual.csv", "phi,mean,se", &rows)?;

    // --- time-regularity comparison: |u(t2) - Gamma_{t2-t1} u(t1)| in the
    // difference-norm estimator scales like (t2-t1)^{(beta-gamma)/2} with
    // beta = 1/2 (white-noise regularity) and gamma = 1/6. The estimator's
    // sup peaks at offsets h ~ sqrt(t2-t1), so the grid must resolve them:
    // run on a v-refined grid.
    let g_es = skelab::grid::make_grid(8.0f64, 8.0, 64, 256)?;
    let n_chan = g_es.nv / 2;
    let basis = Arc::new(make_basis(&g_es, n_chan, skelab::noise::BasisKind::Trigonometric)?);
    let es_dt = 2.5e-3;
    let es_steps = 128usize;
    let gaps: Vec<usize> = vec![8, 16, 32, 64];
    let gamma = 1.0 / 6.0;
    let theta = AnisotropyWeights::default();
    let slopes: Vec<f64> = (0..8u64)
        .into_par_iter()
        .map(|stream| {
            let eng = SpectralEngine::new(g_es);
            let inc =
                WienerIncrements::<f64>::generate(cfg.seed ^ 0xe5, stream, es_dt, es_steps, n_chan);
            let mut u = Field::zeros(g_es);
            let mut snaps: Vec<(usize, Field<f64>)> = Vec::new();
            let want: Vec<usize> = gaps.iter().map(|&m| es_steps - m).collect();
            for n in 0..es_steps {
                let profile = noise_profile(&basis, &inc.row(n).as_slice().unwrap()[..n_chan]);
                let mut w = u.clone();
                for i in 0..g_es.nx {
                    for j in 0..g_es.nv {
                        w.values[(i, j)] += profile[j];
                    }
                }
                u = apply_semigroup(&eng, &w, es_dt, 1.0).unwrap();
                if want.contains(&(n + 1)) {
                    snaps.push((n + 1, u.clone()));
                }
            }
            let mut hs = Vec::new();
            let mut ns = Vec::new();
            for &m in &gaps {
                let t1_field = &snaps.iter().find(|(n, _)| *n == es_steps - m).unwrap().1;
                let gap_t = m as f64 * es_dt;
                let moved = transport_unchecked(&eng, t1_field, gap_t);
                let d = u.sub(&moved);
                hs.push(gap_t.ln());
                ns.push(difference_norm(&d, gamma, 4.0, 1, theta).ln());
            }
            linear_fit(&hs, &ns).slope
        })
        .collect();
    let (slope_mean, slope_se) = mean_se(&slopes);
    let predicted = (0.5 - gamma) / 2.0;
    rep.check_close(
        "time-regularity-slope",
        slope_mean,
        predicted,
        0.15,
    );
    rep.write_csv(
        "time_regularity.csv",
        "path,slope",
        &slopes
            .iter()
            .enumerate()
            .map(|(i, s)| vec![i as f64, *s])
            .collect::<Vec<_>>(),
    )?;
    let _ = slope_se;

    // --- deterministic reduction: variable-coefficient solver converges to
    // the constant-coefficient semigroup limit at order >= 0.9 ---
    let a_field = Field::from_fn(g, |x, v| {
        1.0 + 0.25 * (std::f64::consts::PI * x / g.lx).cos() * (std::f64::consts::PI * v / g.lv).cos()
    });
    let mk_prob = |u0: Field<f64>| SkeProblem {
        form: SkeForm::NonDivergence,
        nu: 0.0,
        a: TimeCoeff::Field(a_field.clone()),
        b: TimeCoeff::Zero,
        sigma: vec![],
        h: vec![],
        f: TimeCoeff::Zero,
        g: vec![],
        u0,
        c0: 1.5,
        c1: 1.25,
        c2: 0.25,
    };
    let t_short = 0.1;
    let mut errs = Vec::new();
    let steps_list = [40usize, 80, 160, 320];
    let reference = {
        let inc = WienerIncrements::<f64>::generate(1, 0, t_short / 640.0, 640, 1);
        solve_linear(&mk_prob(u0.clone()), t_short, 640, &inc, 640)?
            .last_field()
            .clone()
    };
    for &s in &steps_list {
        let inc = WienerIncrements::<f64>::generate(1, 0, t_short / s as f64, s, 1);
        let traj = solve_linear(&mk_prob(u0.clone()), t_short, s, &inc, s)?;
        errs.push(lp_norm(&traj.last_field().sub(&reference), 2.0));
    }
    let hs: Vec<f64> = steps_list.iter().map(|&s| (t_short / s as f64).ln()).collect();
    let ls: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let order = linear_fit(&hs, &ls).slope;
    rep.check(
        "deterministic-reduction-order",
        order >= 0.9,
        format!("dt-refinement order {order:.3} >= 0.9 (errors {errs:?})"),
    );
    rep.write_csv(
        "reduction_order.csv",
        "steps,error",
        &steps_list
            .iter()
            .zip(errs.iter())
            .map(|(&s, &e)| vec![s as f64, e])
            .collect::<Vec<_>>(),
    )?;

    // --- intro Langevin filter equation: E u(t) = P_t u0 ---
    let langevin_paths = paths.min(512);
    let fields: Vec<Field<f64>> = (0..langevin_paths as u64)
        .into_par_iter()
        .map(|stream| {
            let inc = WienerIncrements::<f64>::generate(cfg.seed ^ 0x1a, stream, dt, steps, 1);
            let prob = SkeProblem {
                form: SkeForm::NonDivergence,
                nu: 0.0,
                a: TimeCoeff::Const(1.0),
                b: TimeCoeff::Zero,
                sigma: vec![TimeCoeff::Const(-1.0)],
                h: vec![],
                f: TimeCoeff::Zero,
                g: vec![],
                u0: u0.clone(),
                c0: 1.0,
                c1: 1.0,
                c2: 0.0,
            };
            solve_linear(&prob, tcfg.horizon, steps, &inc, steps)
                .unwrap()
                .last_field()
                .clone()
        })
        .collect();
    let mc_mean = skelab::fields::average_fields(&fields);
    let direct = apply_semigroup(&engine, &u0, tcfg.horizon, 1.0)?;
    let spread: Vec<f64> = fields.iter().map(|f| f.values[(g.nx / 2, g.nv / 2)]).collect();
    let (_, se_center) = mean_se(&spread);
    let dev = lp_norm(&mc_mean.sub(&direct), f64::INFINITY);
    rep.check_below("langevin-mean-field", dev, 5.0 * se_center.max(1e-6));

    Ok(())
}
