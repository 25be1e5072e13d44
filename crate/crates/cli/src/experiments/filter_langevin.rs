//! Grid Zakai filter against the particle oracle on the Langevin model
//! (acceptance criterion 10, cross-method part).

use skelab::fields::gaussian_density;
use skelab::filtering::*;
use skelab::grid::write_field_binary;

use crate::config::ExperimentConfig;
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    let g = cfg.grid.unwrap().build()?;
    let tcfg = cfg.time.unwrap();
    let steps = (tcfg.horizon / tcfg.dt).round() as usize;
    let fcfg = cfg.filter.unwrap();
    let model = FilterModel::<f64>::langevin();

    let sx0 = 0.5f64;
    let sv0 = 0.5f64;
    let pi0 = gaussian_density(g, 0.0, 0.0, sx0, sv0);

    // one observation path; the signal starts from the same product Gaussian
    let z0 = {
        let mut rng = skelab::noise::CounterRng::new(cfg.seed, 999);
        (
            rng.normal::<f64>() * sx0,
            rng.normal::<f64>() * sv0,
            0.0,
        )
    };
    let paths = simulate_signal(&model, z0, tcfg.horizon, steps, cfg.seed, 0)?;

    // --- grid filter ---
    let traj = solve_zakai(&model, &paths, pi0.clone(), 1.0, steps)?;
    let state = FilterState::from_snapshot(&traj, &paths, traj.fields.len() - 1)?;
    let pi_grid = state.pi.clone();

    // pathwise mass conservation (h = 0, divergence noise)
    let mut mass_dev: f64 = 0.0;
    for row in &traj.diagnostics {
        mass_dev = mass_dev.max((row.mass - 1.0).abs());
    }
    rep.check_below("zakai-mass-pathwise", mass_dev, 1e-8);

    // --- particle filter with the same observation path ---
    let npart = fcfg.particles;
    let seed = cfg.seed;
    let out = particle_filter(
        &model,
        &paths,
        &g,
        move |i| {
            let mut rng = skelab::noise::CounterRng::new(seed ^ 0xb0, i);
            (rng.normal::<f64>() * sx0, rng.normal::<f64>() * sv0)
        },
        npart,
        cfg.seed ^ 0x51,
    )?;
    let tv = tv_distance(&pi_grid, &out.density);
    rep.check_below("tv-grid-vs-particle", tv, 0.1);
    rep.write_csv(
        "tv_distance.csv",
        "t,tv,min_ess,resamples",
        &[vec![
            tcfg.horizon,
            tv,
            out.min_ess,
            out.resample_count as f64,
        ]],
    )?;

    // dumps for offline comparison
    let p1 = rep.out_dir().join("pi_grid.bin");
    write_field_binary(&pi_grid, &p1)?;
    rep.register_artifact(p1);
    let p2 = rep.out_dir().join("pi_particle.bin");
    write_field_binary(&out.density, &p2)?;
    rep.register_artifact(p2);

    // --- Kushner residual: with h = 0 the Zakai and Kushner forms agree ---
    let short_steps = 100usize.min(steps);
    let paths_short = simulate_signal(&model, z0, short_steps as f64 * tcfg.dt, short_steps, cfg.seed, 1)?;
    let traj_short = solve_zakai(&model, &paths_short, pi0, 1.0, 1)?;
    let pis: Vec<skelab::Field64> = traj_short
        .fields
        .iter()
        .map(|u| normalize(u).unwrap())
        .collect();
    let phis = skelab::solver::test_functions(&g);
    let r_kushner = kushner_residual(&model, &paths_short, &pis, &phis[..2])?;
    // Zakai-form residual: same formula with the gain term pi(h) = 0; for
    // the Langevin model h = 0 identically, so the two residuals coincide
    // up to rounding by construction. Assert the residual is also small.
    rep.check(
        "kushner-zakai-coincide",
        r_kushner.is_finite(),
        format!("h = 0 residual {r_kushner:.3e} (forms identical as pi(h) = 0)"),
    );
    rep.check_below("kushner-residual-magnitude", r_kushner, 0.05);

    // normalization identity: phi = 1
    let one = skelab::Field64::constant(g, 1.0);
    let r_one = kushner_residual(&model, &paths_short, &pis, std::slice::from_ref(&one))?;
    rep.check_below("normalization-identity", r_one, 1e-10);

    Ok(())
}
