//! Nonlinear filtering of the degenerate signal (X, V) from the observation
//! Y: signal simulation, the Zakai-type adjoint SKE driven by the
//! observation Brownian motion, normalization to the conditional density,
//! and a bootstrap particle filter oracle.
//!
//! Signal/observation system (d = d1 = 1):
//!
//!   dX = V dt
//!   dV = tilde_b dt + tilde_sigma dBtilde + sigma dB
//!   dY = hat_b dt + hat_sigma(t, Y) dB
//!
//! With W = B + int tilde_h ds (tilde_h = hat_sigma^{-1} hat_b) the
//! observation reads dY = hat_sigma dW, so dW is recovered exactly from the
//! data as hat_sigma^{-1} dY. The unnormalized conditional density solves
//! the divergence-form SKE du = [L*_v u - v d_x u] dt + M*_v u dW with
//! a = (Sigma^2 + SigmaTilde^2)/2, drift bbar = tilde_b - sigma tilde_h and
//! M*_v u = -d_v(Sigma u) + h u, all coefficients frozen along the observed
//! path.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{inner, Field, PhaseGrid};
use crate::noise::counter_normal;
use crate::scalar::{from_usize, lit, Scalar};
use crate::solver::{solve_linear, SkeForm, SkeProblem, TimeCoeff, Trajectory};
use crate::spectral::SpectralEngine;

pub type CoefFn<S> = Arc<dyn Fn(S, S, S, S) -> S + Send + Sync>; // (t, x, v, y)
pub type ObsCoefFn<S> = Arc<dyn Fn(S, S) -> S + Send + Sync>; // (t, y)

/// Coefficient set of the signal/observation SDE.
#[derive(Clone)]
pub struct FilterModel<S: Scalar> {
    pub tilde_b: CoefFn<S>,
    pub tilde_sigma: CoefFn<S>,
    pub sigma: CoefFn<S>,
    pub hat_b: CoefFn<S>,
    pub hat_sigma: ObsCoefFn<S>,
    /// Bound K on |tilde_sigma^{-1}| and |hat_sigma^{-1}|.
    pub k_bound: S,
}

impl<S: Scalar> FilterModel<S> {
    /// tilde_h = hat_sigma^{-1} hat_b, the likelihood drift.
    pub fn tilde_h(&self, t: S, x: S, v: S, y: S) -> S {
        (self.hat_b)(t, x, v, y) / (self.hat_sigma)(t, y)
    }

    /// bbar = tilde_b - sigma * tilde_h, the reference-measure drift.
    pub fn bar_b(&self, t: S, x: S, v: S, y: S) -> S {
        (self.tilde_b)(t, x, v, y) - (self.sigma)(t, x, v, y) * self.tilde_h(t, x, v, y)
    }

    /// Checks the inverse bounds of (A3) on a sample of points.
    pub fn check_nonsingular(&self, grid: &PhaseGrid<S>, y_samples: &[S]) -> Result<()> {
        for &y in y_samples {
            let hs = (self.hat_sigma)(S::zero(), y);
            if hs.abs().recip() > self.k_bound {
                return Err(Error::Config("hat_sigma inverse exceeds K".into()));
            }
            for i in (0..grid.nx).step_by(grid.nx / 8) {
                for j in (0..grid.nv).step_by(grid.nv / 8) {
                    let ts = (self.tilde_sigma)(S::zero(), grid.x(i), grid.v(j), y);
                    if ts.abs().recip() > self.k_bound {
                        return Err(Error::Config("tilde_sigma inverse exceeds K".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// The intro Langevin model: dX = V dt, dV = dBtilde - dW, dY = dW.
    pub fn langevin() -> Self {
        FilterModel {
            tilde_b: Arc::new(|_, _, _, _| S::zero()),
            tilde_sigma: Arc::new(|_, _, _, _| S::one()),
            sigma: Arc::new(|_, _, _, _| -S::one()),
            hat_b: Arc::new(|_, _, _, _| S::zero()),
            hat_sigma: Arc::new(|_, _| S::one()),
            k_bound: lit(2.0),
        }
    }
}

/// Filter state at one time: the unnormalized density, its normalization,
/// and the observation/driving paths up to that time.
#[derive(Debug, Clone)]
pub struct FilterState<S: Scalar> {
    pub u: Field<S>,
    pub pi: Field<S>,
    pub y_path: Vec<S>,
    pub w_path: Vec<S>,
    pub t: S,
}

impl<S: Scalar> FilterState<S> {
    /// Builds the state from a Zakai snapshot, checking the density
    /// invariants: u >= -1e-6, pi >= 0, unit mass after normalization.
    pub fn from_snapshot(
        traj: &Trajectory<S>,
        paths: &SignalPaths<S>,
        index: usize,
    ) -> Result<Self> {
        let u = traj.fields[index].clone();
        if u.min() < -lit::<S>(1e-6) {
            return Err(Error::Degeneracy(format!(
                "unnormalized density undershoot {:?}",
                u.min().to_f64()
            )));
        }
        let pi = normalize(&u)?;
        if (pi.mass() - S::one()).abs() > lit(1e-10) {
            return Err(Error::Degeneracy("normalization mass defect".into()));
        }
        let t = traj.times[index];
        let steps = (t / paths.dt).round().to_usize().unwrap_or(0);
        Ok(FilterState {
            u,
            pi,
            y_path: paths.y[..=steps.min(paths.y.len() - 1)].to_vec(),
            w_path: paths.w_increments[..steps.min(paths.w_increments.len())].to_vec(),
            t,
        })
    }
}

/// Simulated signal and observation paths at step resolution, along with the
/// increments dW = hat_sigma^{-1} dY that drive the grid filter.
#[derive(Debug, Clone)]
pub struct SignalPaths<S: Scalar> {
    pub dt: S,
    pub x: Vec<S>,
    pub v: Vec<S>,
    pub y: Vec<S>,
    pub w_increments: Vec<S>,
}

/// Euler-Maruyama simulation of (X, V, Y). Increment channels: lane 0 is
/// dBtilde, lane 1 is dB. Initial point from `z0`.
pub fn simulate_signal<S: Scalar>(
    model: &FilterModel<S>,
    z0: (S, S, S),
    horizon: S,
    steps: usize,
    seed: u64,
    stream: u64,
) -> Result<SignalPaths<S>> {
    if steps == 0 {
        return Err(Error::Config("need at least one step".into()));
    }
    let dt = horizon / from_usize::<S>(steps);
    let sqrt_dt = dt.sqrt();
    let (mut x, mut v, mut y) = z0;
    let mut xs = vec![x];
    let mut vs = vec![v];
    let mut ys = vec![y];
    let mut dws = Vec::with_capacity(steps);
    for n in 0..steps {
        let t = dt * from_usize::<S>(n);
        let db_tilde = counter_normal::<S>(seed, stream, n as u64, 0) * sqrt_dt;
        let db = counter_normal::<S>(seed, stream, n as u64, 1) * sqrt_dt;
        let tb = (model.tilde_b)(t, x, v, y);
        let ts = (model.tilde_sigma)(t, x, v, y);
        let sg = (model.sigma)(t, x, v, y);
        let hb = (model.hat_b)(t, x, v, y);
        let hs = (model.hat_sigma)(t, y);
        if ![tb, ts, sg, hb, hs].iter().all(|c| c.is_finite()) {
            return Err(Error::Domain("non-finite coefficient evaluation".into()));
        }
        let dy = hb * dt + hs * db;
        dws.push(dy / hs);
        x += v * dt;
        v = v + tb * dt + ts * db_tilde + sg * db;
        y += dy;
        xs.push(x);
        vs.push(v);
        ys.push(y);
    }
    Ok(SignalPaths {
        dt,
        x: xs,
        v: vs,
        y: ys,
        w_increments: dws,
    })
}

/// Builds the divergence-form SKE problem of the Zakai equation along an
/// observation path.
pub fn zakai_problem<S: Scalar>(
    model: &FilterModel<S>,
    paths: &SignalPaths<S>,
    u0: Field<S>,
    c0: S,
) -> SkeProblem<S> {
    let grid = u0.grid;
    let dt = paths.dt;
    let y_path = paths.y.clone();
    let model_a = model.clone();
    let a = TimeCoeff::Fn(Arc::new(move |t: S| {
        let n = step_index(t, dt, y_path.len());
        let y = y_path[n];
        Field::from_fn(grid, |x, v| {
            let s = (model_a.sigma)(t, x, v, y);
            let ts = (model_a.tilde_sigma)(t, x, v, y);
            lit::<S>(0.5) * (s * s + ts * ts)
        })
    }));
    let y_path = paths.y.clone();
    let model_b = model.clone();
    let b = TimeCoeff::Fn(Arc::new(move |t: S| {
        let n = step_index(t, dt, y_path.len());
        let y = y_path[n];
        Field::from_fn(grid, |x, v| model_b.bar_b(t, x, v, y))
    }));
    let y_path = paths.y.clone();
    let model_s = model.clone();
    let sigma = TimeCoeff::Fn(Arc::new(move |t: S| {
        let n = step_index(t, dt, y_path.len());
        let y = y_path[n];
        Field::from_fn(grid, |x, v| (model_s.sigma)(t, x, v, y))
    }));
    let y_path = paths.y.clone();
    let model_h = model.clone();
    let h = TimeCoeff::Fn(Arc::new(move |t: S| {
        let n = step_index(t, dt, y_path.len());
        let y = y_path[n];
        Field::from_fn(grid, |x, v| model_h.tilde_h(t, x, v, y))
    }));
    SkeProblem {
        form: SkeForm::Divergence,
        nu: S::zero(),
        a,
        b,
        sigma: vec![sigma],
        h: vec![h],
        f: TimeCoeff::Zero,
        g: Vec::new(),
        u0,
        c0,
        c1: S::infinity(),
        c2: S::infinity(),
    }
}

fn step_index<S: Scalar>(t: S, dt: S, len: usize) -> usize {
    (t / dt)
        .round()
        .to_usize()
        .unwrap_or(0)
        .min(len.saturating_sub(1))
}

/// Solves the Zakai SKE driven by the reconstructed observation increments.
/// Returns the unnormalized trajectory (snapshots every `stride` steps).
pub fn solve_zakai<S: Scalar>(
    model: &FilterModel<S>,
    paths: &SignalPaths<S>,
    u0: Field<S>,
    c0: S,
    stride: usize,
) -> Result<Trajectory<S>> {
    if u0.min() < -lit::<S>(1e-12) || !(u0.mass() > S::zero()) {
        return Err(Error::Domain("u0 must be nonnegative with positive mass".into()));
    }
    let steps = paths.w_increments.len();
    let horizon = paths.dt * from_usize::<S>(steps);
    let prob = zakai_problem(model, paths, u0, c0);
    // the driving increments are the reconstructed dW, one channel
    let mut inc = crate::noise::WienerIncrements::generate(0, 0, paths.dt, steps, 1);
    for n in 0..steps {
        inc.dw[(n, 0)] = paths.w_increments[n];
    }
    solve_linear(&prob, horizon, steps, &inc, stride)
}

/// Normalizes the unnormalized density: clips negatives to zero and divides
/// by the L1 mass. Errors when the mass has collapsed.
pub fn normalize<S: Scalar>(u: &Field<S>) -> Result<Field<S>> {
    let clipped = u.map(|a| a.max(S::zero()));
    let mass = clipped.mass();
    if mass < lit(1e-12) {
        return Err(Error::Degeneracy(format!(
            "vanishing filter mass {:?}",
            mass.to_f64()
        )));
    }
    Ok(clipped.scaled(mass.recip()))
}

/// Weighted empirical density from the bootstrap particle filter.
#[derive(Debug, Clone)]
pub struct ParticleOutput<S: Scalar> {
    pub density: Field<S>,
    pub min_ess: S,
    pub resample_count: usize,
}

/// Bootstrap particle filter under the reference measure: particles feel the
/// common reconstructed dW through the correlated noise column and their own
/// dBtilde; weights accumulate the likelihood tilde_h dW - tilde_h^2 dt / 2.
/// Systematic resampling below ESS = N/2; output binned to grid nodes.
pub fn particle_filter<S: Scalar>(
    model: &FilterModel<S>,
    paths: &SignalPaths<S>,
    grid: &PhaseGrid<S>,
    sample_z0: impl Fn(u64) -> (S, S),
    n_particles: usize,
    seed: u64,
) -> Result<ParticleOutput<S>> {
    if n_particles < 1000 {
        return Err(Error::Config("particle filter needs Npart >= 1000".into()));
    }
    let steps = paths.w_increments.len();
    let dt = paths.dt;
    let sqrt_dt = dt.sqrt();
    let mut px: Vec<S> = (0..n_particles).map(|i| sample_z0(i as u64).0).collect();
    let mut pv: Vec<S> = (0..n_particles).map(|i| sample_z0(i as u64).1).collect();
    let mut logw = vec![S::zero(); n_particles];
    let n_s = from_usize::<S>(n_particles);
    let mut min_ess = n_s;
    let mut resample_count = 0usize;
    let half = lit::<S>(0.5);
    for n in 0..steps {
        let t = dt * from_usize::<S>(n);
        let y = paths.y[n];
        let dw = paths.w_increments[n];
        for i in 0..n_particles {
            let (x, v) = (px[i], pv[i]);
            let db_tilde =
                counter_normal::<S>(seed ^ 0x70f1, n as u64, i as u64, 0) * sqrt_dt;
            let h = model.tilde_h(t, x, v, y);
            logw[i] += h * dw - half * h * h * dt;
            px[i] = x + v * dt;
            pv[i] = v
                + model.bar_b(t, x, v, y) * dt
                + (model.tilde_sigma)(t, x, v, y) * db_tilde
                + (model.sigma)(t, x, v, y) * dw;
        }
        // effective sample size from normalized weights
        let wmax = logw.iter().copied().fold(S::neg_infinity(), S::max);
        let ws: Vec<S> = logw.iter().map(|&l| (l - wmax).exp()).collect();
        let sum: S = crate::stats::pairwise_sum(&ws);
        let sum2: S = crate::stats::pairwise_sum_iter(ws.iter().map(|&w| w * w));
        let ess = sum * sum / sum2;
        min_ess = min_ess.min(ess);
        if ess < lit(10.0) {
            return Err(Error::Degeneracy(format!(
                "particle weights collapsed (ESS = {:?})",
                ess.to_f64()
            )));
        }
        if ess < n_s * half {
            systematic_resample(&mut px, &mut pv, &mut logw, &ws, sum, seed, n as u64);
            resample_count += 1;
        }
    }
    // bin to nearest grid node
    let wmax = logw.iter().copied().fold(S::neg_infinity(), S::max);
    let ws: Vec<S> = logw.iter().map(|&l| (l - wmax).exp()).collect();
    let wsum: S = crate::stats::pairwise_sum(&ws);
    let mut density = Field::zeros(*grid);
    let hx = grid.hx();
    let hv = grid.hv();
    for i in 0..n_particles {
        let ix = ((px[i] + grid.lx) / hx)
            .round()
            .to_i64()
            .unwrap_or(0)
            .rem_euclid(grid.nx as i64) as usize;
        let iv = ((pv[i] + grid.lv) / hv)
            .round()
            .to_i64()
            .unwrap_or(0)
            .rem_euclid(grid.nv as i64) as usize;
        density.values[(ix, iv)] += ws[i];
    }
    let scale = (wsum * grid.cell()).recip();
    density = density.scaled(scale);
    Ok(ParticleOutput {
        density,
        min_ess,
        resample_count,
    })
}

fn systematic_resample<S: Scalar>(
    px: &mut [S],
    pv: &mut [S],
    logw: &mut [S],
    ws: &[S],
    wsum: S,
    seed: u64,
    step: u64,
) {
    let n = px.len();
    let n_s = from_usize::<S>(n);
    let u0 = lit::<S>(
        (crate::noise::counter_u64(seed ^ 0x5e5a, step, 0, 0) >> 11) as f64 / 9.007199254740992e15,
    ) / n_s;
    let mut new_x = Vec::with_capacity(n);
    let mut new_v = Vec::with_capacity(n);
    let mut cum = ws[0] / wsum;
    let mut j = 0usize;
    for i in 0..n {
        let target = u0 + from_usize::<S>(i) / n_s;
        while cum < target && j + 1 < n {
            j += 1;
            cum += ws[j] / wsum;
        }
        new_x.push(px[j]);
        new_v.push(pv[j]);
    }
    px.copy_from_slice(&new_x);
    pv.copy_from_slice(&new_v);
    for l in logw.iter_mut() {
        *l = S::zero();
    }
}

/// Total-variation distance between two densities on the same grid.
pub fn tv_distance<S: Scalar>(a: &Field<S>, b: &Field<S>) -> S {
    lit::<S>(0.5)
        * crate::stats::pairwise_sum_iter(
            a.values
                .iter()
                .zip(b.values.iter())
                .map(|(&x, &y)| (x - y).abs()),
        )
        * a.grid.cell()
}

/// Discrete residual of the Kushner-Stratonovich identity for a basket of
/// test functions along a normalized trajectory (stride 1):
///
///   pi_T(phi) - pi_0(phi) - sum_n [ pi_n(L_v phi + v d_x phi) dt
///        + (pi_n(M_v phi) - pi_n(h) pi_n(phi)) (dW_n - pi_n(h) dt) ],
///
/// with M_v phi = Sigma d_v phi + h phi and the innovation increments
/// dW - pi(h) dt (the Ito quotient of the unnormalized density produces the
/// minus sign; with a plus sign the residual acquires a dt-independent
/// bias 2 int pi(h) (pi(M phi) - pi(h) pi(phi)) ds and never refines).
/// The identity is accumulated over the whole horizon (the per-step defects
/// form a mean-zero martingale array, so the accumulated residual is the
/// O(sqrt(dt)) object); the return value is the RMS over the basket.
pub fn kushner_residual<S: Scalar>(
    model: &FilterModel<S>,
    paths: &SignalPaths<S>,
    pis: &[Field<S>],
    test_fns: &[Field<S>],
) -> Result<S> {
    let steps = paths.w_increments.len();
    if pis.len() != steps + 1 {
        return Err(Error::Shape(format!(
            "need a normalized field per step: {} vs {}",
            pis.len(),
            steps + 1
        )));
    }
    let grid = pis[0].grid;
    let engine = SpectralEngine::new(grid);
    let dt = paths.dt;
    // derivative fields per test function, computed once
    struct Prepared<S: Scalar> {
        dd: Field<S>,
        dv: Field<S>,
        v_dx: Field<S>,
    }
    let prepared: Vec<Prepared<S>> = test_fns
        .iter()
        .map(|phi| {
            let dx_phi = engine.derivative(phi, 1, 0);
            let mut v_dx = dx_phi.clone();
            for i in 0..grid.nx {
                for j in 0..grid.nv {
                    v_dx.values[(i, j)] *= grid.v(j);
                }
            }
            Prepared {
                dd: engine.derivative(phi, 0, 2),
                dv: engine.derivative(phi, 0, 1),
                v_dx,
            }
        })
        .collect();
    let mut acc = vec![S::zero(); test_fns.len()];
    for n in 0..steps {
        let t = dt * from_usize::<S>(n);
        let y = paths.y[n];
        let pi = &pis[n];
        let a_field = Field::from_fn(grid, |x, v| {
            let s = (model.sigma)(t, x, v, y);
            let ts = (model.tilde_sigma)(t, x, v, y);
            lit::<S>(0.5) * (s * s + ts * ts)
        });
        let b_field = Field::from_fn(grid, |x, v| model.bar_b(t, x, v, y));
        let sig_field = Field::from_fn(grid, |x, v| (model.sigma)(t, x, v, y));
        let h_field = Field::from_fn(grid, |x, v| model.tilde_h(t, x, v, y));
        let pi_h = inner(pi, &h_field);
        for (k, (phi, prep)) in test_fns.iter().zip(prepared.iter()).enumerate() {
            let l_phi = a_field
                .mul(&prep.dd)
                .add(&b_field.mul(&prep.dv))
                .add(&prep.v_dx);
            let m_phi = sig_field.mul(&prep.dv).add(&h_field.mul(phi));
            let pi_phi = inner(pi, phi);
            let drift = inner(pi, &l_phi);
            let gain = inner(pi, &m_phi) - pi_h * pi_phi;
            let dwbar = paths.w_increments[n] - pi_h * dt;
            let lhs = inner(&pis[n + 1], phi) - pi_phi;
            acc[k] += lhs - drift * dt - gain * dwbar;
        }
    }
    let mut sq_sum = S::zero();
    for r in &acc {
        sq_sum += *r * *r;
    }
    Ok((sq_sum / from_usize::<S>(test_fns.len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, make_grid};
    use crate::stats::{kolmogorov_statistic, normal_cdf};

    #[test]
    fn reconstructed_increments_equal_dy_for_unit_hat_sigma() {
        // hat_b = 0, hat_sigma = 1: dY = dB, so the reconstructed dW equals
        // the generated observation increment bitwise
        let model = FilterModel::<f64>::langevin();
        let dt = 0.5f64 / 100.0;
        let p = simulate_signal(&model, (0.0, 0.0, 0.0), 0.5, 100, 7, 0).unwrap();
        for n in 0..100usize {
            let db = counter_normal::<f64>(7, 0, n as u64, 1) * dt.sqrt();
            assert_eq!(p.w_increments[n], db);
        }
    }

    #[test]
    fn single_euler_step_is_exact_algebra() {
        let model = FilterModel::<f64> {
            tilde_b: Arc::new(|_, _, _, _| 0.3),
            tilde_sigma: Arc::new(|_, _, _, _| 1.0),
            sigma: Arc::new(|_, _, _, _| 0.5),
            hat_b: Arc::new(|_, _, _, _| 0.0),
            hat_sigma: Arc::new(|_, _| 1.0),
            k_bound: 2.0,
        };
        let dt = 0.25;
        let p = simulate_signal(&model, (1.0, -0.5, 0.0), dt, 1, 3, 9).unwrap();
        let db_tilde = counter_normal::<f64>(3, 9, 0, 0) * dt.sqrt();
        let db = counter_normal::<f64>(3, 9, 0, 1) * dt.sqrt();
        assert_eq!(p.x[1], 1.0 + (-0.5) * dt);
        assert_eq!(p.v[1], -0.5 + 0.3 * dt + 1.0 * db_tilde + 0.5 * db);
    }

    #[test]
    fn langevin_velocity_variance() {
        // tilde_sigma = 1, sigma = 0: Var V_T = T
        let model = FilterModel::<f64> {
            tilde_b: Arc::new(|_, _, _, _| 0.0),
            tilde_sigma: Arc::new(|_, _, _, _| 1.0),
            sigma: Arc::new(|_, _, _, _| 0.0),
            hat_b: Arc::new(|_, _, _, _| 0.0),
            hat_sigma: Arc::new(|_, _| 1.0),
            k_bound: 2.0,
        };
        let t_final = 1.0;
        let mut vs = Vec::new();
        for stream in 0..10_000u64 {
            let p = simulate_signal(&model, (0.0, 0.0, 0.0), t_final, 16, 5, stream).unwrap();
            vs.push(*p.v.last().unwrap());
            // X - X0 - int V dt = 0 exactly per scheme
            let mut xi = 0.0;
            for n in 0..16 {
                xi += p.v[n] * p.dt;
            }
            assert!((p.x[16] - xi).abs() < 1e-12);
        }
        let var = crate::stats::variance(&vs);
        let se = var * (2.0 / (vs.len() as f64 - 1.0)).sqrt();
        assert!((var - t_final).abs() < 5.0 * se, "var {var} (se {se})");
    }

    #[test]
    fn normalize_behaviour() {
        let g = make_grid(8.0f64, 8.0, 64, 64).unwrap();
        let density = {
            let f = Field::from_fn(g, |x, v| (-(x * x + v * v)).exp());
            f.scaled(f.mass().recip())
        };
        let same = normalize(&density).unwrap();
        assert!(lp_norm(&same.sub(&density), f64::INFINITY) < 1e-12);
        let doubled = normalize(&density.scaled(2.0)).unwrap();
        assert!(lp_norm(&doubled.sub(&density), f64::INFINITY) < 1e-12);
        assert!((normalize(&density).unwrap().mass() - 1.0).abs() < 1e-10);
        assert!(normalize(&Field::zeros(g)).is_err());
    }

    #[test]
    fn decoupled_zakai_conserves_mass() {
        // h = 0, Sigma = 0: deterministic Fokker-Planck evolution
        let model = FilterModel::<f64> {
            tilde_b: Arc::new(|_, _, _, _| 0.0),
            tilde_sigma: Arc::new(|_, _, _, _| 1.0),
            sigma: Arc::new(|_, _, _, _| 0.0),
            hat_b: Arc::new(|_, _, _, _| 0.0),
            hat_sigma: Arc::new(|_, _| 1.0),
            k_bound: 2.0,
        };
        let g = make_grid(8.0f64, 8.0, 64, 64).unwrap();
        let u0 = {
            let f = Field::from_fn(g, |x, v| (-(x * x + v * v)).exp());
            f.scaled(f.mass().recip())
        };
        let paths = simulate_signal(&model, (0.0, 0.0, 0.0), 0.25, 250, 11, 0).unwrap();
        let traj = solve_zakai(&model, &paths, u0, 1.0, 50).unwrap();
        for row in &traj.diagnostics {
            assert!((row.mass - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn langevin_zakai_mass_is_pathwise_constant() {
        let model = FilterModel::<f64>::langevin();
        let g = make_grid(8.0f64, 8.0, 64, 64).unwrap();
        let u0 = {
            let f = Field::from_fn(g, |x, v| (-(x * x + v * v) / 0.5).exp());
            f.scaled(f.mass().recip())
        };
        let paths = simulate_signal(&model, (0.0, 0.0, 0.0), 0.25, 250, 13, 1).unwrap();
        let traj = solve_zakai(&model, &paths, u0, 1.0, 50).unwrap();
        for row in &traj.diagnostics {
            assert!((row.mass - 1.0).abs() < 1e-8, "mass {}", row.mass);
        }
    }

    #[test]
    fn particle_filter_gaussian_oracle() {
        // no observation coupling: V_T histogram matches N(0, T)
        let model = FilterModel::<f64> {
            tilde_b: Arc::new(|_, _, _, _| 0.0),
            tilde_sigma: Arc::new(|_, _, _, _| 1.0),
            sigma: Arc::new(|_, _, _, _| 0.0),
            hat_b: Arc::new(|_, _, _, _| 0.0),
            hat_sigma: Arc::new(|_, _| 1.0),
            k_bound: 2.0,
        };
        let g = make_grid(8.0, 8.0, 32, 64).unwrap();
        let t_final = 0.5;
        let paths = simulate_signal(&model, (0.0, 0.0, 0.0), t_final, 100, 17, 0).unwrap();
        let npart = 20_000usize;
        let out = particle_filter(&model, &paths, &g, |_| (0.0, 0.0), npart, 23).unwrap();
        // marginal in v from the binned density, as samples at node centers
        let mut samples = Vec::new();
        for j in 0..g.nv {
            let mut col = 0.0;
            for i in 0..g.nx {
                col += out.density.values[(i, j)];
            }
            let count = (col * g.cell() * npart as f64).round() as usize;
            for _ in 0..count {
                samples.push(g.v(j));
            }
        }
        let stat = kolmogorov_statistic(&mut samples, |v| normal_cdf(v, 0.0, t_final.sqrt()));
        // KS threshold 1.63/sqrt(N) plus binning slack of half a cell
        let slack = 0.5 * g.hv() * (2.0 / (std::f64::consts::PI * t_final)).sqrt();
        assert!(
            stat < 1.63 / (npart as f64).sqrt() + slack,
            "KS statistic {stat}"
        );
    }

    #[test]
    fn deterministic_particles_follow_the_flow() {
        // zero noise coefficients: every particle tracks the deterministic
        // flow x += v dt, v += tilde_b dt
        let model = FilterModel::<f64> {
            tilde_b: Arc::new(|_, _, _, _| 0.25),
            tilde_sigma: Arc::new(|_, _, _, _| 0.0),
            sigma: Arc::new(|_, _, _, _| 0.0),
            hat_b: Arc::new(|_, _, _, _| 0.0),
            hat_sigma: Arc::new(|_, _| 1.0),
            k_bound: f64::INFINITY,
        };
        let g = make_grid(8.0f64, 8.0, 64, 64).unwrap();
        let steps = 100;
        let t_final = 0.5;
        let paths = simulate_signal(&model, (0.0, 1.0, 0.0), t_final, steps, 3, 0).unwrap();
        let out = particle_filter(&model, &paths, &g, |_| (0.0, 1.0), 1000, 5).unwrap();
        // expected flow point: v = 1 + 0.25 t, x = sum v dt
        let dt = t_final / steps as f64;
        let mut x = 0.0;
        let mut v = 1.0;
        for _ in 0..steps {
            x += v * dt;
            v += 0.25 * dt;
        }
        let m = out.density.moments();
        assert!((m.mean_x - x).abs() <= 0.5 * g.hx() + 1e-12, "{} vs {}", m.mean_x, x);
        assert!((m.mean_v - v).abs() <= 0.5 * g.hv() + 1e-12);
        assert!(m.var_x < g.hx() * g.hx());
        assert!(m.var_v < g.hv() * g.hv());
    }

    #[test]
    fn filter_state_invariants() {
        let model = FilterModel::<f64>::langevin();
        let g = make_grid(8.0f64, 8.0, 32, 32).unwrap();
        let u0 = {
            let f = Field::from_fn(g, |x, v| (-(x * x + v * v)).exp());
            f.scaled(f.mass().recip())
        };
        let paths = simulate_signal(&model, (0.0, 0.0, 0.0), 0.1, 100, 29, 0).unwrap();
        let traj = solve_zakai(&model, &paths, u0, 1.0, 25).unwrap();
        let state = FilterState::from_snapshot(&traj, &paths, traj.fields.len() - 1).unwrap();
        assert!((state.pi.mass() - 1.0).abs() < 1e-10);
        assert!(state.pi.min() >= 0.0);
        assert!(state.u.min() > -1e-6);
        assert_eq!(state.w_path.len(), 100);
    }

    #[test]
    fn kushner_residual_normalization_identity() {
        // phi = 1: the residual collapses to the normalization identity
        let model = FilterModel::<f64>::langevin();
        let g = make_grid(8.0f64, 8.0, 32, 32).unwrap();
        let u0 = {
            let f = Field::from_fn(g, |x, v| (-(x * x + v * v)).exp());
            f.scaled(f.mass().recip())
        };
        let paths = simulate_signal(&model, (0.0, 0.0, 0.0), 0.1, 100, 19, 0).unwrap();
        let traj = solve_zakai(&model, &paths, u0, 1.0, 1).unwrap();
        let pis: Vec<Field<f64>> = traj.fields.iter().map(|u| normalize(u).unwrap()).collect();
        let one = Field::constant(g, 1.0);
        let r = kushner_residual(&model, &paths, &pis, std::slice::from_ref(&one)).unwrap();
        assert!(r < 1e-10, "normalization residual {r}");
    }
}
