//! Tension field and time integration of the pseudo-harmonic heat flow
//! `∂_t u = τ(u)`, plus the Duhamel/Picard short-time construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fields::{Grid, MapField, ScalarField};
use crate::ops::{self, check_dt};
use crate::scalar::Real;
use crate::targets::{CliffordTorus, Target, MAX_COMPONENTS};
use crate::theta::ThetaMode;

/// Default conjugate-gradient settings for [`step_imex`].
pub const CG_REL_TOL: f64 = 1e-10;
pub const CG_MAX_ITER: usize = 500;

#[derive(Debug, Clone)]
pub struct FlowState<T: Real> {
    pub u: MapField<T>,
    pub t: T,
    pub step: usize,
    pub target: Target<T>,
    /// Re-project onto the target every `R` explicit/IMEX steps; `None` never does.
    pub reproject_every: Option<usize>,
}

impl<T: Real> FlowState<T> {
    pub fn new(u: MapField<T>, target: Target<T>) -> Result<Self> {
        if u.dim() != target.components() {
            return Err(Error::InvalidArgument(format!(
                "map has {} components, target '{}' needs {}",
                u.dim(),
                target.name(),
                target.components()
            )));
        }
        check_state(&u, &target)?;
        Ok(FlowState { u, t: T::zero(), step: 0, target, reproject_every: Some(1) })
    }

    pub fn with_reprojection(mut self, every: Option<usize>) -> Self {
        self.reproject_every = every;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub tau_tol_l2: f64,
    pub tau_tol_sup: f64,
    pub t_max: f64,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    /// Test the tolerances against the tangential part `dP(u) τ` instead of `τ`.
    #[serde(default)]
    pub tangential: bool,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria { tau_tol_l2: 1e-6, tau_tol_sup: 1e-5, t_max: 50.0, plateau_window: 1000, plateau_tol: 1e-12, tangential: false }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau_tol_l2 > 0.0
            && self.tau_tol_sup > 0.0
            && self.t_max > 0.0
            && self.plateau_window > 0
            && self.plateau_tol > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("stop criteria must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Explicit,
    Imex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TauTolerance,
    TMax,
    Plateau,
    MaxSteps,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    pub dt: f64,
    pub integrator: Integrator,
    pub record_every: usize,
    pub stop: StopCriteria,
    pub max_steps: Option<usize>,
}

impl FlowSettings {
    pub fn explicit(dt: f64) -> Self {
        FlowSettings { dt, integrator: Integrator::Explicit, record_every: 1, stop: StopCriteria::default(), max_steps: None }
    }
}

#[derive(Debug)]
pub struct FlowRun {
    pub records: Vec<DiagnosticsRecord>,
    pub reason: StopReason,
    /// Set when a step failed; the records up to that point are kept.
    pub error: Option<Error>,
}

// ---------------------------------------------------------------------------
// State checks and projection

/// Fails with the worst offending grid point if `u` left the tube or chart guard.
pub fn check_state<T: Real>(u: &MapField<T>, target: &Target<T>) -> Result<()> {
    u.check_finite()?;
    let grid = u.grid();
    let k = u.dim();
    let worst = |measure: &(dyn Fn(&[T]) -> T + Sync)| {
        (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut p = [T::zero(); MAX_COMPONENTS];
                u.read_point(idx, &mut p[..k]);
                (measure(&p[..k]), idx)
            })
            .reduce(|| (T::neg_infinity(), usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
    };
    match target {
        Target::Embedded(e) => {
            let r = e.tube_radius();
            if r.is_infinite() {
                return Ok(());
            }
            let (d, idx) = worst(&|p| e.rho_norm(p));
            if d > r {
                return Err(Error::TubeViolation { at: grid.unravel(idx), dist: d.to_f64_lossy(), radius: r.to_f64_lossy() });
            }
        }
        Target::Chart(c) => {
            if let Some(g) = c.guard() {
                let (d, idx) = worst(&|p| p.iter().fold(T::zero(), |s, &v| s + v * v).sqrt());
                if d > g {
                    return Err(Error::GuardViolation { at: grid.unravel(idx), norm: d.to_f64_lossy(), guard: g.to_f64_lossy() });
                }
            }
        }
    }
    Ok(())
}

/// Pointwise `P(u)`; the identity in intrinsic mode.
pub fn project_map<T: Real>(u: &MapField<T>, target: &Target<T>) -> MapField<T> {
    match target {
        Target::Embedded(e) => u.map_points(u.dim(), |_, p, out| e.project(p, out)),
        Target::Chart(_) => u.clone(),
    }
}

/// `ρ(u) = u − P(u)` pointwise (zero in intrinsic mode).
pub fn rho_field<T: Real>(u: &MapField<T>, target: &Target<T>) -> MapField<T> {
    u.sub(&project_map(u, target))
}

// ---------------------------------------------------------------------------
// Tension

/// Nonlinear part `τ(u) − Δ_H u`, from precomputed horizontal derivatives.
fn nonlinear_term<T: Real>(u: &MapField<T>, xu: &MapField<T>, yu: &MapField<T>, target: &Target<T>) -> MapField<T> {
    let k = u.dim();
    u.map_points(k, |idx, p, out| {
        let mut gx = [T::zero(); MAX_COMPONENTS];
        let mut gy = [T::zero(); MAX_COMPONENTS];
        let mut a = [T::zero(); MAX_COMPONENTS];
        let mut b = [T::zero(); MAX_COMPONENTS];
        xu.read_point(idx, &mut gx[..k]);
        yu.read_point(idx, &mut gy[..k]);
        match target {
            Target::Embedded(e) => {
                e.hess_contract_unchecked(p, &gx[..k], &gx[..k], &mut a[..k]);
                e.hess_contract_unchecked(p, &gy[..k], &gy[..k], &mut b[..k]);
                for c in 0..k {
                    out[c] = -(a[c] + b[c]);
                }
            }
            Target::Chart(ch) => {
                ch.christoffel_contract_unchecked(p, &gx[..k], &gx[..k], &mut a[..k]);
                ch.christoffel_contract_unchecked(p, &gy[..k], &gy[..k], &mut b[..k]);
                for c in 0..k {
                    out[c] = a[c] + b[c];
                }
            }
        }
    })
}

/// Tension with the horizontal derivatives it was built from.
pub struct TensionParts<T: Real> {
    pub tau: MapField<T>,
    pub xu: MapField<T>,
    pub yu: MapField<T>,
}

pub fn tension_parts<T: Real>(u: &MapField<T>, target: &Target<T>) -> Result<TensionParts<T>> {
    check_state(u, target)?;
    let (xu, yu) = ops::horizontal_gradient(u);
    let mut tau = ops::sub_laplacian_map(u);
    tau.axpy(T::one(), &nonlinear_term(u, &xu, &yu, target));
    Ok(TensionParts { tau, xu, yu })
}

/// `τ(u) = Δ_H u − P_bc(u)(Xu, Xu) − P_bc(u)(Yu, Yu)` (extrinsic) or
/// `Δ_H f + Γ(f)(Xf, Xf) + Γ(f)(Yf, Yf)` (intrinsic).
pub fn tension<T: Real>(u: &MapField<T>, target: &Target<T>) -> Result<MapField<T>> {
    Ok(tension_parts(u, target)?.tau)
}

// ---------------------------------------------------------------------------
// Steps

fn finish_step<T: Real>(s: &mut FlowState<T>, mut u: MapField<T>, dt: T) -> Result<()> {
    s.step += 1;
    if let Some(r) = s.reproject_every {
        if r > 0 && s.step % r == 0 {
            u = project_map(&u, &s.target);
        }
    }
    if let Err(e) = check_state(&u, &s.target) {
        s.step -= 1;
        return Err(e);
    }
    s.u = u;
    s.t = s.t + dt;
    Ok(())
}

/// `u ← u + dt τ(u)`, then re-projection when due.
pub fn step_explicit<T: Real>(s: &mut FlowState<T>, dt: T) -> Result<()> {
    check_dt(s.u.grid(), dt)?;
    let tau = tension(&s.u, &s.target)?;
    let mut u = s.u.clone();
    u.axpy(dt, &tau);
    finish_step(s, u, dt)
}

/// Same as [`step_explicit`] with a tension already evaluated at `s.u`.
fn step_explicit_with<T: Real>(s: &mut FlowState<T>, dt: T, tau: &MapField<T>) -> Result<()> {
    let mut u = s.u.clone();
    u.axpy(dt, tau);
    finish_step(s, u, dt)
}

/// Solves `(I − dt Δ_H) u_new = u + dt (τ(u) − Δ_H u)` componentwise.
pub fn step_imex<T: Real>(s: &mut FlowState<T>, dt: T) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    check_state(&s.u, &s.target)?;
    let (xu, yu) = ops::horizontal_gradient(&s.u);
    let mut rhs = s.u.clone();
    rhs.axpy(dt, &nonlinear_term(&s.u, &xu, &yu, &s.target));
    let comps = rhs
        .components()
        .iter()
        .map(|b| ops::solve_implicit_heat(b, dt, CG_REL_TOL, CG_MAX_ITER).map(|(x, _)| x))
        .collect::<Result<Vec<_>>>()?;
    finish_step(s, MapField::new(comps)?, dt)
}

// ---------------------------------------------------------------------------
// Driver

/// Runs the flow until the first stopping criterion holds or a step fails.
///
/// A record is emitted at the start, every `record_every` steps, and at the end.
pub fn run_flow(s: &mut FlowState<f64>, settings: &FlowSettings) -> FlowRun {
    let mut records = Vec::new();
    let mut run = |records: &mut Vec<DiagnosticsRecord>| -> Result<StopReason> {
        settings.stop.validate()?;
        if settings.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be >= 1".into()));
        }
        if settings.integrator == Integrator::Explicit {
            check_dt(s.u.grid(), settings.dt)?;
        }
        let stop = &settings.stop;
        let mut anchor: Option<(usize, f64)> = None;
        loop {
            let parts = tension_parts(&s.u, &s.target)?;
            let rec = diagnostics::record_from_parts(s, &parts, settings.dt);
            let (l2, sup) = if stop.tangential { (rec.tau_tan_l2, rec.tau_tan_sup) } else { (rec.tau_l2, rec.tau_sup) };
            let tau_done = l2 <= stop.tau_tol_l2 && sup <= stop.tau_tol_sup;
            let (a_step, a_e) = *anchor.get_or_insert((s.step, rec.e_h));
            let plateau = s.step >= a_step + stop.plateau_window && {
                let flat = (rec.e_h - a_e).abs() < stop.plateau_tol;
                anchor = Some((s.step, rec.e_h));
                flat
            };
            let reason = if tau_done {
                Some(StopReason::TauTolerance)
            } else if plateau {
                Some(StopReason::Plateau)
            } else if s.t >= stop.t_max - 0.5 * settings.dt {
                Some(StopReason::TMax)
            } else if settings.max_steps.is_some_and(|m| s.step >= m) {
                Some(StopReason::MaxSteps)
            } else {
                None
            };
            if reason.is_some() || s.step % settings.record_every == 0 {
                records.push(rec);
            }
            if let Some(r) = reason {
                return Ok(r);
            }
            match settings.integrator {
                Integrator::Explicit => step_explicit_with(s, settings.dt, &parts.tau)?,
                Integrator::Imex => step_imex(s, settings.dt)?,
            }
        }
    };
    match run(&mut records) {
        Ok(reason) => FlowRun { records, reason, error: None },
        Err(e) => FlowRun { records, reason: StopReason::Aborted, error: Some(e) },
    }
}

// ---------------------------------------------------------------------------
// Duhamel / Picard

#[derive(Debug, Clone)]
pub struct PicardResult {
    /// `u_k` at `t_horizon` for `k = 0..=k_max`.
    pub iterates: Vec<MapField<f64>>,
    /// `X_k = sup_t (sup|u_k − u_{k−1}| + sup|∇_H (u_k − u_{k−1})|)` for `k ≥ 1`.
    pub x_norms: Vec<f64>,
    /// `X_{k+1} / X_k`.
    pub ratios: Vec<f64>,
    /// Two consecutive ratios ≥ 1.
    pub diverged: bool,
    pub substeps: usize,
    pub dt: f64,
}

/// Picard iteration for the Duhamel form of the flow on `[0, t_horizon]`.
///
/// With `S = I + dt Δ_H` and `N(u) = τ(u) − Δ_H u`, the iterate `u_k` on the time
/// grid `t_m = m dt` satisfies `u_k(t_{m+1}) = S (u_k(t_m) + dt N(u_{k−1}(t_m)))`,
/// which is the rectangle-rule quadrature of `u_k = e^{tΔ_H}φ + ∫ e^{(t−s)Δ_H} N(u_{k−1})`.
/// `u_0` is the heat-propagated `φ`. No re-projection is applied.
pub fn duhamel_picard(phi: &MapField<f64>, target: &Target<f64>, t_horizon: f64, k_max: usize, dt: f64) -> Result<PicardResult> {
    if k_max < 3 {
        return Err(Error::InvalidArgument("duhamel_picard needs k_max >= 3".into()));
    }
    if !(t_horizon > 0.0) {
        return Err(Error::InvalidArgument("t_horizon must be positive".into()));
    }
    check_dt(phi.grid(), dt)?;
    // a horizon that is an integer multiple of dt must not round up to one extra step
    let m = ((t_horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = t_horizon / m as f64;
    let heat = |v: &MapField<f64>| -> Result<MapField<f64>> {
        Ok(MapField::new(v.components().iter().map(|c| ops::linear_heat_step(c, dt)).collect::<Result<Vec<_>>>()?)?)
    };

    let mut prev: Vec<MapField<f64>> = Vec::with_capacity(m + 1);
    prev.push(phi.clone());
    for i in 0..m {
        let next = heat(&prev[i])?;
        prev.push(next);
    }
    let mut iterates = vec![prev[m].clone()];
    let mut x_norms = Vec::new();
    let mut ratios = Vec::new();
    let mut diverged = false;
    let mut above = 0;
    for _k in 1..=k_max {
        let mut cur = Vec::with_capacity(m + 1);
        cur.push(phi.clone());
        for i in 0..m {
            check_state(&prev[i], target)?;
            let (xu, yu) = ops::horizontal_gradient(&prev[i]);
            let mut v = cur[i].clone();
            v.axpy(dt, &nonlinear_term(&prev[i], &xu, &yu, target));
            cur.push(heat(&v)?);
        }
        let xk = cur
            .iter()
            .zip(&prev)
            .map(|(a, b)| {
                let d = a.sub(b);
                let (dx, dy) = ops::horizontal_gradient(&d);
                let g = dx.pointwise_norm().zip_map(&dy.pointwise_norm(), |p, q| (p * p + q * q).sqrt());
                d.pointwise_norm().max() + g.max()
            })
            .fold(0.0f64, f64::max);
        if let Some(&last) = x_norms.last() {
            let r = if last > 0.0 { xk / last } else { 0.0 };
            ratios.push(r);
            above = if r >= 1.0 { above + 1 } else { 0 };
            diverged |= above >= 2;
        }
        x_norms.push(xk);
        iterates.push(cur[m].clone());
        prev = cur;
    }
    Ok(PicardResult { iterates, x_norms, ratios, diverged, substeps: m, dt })
}

// ---------------------------------------------------------------------------
// Initial data

/// Options for seeded smooth initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    /// Highest trigonometric mode in `x` and `y`.
    pub modes: u32,
    /// Perturbation amplitude (angles, chart coordinates or ambient units).
    pub amplitude: f64,
    /// Add lattice-invariant theta components so the data depends on `z`.
    pub z_dependent: bool,
    /// Base winding matrix for the Clifford torus, rows = target angles.
    pub winding: [[i32; 2]; 2],
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions { modes: 3, amplitude: 0.3, z_dependent: false, winding: [[0, 0], [0, 0]] }
    }
}

/// Random smooth lattice-invariant scalar field, normalised to sup norm one.
pub fn random_smooth_field(grid: Grid, rng: &mut ChaCha8Rng, modes: u32, z_dependent: bool) -> ScalarField<f64> {
    let m = modes.clamp(1, 3) as i32;
    let mut terms = Vec::new();
    for p in -m..=m {
        for q in 0..=m {
            if q == 0 && p <= 0 {
                continue;
            }
            let decay = 1.0 / (1.0 + (p * p + q * q) as f64);
            terms.push((p as f64, q as f64, decay * rng.gen_range(-1.0..1.0), decay * rng.gen_range(-1.0..1.0)));
        }
    }
    let thetas: Vec<(ThetaMode, f64)> = if z_dependent {
        (1..=2).map(|n| (ThetaMode::new(n).with_phase(rng.gen_range(0.0..std::f64::consts::TAU)), rng.gen_range(0.5..1.0) / n as f64)).collect()
    } else {
        Vec::new()
    };
    let tau = std::f64::consts::TAU;
    let f = ScalarField::from_fn(grid, |x: f64, y: f64, z: f64| {
        let mut v = 0.0;
        for &(p, q, a, b) in &terms {
            let arg = tau * (p * x + q * y);
            v += a * arg.cos() + b * arg.sin();
        }
        for (th, c) in &thetas {
            v += c * th.value(x, y, z);
        }
        v
    });
    let s = f.max_abs();
    if s > 0.0 {
        f.map(|v| v / s)
    } else {
        f
    }
}

/// Clifford torus map with the given angle fields.
pub fn clifford_from_angles(a1: &ScalarField<f64>, a2: &ScalarField<f64>) -> MapField<f64> {
    let grid = a1.grid();
    MapField::zeros(grid, 4).map_points(4, |idx, _, out| {
        out.copy_from_slice(&CliffordTorus::point([a1.data()[idx], a2.data()[idx]]));
    })
}

/// `u(x, y, z) = ((cos 2πx, sin 2πx), (cos 2πy, sin 2πy)) / √2`, shifted in angle.
pub fn standard_torus_map(grid: Grid, shift: [f64; 2]) -> MapField<f64> {
    let tau = std::f64::consts::TAU;
    let a1 = ScalarField::from_fn(grid, |x: f64, _, _| tau * x + shift[0]);
    let a2 = ScalarField::from_fn(grid, |_, y: f64, _| tau * y + shift[1]);
    clifford_from_angles(&a1, &a2)
}

/// Seeded smooth initial data adapted to `target`.
pub fn initial_map(target: &Target<f64>, grid: Grid, seed: u64, opts: &InitOptions) -> Result<MapField<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = target.components();
    let mut g: Vec<ScalarField<f64>> = (0..k.max(2)).map(|_| random_smooth_field(grid, &mut rng, opts.modes, opts.z_dependent)).collect();
    let amp = opts.amplitude;
    let tau = std::f64::consts::TAU;
    let u = match target.name() {
        "clifford" => {
            let w = opts.winding;
            let a1 = ScalarField::from_fn(grid, |x: f64, y: f64, _| tau * (w[0][0] as f64 * x + w[0][1] as f64 * y));
            let a2 = ScalarField::from_fn(grid, |x: f64, y: f64, _| tau * (w[1][0] as f64 * x + w[1][1] as f64 * y));
            let a1 = a1.zip_map(&g[0], |b, p| b + amp * p);
            let a2 = a2.zip_map(&g[1], |b, p| b + amp * p);
            clifford_from_angles(&a1, &a2)
        }
        "sphere" => {
            let pert = MapField::new(g.drain(..3).collect())?;
            pert.map_points(3, |_, p, out| {
                let v = [amp * p[0], amp * p[1], 1.0 + amp * p[2]];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                for a in 0..3 {
                    out[a] = v[a] / n;
                }
            })
        }
        "poincare" => {
            // keep |f| ≤ amp·√2 ≤ 0.5, well inside the guard
            let s = amp.min(0.5 / std::f64::consts::SQRT_2);
            MapField::new(g.drain(..2).map(|c| c.map(|v| s * v)).collect())?
        }
        "flat_torus" => MapField::new(g.drain(..2).map(|c| c.map(|v| amp * v)).collect())?,
        _ => MapField::new(g.drain(..k).map(|c| c.map(|v| amp * v)).collect())?,
    };
    check_state(&u, target)?;
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn target(name: &str) -> Target<f64> {
        Target::by_name(name, Some(3)).unwrap()
    }

    #[test]
    fn constant_map_has_zero_tension() {
        for name in ["sphere", "clifford", "euclidean", "poincare"] {
            let t = target(name);
            let k = t.components();
            let mut p = vec![0.0; k];
            p[0] = if name == "poincare" { 0.3 } else { 1.0 };
            if name == "clifford" {
                p = CliffordTorus::point([0.2, 1.0]).to_vec();
            }
            let u = MapField::from_fn(grid(8), k, |_, out| out.copy_from_slice(&p));
            assert_eq!(tension(&u, &t).unwrap().max_abs(), 0.0, "{name}");
        }
    }

    #[test]
    fn euclidean_tension_is_sub_laplacian() {
        let t = target("euclidean");
        let u = initial_map(&t, grid(16), 5, &InitOptions::default()).unwrap();
        let d = tension(&u, &t).unwrap().sub(&ops::sub_laplacian_map(&u));
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn standard_torus_map_is_nearly_harmonic() {
        let t = target("clifford");
        let mut errs = Vec::new();
        for n in [16, 32] {
            errs.push(tension(&standard_torus_map(grid(n), [0.0, 0.0]), &t).unwrap().max_abs());
        }
        assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
    }

    #[test]
    fn fixed_point_is_preserved() {
        let t = target("sphere");
        let p = [0.0, 0.6, 0.8];
        let u = MapField::from_fn(grid(8), 3, |_, out| out.copy_from_slice(&p));
        let mut s = FlowState::new(u.clone(), t).unwrap();
        let dt = ops::dt_max(grid(8));
        step_explicit(&mut s, dt).unwrap();
        step_imex(&mut s, dt).unwrap();
        assert!(s.u.sub(&u).max_abs() <= 1e-15);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn tube_exit_reports_worst_point() {
        let t = target("sphere");
        let mut u = MapField::from_fn(grid(8), 3, |_, out| out.copy_from_slice(&[0.0, 0.0, 1.0]));
        let idx = u.grid().index(3, 4, 5);
        u.write_point(idx, &[0.0, 0.0, 1.9]);
        match check_state(&u, &t) {
            Err(Error::TubeViolation { at, .. }) => assert_eq!(at, (3, 4, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explicit_step_rejects_large_dt() {
        let t = target("euclidean");
        let u = initial_map(&t, grid(8), 1, &InitOptions::default()).unwrap();
        let mut s = FlowState::new(u, t).unwrap();
        let dt = 1.5 * ops::dt_max::<f64>(grid(8));
        assert!(matches!(step_explicit(&mut s, dt), Err(Error::Stability { .. })));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn imex_is_stable_and_conservative_for_large_steps() {
        let t = target("euclidean");
        let g = grid(16);
        let u = initial_map(&t, g, 2, &InitOptions { z_dependent: true, ..Default::default() }).unwrap();
        let m0: Vec<f64> = u.components().iter().map(ops::integrate).collect();
        let sup0 = u.max_abs();
        let mut s = FlowState::new(u, t).unwrap();
        let dt = 10.0 * ops::dt_max::<f64>(g);
        for _ in 0..20 {
            step_imex(&mut s, dt).unwrap();
        }
        for (a, m) in m0.iter().enumerate() {
            assert!((ops::integrate(s.u.component(a)) - m).abs() <= 1e-10);
        }
        assert!(s.u.max_abs() <= sup0 * (1.0 + 1e-9));
    }

    #[test]
    fn run_flow_stops_immediately_at_harmonic_map() {
        let t = target("clifford");
        let u = MapField::from_fn(grid(8), 4, |_, out| out.copy_from_slice(&CliffordTorus::point([0.5, 0.5])));
        let mut s = FlowState::new(u, t).unwrap();
        let run = run_flow(&mut s, &FlowSettings::explicit(ops::dt_max(grid(8))));
        assert_eq!(run.reason, StopReason::TauTolerance);
        assert_eq!(run.records.len(), 1);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn run_flow_keeps_partial_records_on_abort() {
        let t = target("euclidean");
        let u = initial_map(&t, grid(8), 3, &InitOptions::default()).unwrap();
        let mut s = FlowState::new(u, t).unwrap();
        let mut set = FlowSettings::explicit(1.0);
        set.integrator = Integrator::Explicit;
        let run = run_flow(&mut s, &set);
        assert_eq!(run.reason, StopReason::Aborted);
        assert!(matches!(run.error, Some(Error::Stability { .. })));
    }

    #[test]
    fn picard_on_flat_target_is_trivial() {
        let t = target("euclidean");
        let g = grid(8);
        let u = initial_map(&t, g, 4, &InitOptions::default()).unwrap();
        let r = duhamel_picard(&u, &t, 0.01, 3, ops::dt_max(g)).unwrap();
        for it in &r.iterates[1..] {
            assert_eq!(it.sub(&r.iterates[0]).max_abs(), 0.0);
        }
        assert!(r.ratios.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn initial_data_is_deterministic_and_admissible() {
        for name in ["sphere", "clifford", "euclidean", "poincare", "flat_torus"] {
            let t = target(name);
            let opts = InitOptions { z_dependent: true, ..Default::default() };
            let a = initial_map(&t, grid(8), 11, &opts).unwrap();
            let b = initial_map(&t, grid(8), 11, &opts).unwrap();
            assert_eq!(a, b);
            check_state(&a, &t).unwrap();
        }
    }
}
