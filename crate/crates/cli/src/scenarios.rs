//! The seven runnable scenarios.

use serde_json::{json, Value};
use subrh_core::diagnostics::{self, DiagnosticsRecord, MonotonicityTolerances, Verdict};
use subrh_core::flow::{self, FlowSettings, FlowState, Integrator};
use subrh_core::targets::Target;
use subrh_core::{ops, Grid, Map};

use crate::config::{RunConfig, Scenario};

/// Plain numeric table for scenarios whose samples are not flow records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum Samples {
    Records(Vec<DiagnosticsRecord>),
    Table(Table),
}

impl Samples {
    pub fn to_csv(&self) -> String {
        match self {
            Samples::Records(r) => diagnostics::records_to_csv(r),
            Samples::Table(t) => t.to_csv(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::Records(r) => r.len(),
            Samples::Table(t) => t.rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct Snapshot {
    pub name: String,
    pub u: Map,
    pub t: f64,
}

/// Everything a scenario hands back to the writer. `error` marks a runtime abort;
/// the samples gathered before it are still written.
pub struct ScenarioOutput {
    pub samples: Samples,
    pub verdicts: Vec<Verdict>,
    pub metrics: Value,
    pub snapshots: Vec<Snapshot>,
    pub error: Option<String>,
}

impl ScenarioOutput {
    fn aborted(samples: Samples, err: impl ToString) -> Self {
        ScenarioOutput {
            samples,
            verdicts: Vec::new(),
            metrics: json!({}),
            snapshots: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

pub fn run_scenario(cfg: &RunConfig) -> ScenarioOutput {
    let grid = cfg.grid().expect("validated");
    let dt = cfg.dt().expect("validated");
    let target = cfg.build_target().expect("validated");
    match cfg.scenario {
        Scenario::Heat => heat(cfg, grid, dt, &target),
        Scenario::Flow => flow_scenario(cfg, grid, dt, &target),
        Scenario::Picard => picard(cfg, grid, dt, &target),
        Scenario::Homotopy => homotopy(cfg, grid, &target),
        Scenario::KernelProbe => kernel_probe(cfg, grid),
        Scenario::CcBall => cc_ball(cfg, grid),
        Scenario::DistanceMonotone => distance_monotone(cfg, grid, dt, &target),
    }
}

fn scale(grid: Grid, dt: f64) -> f64 {
    let h = grid.h::<f64>();
    h * h + dt
}

fn step(s: &mut FlowState<f64>, integrator: Integrator, dt: f64) -> subrh_core::Result<()> {
    match integrator {
        Integrator::Explicit => flow::step_explicit(s, dt),
        Integrator::Imex => flow::step_imex(s, dt),
    }
}

fn winding_verdict(name: &str, a: [[i64; 2]; 2], b: [[i64; 2]; 2]) -> Verdict {
    let diff: i64 = (0..2).flat_map(|i| (0..2).map(move |j| (a[i][j] - b[i][j]).abs())).sum();
    Verdict::new(name, (-diff) as f64, 0.0)
}

fn heat(cfg: &RunConfig, grid: Grid, dt: f64, target: &Target<f64>) -> ScenarioOutput {
    let u0 = match flow::initial_map(target, grid, cfg.seed, &cfg.init_options()) {
        Ok(u) => u,
        Err(e) => return ScenarioOutput::aborted(Samples::Records(Vec::new()), e),
    };
    let mut s = match FlowState::new(u0.clone(), target.clone()) {
        Ok(s) => s,
        Err(e) => return ScenarioOutput::aborted(Samples::Records(Vec::new()), e),
    };
    let h = grid.h::<f64>();
    let mass0: Vec<f64> = u0.components().iter().map(ops::integrate).collect();
    let sup0: Vec<f64> = u0.components().iter().map(|c| c.max()).collect();
    let mut mass_drift = 0.0f64;
    let mut max_c = 0.0f64;
    let mut records = Vec::new();
    let mut error = None;
    for n in 0..=cfg.heat_steps {
        if n % cfg.record_every == 0 || n == cfg.heat_steps {
            match diagnostics::record(&s, dt) {
                Ok(r) => records.push(r),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        if n == cfg.heat_steps {
            break;
        }
        let comps: subrh_core::Result<Vec<_>> = s.u.components().iter().map(|c| ops::linear_heat_step(c, dt)).collect();
        match comps.and_then(Map::new) {
            Ok(u) => s.u = u,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
        s.step += 1;
        s.t += dt;
        for (c, comp) in s.u.components().iter().enumerate() {
            mass_drift = mass_drift.max((ops::integrate(comp) - mass0[c]).abs());
            max_c = max_c.max((comp.max() - sup0[c]).max(0.0) / (s.t * h * h));
        }
    }
    diagnostics::annotate_slacks(&mut records);
    let mono = records.windows(2).map(|w| w[0].e_h - w[1].e_h).fold(f64::INFINITY, f64::min);
    let mono = if mono.is_finite() { mono } else { 0.0 };
    let verdicts = vec![
        Verdict::new("mass_conservation", cfg.verdict.mass_tol - mass_drift, 0.0),
        Verdict::new("energy_nonincreasing", mono, cfg.verdict.monotone_tol),
    ];
    let metrics = json!({
        "steps": s.step,
        "t_final": s.t,
        "mass_drift": mass_drift,
        "max_principle_fitted_c": max_c,
        "e_h_initial": records.first().map(|r| r.e_h),
        "e_h_final": records.last().map(|r| r.e_h),
    });
    ScenarioOutput {
        samples: Samples::Records(records),
        verdicts,
        metrics,
        snapshots: vec![
            Snapshot { name: "initial".into(), u: u0, t: 0.0 },
            Snapshot { name: "final".into(), u: s.u, t: s.t },
        ],
        error,
    }
}

fn flow_scenario(cfg: &RunConfig, grid: Grid, dt: f64, target: &Target<f64>) -> ScenarioOutput {
    let u0 = match flow::initial_map(target, grid, cfg.seed, &cfg.init_options()) {
        Ok(u) => u,
        Err(e) => return ScenarioOutput::aborted(Samples::Records(Vec::new()), e),
    };
    let mut s = match FlowState::new(u0.clone(), target.clone()) {
        Ok(s) => s.with_reprojection(cfg.reproject_every),
        Err(e) => return ScenarioOutput::aborted(Samples::Records(Vec::new()), e),
    };
    let settings = FlowSettings {
        dt,
        integrator: cfg.integrator,
        record_every: cfg.record_every,
        stop: cfg.stop,
        max_steps: cfg.max_steps,
    };
    let run = flow::run_flow(&mut s, &settings);
    let mut records = run.records;
    diagnostics::annotate_slacks(&mut records);

    let sc = scale(grid, dt);
    let tol = MonotonicityTolerances {
        monotone: cfg.verdict.monotone_tol,
        identity_c: cfg.verdict.identity_c,
        convexity_c: cfg.verdict.convexity_c,
    };
    let mono = diagnostics::monotonicity_report(&records, grid.h(), target.curvature(), &tol);
    let reeb = diagnostics::reeb_bound_report(&records, cfg.verdict.reeb_t0, cfg.verdict.reeb_c * sc);
    let mut verdicts = vec![mono.nonincreasing.clone(), mono.identity.clone()];
    verdicts.extend(mono.convexity.clone());
    if records.iter().any(|r| r.t > cfg.verdict.reeb_t0) {
        verdicts.push(reeb.stated.clone());
    }
    let mut windings = Value::Null;
    if target.name() == "clifford" {
        if let (Ok(a), Ok(b)) = (diagnostics::winding_numbers(&u0), diagnostics::winding_numbers(&s.u)) {
            verdicts.push(winding_verdict("winding_preserved", a.matrix, b.matrix));
            windings = json!({ "initial": a.matrix, "final": b.matrix });
        }
    }
    let last = records.last();
    let metrics = json!({
        "stop_reason": run.reason,
        "steps": s.step,
        "t_final": s.t,
        "e_h_initial": records.first().map(|r| r.e_h),
        "e_h_final": last.map(|r| r.e_h),
        "e_r_final": last.map(|r| r.e_r),
        "tau_l2_final": last.map(|r| r.tau_l2),
        "tau_sup_final": last.map(|r| r.tau_sup),
        "tau_tan_l2_final": last.map(|r| r.tau_tan_l2),
        "energy_density_sup_initial": diagnostics::energy_density_sup(&u0, target),
        "energy_density_sup_final": diagnostics::energy_density_sup(&s.u, target),
        "monotonicity": mono,
        "reeb": reeb,
        "winding": windings,
    });
    ScenarioOutput {
        samples: Samples::Records(records),
        verdicts,
        metrics,
        snapshots: vec![
            Snapshot { name: "initial".into(), u: u0, t: 0.0 },
            Snapshot { name: "final".into(), u: s.u, t: s.t },
        ],
        error: run.error.map(|e| e.to_string()),
    }
}

fn picard(cfg: &RunConfig, grid: Grid, dt: f64, target: &Target<f64>) -> ScenarioOutput {
    let k = cfg.picard_k_max;
    let mut cols = vec!["t_horizon".to_string(), "max_ratio".into(), "agreement".into()];
    cols.extend((1..=k).map(|i| format!("X_{i}")));
    cols.extend((1..k).map(|i| format!("ratio_{i}")));
    let mut table = Table { columns: cols, rows: Vec::new() };
    let phi = match flow::initial_map(target, grid, cfg.seed, &cfg.init_options()) {
        Ok(u) => u,
        Err(e) => return ScenarioOutput::aborted(Samples::Table(table), e),
    };
    let mut ratios: Vec<Vec<f64>> = Vec::new();
    let mut agreements = Vec::new();
    let mut breakdown = Value::Null;
    let mut threshold: Option<f64> = None;
    let mut contracting = true;
    let mut last_iterate = None;
    for &m in &cfg.picard_horizons {
        let th = m as f64 * dt;
        let p = match flow::duhamel_picard(&phi, target, th, k, dt) {
            Ok(p) => p,
            Err(e) => {
                breakdown = json!({ "t_horizon": th, "error": e.to_string() });
                break;
            }
        };
        let mut s = FlowState::new(phi.clone(), target.clone()).expect("initial data checked").with_reprojection(None);
        let agreement = (0..p.substeps)
            .try_for_each(|_| flow::step_explicit(&mut s, p.dt))
            .map(|_| s.u.sub(p.iterates.last().expect("k_max >= 3")).max_abs())
            .unwrap_or(f64::NAN);
        let max_ratio = p.ratios.iter().copied().fold(0.0, f64::max);
        contracting &= max_ratio <= 0.5 && !p.diverged;
        if contracting {
            threshold = Some(th);
            agreements.push(agreement);
        }
        let mut row = vec![th, max_ratio, agreement];
        row.extend(p.x_norms.iter().copied());
        row.extend(p.ratios.iter().copied());
        table.rows.push(row);
        ratios.push(p.ratios);
        last_iterate = p.iterates.last().cloned();
    }
    let first_max = ratios.first().map_or(f64::INFINITY, |r| r.iter().copied().fold(0.0, f64::max));
    let mut monotone = 0.0f64;
    for w in ratios.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            monotone = monotone.min(b - a);
        }
    }
    let worst_agreement = agreements.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    let sc = scale(grid, dt);
    let verdicts = vec![
        Verdict::new("picard_contraction", 0.5 - first_max, 0.0),
        Verdict::new("picard_ratios_monotone", monotone, 1e-12),
        Verdict::new("picard_agreement", cfg.verdict.agreement_c * sc - worst_agreement, 0.0),
    ];
    let metrics = json!({
        "threshold": threshold,
        "breakdown": breakdown,
        "ratios": ratios,
        "agreements": agreements,
        "scale": sc,
    });
    let snapshots = last_iterate
        .map(|u| vec![Snapshot { name: "picard_last".into(), u, t: table.rows.last().map_or(0.0, |r| r[0]) }])
        .unwrap_or_default();
    ScenarioOutput { samples: Samples::Table(table), verdicts, metrics, snapshots, error: None }
}

fn homotopy(cfg: &RunConfig, grid: Grid, target: &Target<f64>) -> ScenarioOutput {
    let u = flow::standard_torus_map(grid, [0.0, 0.0]);
    let v = flow::standard_torus_map(grid, cfg.homotopy_shift);
    let mut table = Table::new(&["s", "E_H", "tau_l2", "tau_sup", "tau_tan_l2"]);
    let prof = match diagnostics::geodesic_homotopy_suite(&u, &v, target, cfg.homotopy_subdivisions) {
        Ok(p) => p,
        Err(e) => return ScenarioOutput::aborted(Samples::Table(table), e),
    };
    for i in 0..prof.s.len() {
        table.rows.push(vec![prof.s[i], prof.e_h[i], prof.tau_l2[i], prof.tau_sup[i], prof.tau_tan_l2[i]]);
    }
    let h = grid.h::<f64>();
    let tau_measured = if cfg.stop.tangential { prof.max_tau_tan_l2 } else { prof.max_tau_l2 };
    let w0 = prof.windings.first().copied().unwrap_or_default();
    let wdiff = prof.windings.iter().map(|w| winding_verdict("", w0, *w).slack).fold(0.0, f64::min);
    let verdicts = vec![
        Verdict::new("energy_constant", cfg.verdict.energy_c * h * h - prof.max_energy_deviation, 0.0),
        Verdict::new("tension_small", cfg.verdict.tau_margin * cfg.stop.tau_tol_l2 - tau_measured, 0.0),
        Verdict::new("winding_constant", wdiff, 0.0),
    ];
    let metrics = json!({ "profile": prof, "tangential": cfg.stop.tangential });
    ScenarioOutput {
        samples: Samples::Table(table),
        verdicts,
        metrics,
        snapshots: vec![Snapshot { name: "translate".into(), u: v, t: 0.0 }],
        error: None,
    }
}

fn kernel_probe(cfg: &RunConfig, grid: Grid) -> ScenarioOutput {
    let mut table = Table::new(&["t", "sup", "min", "smoothing_ratio"]);
    let p = match diagnostics::heat_kernel_probe(grid, cfg.kernel_t_lo, cfg.kernel_t_hi, cfg.kernel_samples) {
        Ok(p) => p,
        Err(e) => return ScenarioOutput::aborted(Samples::Table(table), e),
    };
    for i in 0..p.times.len() {
        table.rows.push(vec![p.times[i], p.sups[i], p.mins[i], p.smoothing_ratios[i]]);
    }
    let verdicts = vec![
        Verdict::new("mass_conservation", cfg.verdict.mass_tol - p.mass_drift, 0.0),
        Verdict::new("kernel_decay_exponent", 0.3 - (p.exponent + 2.0).abs(), 0.0),
        Verdict::new("smoothing_monotone", 0.05 - p.smoothing_nonmonotone_fraction, 0.0),
        Verdict::new("kernel_positivity", p.min_value, 1e-12),
    ];
    let metrics = json!({ "kernel": p });
    ScenarioOutput { samples: Samples::Table(table), verdicts, metrics, snapshots: Vec::new(), error: None }
}

fn cc_ball(cfg: &RunConfig, grid: Grid) -> ScenarioOutput {
    let mut table = Table::new(&["delta", "volume", "coarse_volume"]);
    let rep = match diagnostics::cc_ball_scaling(grid, cfg.cc_delta_max) {
        Ok(r) => r,
        Err(e) => return ScenarioOutput::aborted(Samples::Table(table), e),
    };
    for i in 0..rep.radii.len() {
        table.rows.push(vec![rep.radii[i], rep.volumes[i], rep.coarse_volumes[i]]);
    }
    let verdicts = vec![Verdict::new("cc_ball_exponent", 0.4 - (rep.exponent - 4.0).abs(), 0.0)];
    let metrics = json!({ "cc_ball": rep });
    ScenarioOutput { samples: Samples::Table(table), verdicts, metrics, snapshots: Vec::new(), error: None }
}

fn distance_monotone(cfg: &RunConfig, grid: Grid, dt: f64, target: &Target<f64>) -> ScenarioOutput {
    let opts = cfg.init_options();
    let init = |seed| {
        flow::initial_map(target, grid, seed, &opts)
            .and_then(|u| FlowState::new(u, target.clone()))
            .map(|s| s.with_reprojection(cfg.reproject_every))
    };
    let (mut a, mut b) = match (init(cfg.seed), init(cfg.seed_b())) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return ScenarioOutput::aborted(Samples::Records(Vec::new()), e),
    };
    let mut verdicts = Vec::new();
    let windings = if target.name() == "clifford" {
        match (diagnostics::winding_numbers(&a.u), diagnostics::winding_numbers(&b.u)) {
            (Ok(wa), Ok(wb)) => {
                verdicts.push(winding_verdict("homotopic_seeds", wa.matrix, wb.matrix));
                Some((wa.matrix, wb.matrix))
            }
            _ => None,
        }
    } else {
        None
    };
    let mut records = Vec::new();
    let mut distances = vec![diagnostics::map_distance(&a.u, &b.u, target)];
    let mut error = None;
    loop {
        let done = a.t >= cfg.stop.t_max - 0.5 * dt || cfg.max_steps.is_some_and(|m| a.step >= m);
        if done || a.step % cfg.record_every == 0 {
            match diagnostics::record(&a, dt) {
                Ok(mut r) => {
                    r.slacks.insert("distance".into(), *distances.last().expect("non-empty"));
                    records.push(r);
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        if done {
            break;
        }
        if let Err(e) = step(&mut a, cfg.integrator, dt).and_then(|_| step(&mut b, cfg.integrator, dt)) {
            error = Some(e.to_string());
            break;
        }
        distances.push(diagnostics::map_distance(&a.u, &b.u, target));
    }
    let worst = distances.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    let worst = if worst.is_finite() { worst } else { 0.0 };
    verdicts.push(Verdict::new("distance_nonincreasing", worst, cfg.verdict.distance_c * scale(grid, dt)));
    if let (Some((wa, wb)), Ok(fa), Ok(fb)) =
        (windings, diagnostics::winding_numbers(&a.u), diagnostics::winding_numbers(&b.u))
    {
        verdicts.push(winding_verdict("winding_preserved_a", wa, fa.matrix));
        verdicts.push(winding_verdict("winding_preserved_b", wb, fb.matrix));
    }
    let metrics = json!({
        "steps": a.step,
        "t_final": a.t,
        "distance_initial": distances.first(),
        "distance_final": distances.last(),
        "worst_increase": -worst,
    });
    ScenarioOutput {
        samples: Samples::Records(records),
        verdicts,
        metrics,
        snapshots: vec![
            Snapshot { name: "final_a".into(), u: a.u, t: a.t },
            Snapshot { name: "final_b".into(), u: b.u, t: b.t },
        ],
        error,
    }
}
