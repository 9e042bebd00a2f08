//! The discrete flow: repeated steps, each taken relative to the previously
//! accepted surface, with remeshing, failure handling and per-step diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::remesh::{self, RemeshPolicy};
use crate::geometry::{build_shape, compute_curvature, estimate_ubc_radius, DiscreteSurface, ShapeSpec};
use crate::mm_step::{check_health, step, Reference, StepConfig, StepResult};
use crate::normal_graph::height_between;

/// Header line of the diagnostics CSV.
pub const CSV_VERSION: &str = "# flatflow-diag v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub shape: ShapeSpec,
    pub step: StepConfig,
    pub n_steps: Option<usize>,
    pub t_final: Option<f64>,
    pub remesh: RemeshPolicy,
    /// Keep every `snapshot_every`-th surface; 0 keeps none besides the seed
    /// and the final surface.
    pub snapshot_every: usize,
}

impl FlowConfig {
    pub fn new(shape: ShapeSpec, step: StepConfig, n_steps: usize) -> Self {
        Self {
            shape,
            step,
            n_steps: Some(n_steps),
            t_final: None,
            remesh: RemeshPolicy::Off,
            snapshot_every: 0,
        }
    }

    /// Number of steps, reconciling `n_steps` and `t_final`.
    pub fn resolve_steps(&self) -> Result<usize> {
        self.step.validate()?;
        let h = self.step.h;
        let n = match (self.n_steps, self.t_final) {
            (Some(n), None) => n,
            (None, Some(t)) => steps_for(t, h)?,
            (Some(n), Some(t)) => {
                if steps_for(t, h)? != n {
                    return Err(Error::Config(format!(
                        "t_final = {t} does not equal n_steps·h = {n}·{h}"
                    )));
                }
                n
            }
            (None, None) => return Err(Error::Config("one of n_steps or t_final is required".into())),
        };
        if n == 0 {
            return Err(Error::Config("the number of steps must be positive".into()));
        }
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve_steps()?;
        match self.remesh {
            RemeshPolicy::ArcLength2d { ratio } if !(ratio > 1.0) => {
                Err(Error::Config(format!("remesh ratio must exceed 1, got {ratio}")))
            }
            RemeshPolicy::Quality3d { min_angle_deg, edge_ratio }
                if !(min_angle_deg > 0.0 && min_angle_deg < 60.0 && edge_ratio > 1.0) =>
            {
                Err(Error::Config(format!(
                    "quality policy needs 0 < min_angle < 60 and edge_ratio > 1, got {min_angle_deg}, {edge_ratio}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// `t / h` when it is an integer to within `1e-9` relative.
pub fn steps_for(t: f64, h: f64) -> Result<usize> {
    if !(t > 0.0 && h > 0.0) {
        return Err(Error::Config(format!("t_final and h must be positive, got {t} and {h}")));
    }
    let n = (t / h).round();
    if (n * h - t).abs() > 1e-9 * t || n < 1.0 {
        return Err(Error::Config(format!("t_final = {t} is not a whole number of steps of h = {h}")));
    }
    Ok(n as usize)
}

/// One accepted step (row 0 describes the seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub time: f64,
    pub perimeter: f64,
    pub volumes: Vec<f64>,
    pub distance: f64,
    pub distance_over_h: f64,
    pub max_abs_psi: f64,
    pub l2_psi: f64,
    pub l2_lap_psi: f64,
    pub constraint_margin: f64,
    /// `∫ ξ² + (h/2)|Δψ|²`
    pub lyapunov: f64,
    pub el_residual: f64,
    pub picard_iters: usize,
    pub ubc_estimate: f64,
    /// `max|ψ|/h`
    pub v_max: f64,
    /// `‖ψ‖_{L²}/h`
    pub v_l2: f64,
    pub step: usize,
    pub h: f64,
    pub multiplier_spread: f64,
    pub remeshed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Halted { step: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub status: RunStatus,
    pub final_surface: DiscreteSurface,
    pub rows: Vec<DiagnosticsRow>,
    /// `(step, surface)`, always including the seed and the final surface.
    pub snapshots: Vec<(usize, DiscreteSurface)>,
}

impl FlowOutcome {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

pub fn run(cfg: &FlowConfig) -> Result<FlowOutcome> {
    cfg.validate()?;
    let seed = build_shape(&cfg.shape)?;
    run_from(seed, cfg, 0, 0.0)
}

/// Continue a flow from `surface`, numbering steps after `start_step`.
pub fn run_from(surface: DiscreteSurface, cfg: &FlowConfig, start_step: usize, start_time: f64) -> Result<FlowOutcome> {
    let n_steps = cfg.resolve_steps()?;
    let mut surface = surface;
    let seed_curv = compute_curvature(&surface)?;
    let mut rows = vec![seed_row(&surface, estimate_ubc_radius(&surface, &seed_curv), start_step, start_time)];
    let mut snapshots = vec![(start_step, surface.clone())];
    let mut status = RunStatus::Completed;

    for k in start_step + 1..=start_step + n_steps {
        let halt = |reason: String| RunStatus::Halted { step: k, reason };
        let reference = match Reference::new(surface.clone()) {
            Ok(r) => r,
            Err(e) => {
                status = halt(format!("reference setup failed: {e}"));
                break;
            }
        };
        if let Err(e) = check_health(&reference, &cfg.step) {
            status = halt(format!("shape health: {e}"));
            break;
        }
        let accepted = match attempt(&reference, &cfg.step) {
            Ok(r) => vec![(reference, r, cfg.step.h)],
            Err(first) => {
                log::warn!("step {k} failed ({first}); retrying with two half steps");
                match half_steps(reference, &cfg.step) {
                    Ok(pair) => pair,
                    Err(second) => {
                        status = halt(format!("step failed ({first}); half-step retry failed ({second})"));
                        break;
                    }
                }
            }
        };
        let mut failed = None;
        let t_end = start_time + (k - start_step) as f64 * cfg.step.h;
        let parts = accepted.len();
        for (j, (reference, res, h)) in accepted.into_iter().enumerate() {
            let time = t_end - (parts - 1 - j) as f64 * h;
            let mut next = res.graph.clone();
            let mut remeshed = false;
            match remesh::remesh(&next, &cfg.remesh) {
                Ok(Some(s)) => {
                    next = s;
                    remeshed = true;
                }
                Ok(None) => {}
                Err(e) => {
                    failed = Some(format!("remesh failed: {e}"));
                    break;
                }
            }
            rows.push(step_row(&reference, &res, &next, k, time, h, remeshed));
            surface = next;
        }
        if let Some(reason) = failed {
            status = halt(reason);
            break;
        }
        if cfg.snapshot_every > 0 && (k - start_step).is_multiple_of(cfg.snapshot_every) {
            snapshots.push((k, surface.clone()));
        }
    }
    let last_step = rows.last().map_or(start_step, |r| r.step);
    if snapshots.last().map(|s| s.0) != Some(last_step) {
        snapshots.push((last_step, surface.clone()));
    }
    Ok(FlowOutcome {
        status,
        final_surface: surface,
        rows,
        snapshots,
    })
}

fn attempt(reference: &Reference, cfg: &StepConfig) -> Result<StepResult> {
    let r = step(reference, cfg)?;
    if r.converged {
        Ok(r)
    } else {
        Err(Error::NotConverged(format!(
            "{} picard iterations, constraint margin {:.3}",
            r.picard_iters, r.constraint_margin
        )))
    }
}

fn half_steps(reference: Reference, cfg: &StepConfig) -> Result<Vec<(Reference, StepResult, f64)>> {
    let half = StepConfig {
        h: cfg.h / 2.0,
        ..cfg.clone()
    };
    let r1 = attempt(&reference, &half)?;
    let mid = Reference::new(r1.graph.clone())?;
    check_health(&mid, &half)?;
    let r2 = attempt(&mid, &half)?;
    Ok(vec![(reference, r1, half.h), (mid, r2, half.h)])
}

fn seed_row(surface: &DiscreteSurface, ubc: f64, step: usize, time: f64) -> DiagnosticsRow {
    let m = surface.measure();
    DiagnosticsRow {
        time,
        perimeter: m.perimeter,
        volumes: m.volumes,
        distance: 0.0,
        distance_over_h: 0.0,
        max_abs_psi: 0.0,
        l2_psi: 0.0,
        l2_lap_psi: 0.0,
        constraint_margin: 0.0,
        lyapunov: 0.0,
        el_residual: 0.0,
        picard_iters: 0,
        ubc_estimate: ubc,
        v_max: 0.0,
        v_l2: 0.0,
        step,
        h: 0.0,
        multiplier_spread: 0.0,
        remeshed: false,
    }
}

fn step_row(
    reference: &Reference,
    res: &StepResult,
    next: &DiscreteSurface,
    k: usize,
    time: f64,
    h: f64,
    remeshed: bool,
) -> DiagnosticsRow {
    let solver = &reference.solver;
    let m = next.measure();
    let psi = &res.psi;
    let lap = solver.apply_laplacian(psi).unwrap_or_default();
    let l2_psi = solver.l2_norm(psi);
    let l2_lap = solver.l2_norm(&lap);
    let xi_sq = solver.inner(&res.xi, &res.xi);
    DiagnosticsRow {
        time,
        perimeter: m.perimeter,
        volumes: m.volumes,
        distance: res.distance,
        distance_over_h: res.distance / h,
        max_abs_psi: psi.max_abs(),
        l2_psi,
        l2_lap_psi: l2_lap,
        constraint_margin: res.constraint_margin,
        lyapunov: xi_sq + 0.5 * h * l2_lap * l2_lap,
        el_residual: res.el_residual,
        picard_iters: res.picard_iters,
        ubc_estimate: reference.ubc,
        v_max: psi.max_abs() / h,
        v_l2: l2_psi / h,
        step: k,
        h,
        multiplier_spread: res.multiplier_spread.iter().fold(0.0, |a: f64, b| a.max(*b)),
        remeshed,
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the diagnostics as CSV with a version comment line.
pub fn write_csv<W: Write>(rows: &[DiagnosticsRow], mut w: W) -> Result<()> {
    let nc = rows.first().map_or(0, |r| r.volumes.len());
    writeln!(w, "{CSV_VERSION}")?;
    let mut header = vec!["time".to_string(), "perimeter".to_string()];
    header.extend((0..nc).map(|c| format!("volume_{c}")));
    header.extend(
        [
            "distance",
            "distance_over_h",
            "max_abs_psi",
            "l2_psi",
            "l2_lap_psi",
            "constraint_margin",
            "lyapunov",
            "el_residual",
            "picard_iters",
            "ubc_estimate",
            "v_max",
            "v_l2",
            "step",
            "h",
            "multiplier_spread",
            "remeshed",
        ]
        .map(String::from),
    );
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut f = vec![fmt(r.time), fmt(r.perimeter)];
        f.extend(r.volumes.iter().map(|v| fmt(*v)));
        f.extend([
            fmt(r.distance),
            fmt(r.distance_over_h),
            fmt(r.max_abs_psi),
            fmt(r.l2_psi),
            fmt(r.l2_lap_psi),
            fmt(r.constraint_margin),
            fmt(r.lyapunov),
            fmt(r.el_residual),
            r.picard_iters.to_string(),
            fmt(r.ubc_estimate),
            fmt(r.v_max),
            fmt(r.v_l2),
            r.step.to_string(),
            fmt(r.h),
            fmt(r.multiplier_spread),
            u8::from(r.remeshed).to_string(),
        ]);
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

/// Run-level summaries of the diagnostics that the invariants are phrased in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    /// Largest relative deviation of any component volume from its seed value.
    pub max_volume_drift: f64,
    /// Largest step-to-step perimeter increase (0 when monotone).
    pub max_perimeter_increase: f64,
    pub perimeter_drop: f64,
    /// `Σ d_k² / 2h_k`
    pub dissipation: f64,
    /// `perimeter_drop - dissipation`; nonnegative when the energy ledger holds.
    pub ledger_slack: f64,
    pub max_constraint_margin: f64,
    pub max_el_residual: f64,
    /// Smallest `C` with `L_k ≤ (1 + C h) L_{k-1}` over steps with `L_{k-1} > 0`.
    pub lyapunov_growth: f64,
    pub total_picard_iters: usize,
    pub remeshes: usize,
}

impl RunSummary {
    pub fn from_rows(rows: &[DiagnosticsRow]) -> Self {
        let first = &rows[0];
        let last = rows.last().unwrap();
        let mut s = RunSummary {
            steps: rows.len() - 1,
            final_time: last.time,
            max_volume_drift: 0.0,
            max_perimeter_increase: 0.0,
            perimeter_drop: first.perimeter - last.perimeter,
            dissipation: 0.0,
            ledger_slack: 0.0,
            max_constraint_margin: 0.0,
            max_el_residual: 0.0,
            lyapunov_growth: 0.0,
            total_picard_iters: 0,
            remeshes: 0,
        };
        for w in rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            s.max_perimeter_increase = s.max_perimeter_increase.max(b.perimeter - a.perimeter);
            if a.lyapunov > 0.0 {
                s.lyapunov_growth = s.lyapunov_growth.max((b.lyapunov / a.lyapunov - 1.0) / b.h);
            }
        }
        for r in &rows[1..] {
            for (v, v0) in r.volumes.iter().zip(&first.volumes) {
                s.max_volume_drift = s.max_volume_drift.max(((v - v0) / v0).abs());
            }
            s.dissipation += r.distance * r.distance / (2.0 * r.h);
            s.max_constraint_margin = s.max_constraint_margin.max(r.constraint_margin);
            s.max_el_residual = s.max_el_residual.max(r.el_residual);
            s.total_picard_iters += r.picard_iters;
            s.remeshes += usize::from(r.remeshed);
        }
        s.ledger_slack = s.perimeter_drop - s.dissipation;
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub h: Vec<f64>,
    pub steps: Vec<usize>,
    /// `e(h_i, h_{i+1})`: L² distance between successive final surfaces,
    /// measured as heights over the finest final surface.
    pub errors: Vec<f64>,
    /// `log2(e₀ / e₁)`; absent when the errors are at roundoff level.
    pub order: Option<f64>,
    pub exact: bool,
}

/// Errors below this are treated as exact agreement.
pub const EXACT_TOL: f64 = 1e-8;

/// Run the same flow at every `h` in `h_list` to `t_final` and compare the
/// final surfaces.
pub fn self_convergence(cfg: &FlowConfig, h_list: &[f64], t_final: f64) -> Result<ConvergenceTable> {
    if h_list.len() < 2 {
        return Err(Error::Config("self-convergence needs at least two time steps".into()));
    }
    let steps = h_list.iter().map(|&h| steps_for(t_final, h)).collect::<Result<Vec<_>>>()?;
    let cfgs: Vec<FlowConfig> = h_list
        .iter()
        .zip(&steps)
        .map(|(&h, &n)| FlowConfig {
            step: StepConfig { h, ..cfg.step.clone() },
            n_steps: Some(n),
            t_final: None,
            snapshot_every: 0,
            ..cfg.clone()
        })
        .collect();
    let outcomes = exec::map_slice(&cfgs, run);
    let mut finals = Vec::new();
    for (o, h) in outcomes.into_iter().zip(h_list) {
        let o = o?;
        if let RunStatus::Halted { step, reason } = &o.status {
            return Err(Error::Config(format!("run with h = {h} halted at step {step}: {reason}")));
        }
        finals.push(o.final_surface);
    }
    let finest = Reference::new(finals.last().unwrap().clone())?;
    let window = 0.5 * finest.ubc;
    let heights = finals
        .iter()
        .map(|s| height_between(&finest.surface, &finest.curvature, s, window))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = heights
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[0].iter().zip(w[1].iter()).map(|(a, b)| a - b).collect();
            finest.solver.l2_norm(&d)
        })
        .collect();
    let exact = errors.iter().all(|&e| e <= EXACT_TOL);
    let order = if exact || errors.len() < 2 {
        None
    } else {
        Some((errors[0] / errors[1]).log2())
    };
    Ok(ConvergenceTable {
        h: h_list.to_vec(),
        steps,
        errors,
        order,
        exact,
    })
}
