//! Iterative feasibility solvers between the rank level set S and a data
//! constraint set M: exact alternating projections, the inexact extrapolated
//! variant with its three verifiable step conditions, and averaged
//! projections together with its product-space formulation. Every run emits
//! a full iterate trace.

use std::fmt::Write as _;

use rand::Rng;

use crate::constraint::{AffineConstraint, ConstraintSet};
use crate::error::{Error, Result};
use crate::matrix::{fmt_f64, Matrix};
use crate::ortho::{orthonormalize, span_residual};
use crate::random::derived_rng;
use crate::rank_set::{project_rank, RankSetSpec};
use crate::tol::Tolerances;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    AlternatingProjections,
    InexactAlternatingProjections,
    AveragedProjections,
    ProductSpace,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::AlternatingProjections => "ap",
            Algorithm::InexactAlternatingProjections => "inexact-ap",
            Algorithm::AveragedProjections => "averaged",
            Algorithm::ProductSpace => "product-space",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ap" => Ok(Algorithm::AlternatingProjections),
            "inexact-ap" => Ok(Algorithm::InexactAlternatingProjections),
            "averaged" => Ok(Algorithm::AveragedProjections),
            "product-space" => Ok(Algorithm::ProductSpace),
            other => Err(Error::InvalidParameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// How the M-side projection of the inexact solver is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InexactStrategy {
    /// Use the exact projector; the run coincides with plain alternating
    /// projections.
    Exact,
    /// Exact projection plus a seeded tangential perturbation sized so the
    /// cone-distance condition stays within gamma.
    Perturbed,
    /// Affine only: inner conjugate-gradient solve of the projection system
    /// stopped at relative residual gamma / 4.
    TruncatedInner,
}

impl InexactStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            InexactStrategy::Exact => "exact",
            InexactStrategy::Perturbed => "perturbed",
            InexactStrategy::TruncatedInner => "truncated-inner",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "exact" => Ok(InexactStrategy::Exact),
            "perturbed" => Ok(InexactStrategy::Perturbed),
            "truncated-inner" => Ok(InexactStrategy::TruncatedInner),
            other => Err(Error::InvalidParameter(format!(
                "unknown inexact strategy '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Inexactness budget of the cone-distance condition; must be < 1.
    pub gamma: f64,
    pub max_iters: usize,
    /// Terminate once an even step norm drops to this gap.
    pub stop_gap: f64,
    pub seed: u64,
    pub inexact_strategy: InexactStrategy,
    /// Retain every iterate in memory (needed to fit rates against a known
    /// target point).
    pub keep_points: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 0.0,
            max_iters: 10_000,
            stop_gap: 1e-10,
            seed: 0,
            inexact_strategy: InexactStrategy::Exact,
            keep_points: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.stop_gap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stop gap must be positive, got {}",
                self.stop_gap
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of a trace: the iterate index, the step that produced it, its
/// distance to S and its constraint residual.
#[derive(Clone, Copy, Debug)]
pub struct IterationRow {
    pub k: usize,
    pub step_norm: f64,
    pub dist_s: f64,
    pub residual_m: f64,
}

/// Outcome of the three checks of one inexact M-step.
#[derive(Clone, Copy, Debug)]
pub struct ConditionRecord {
    /// Iterate index of the odd step the record belongs to.
    pub k: usize,
    /// Step-monotonicity check.
    pub step_monotone: bool,
    /// Coincidence rule: the step must return to the previous point when the
    /// ray projection does.
    pub coincidence: bool,
    /// Cone-distance check d_{N_M}(z) <= gamma.
    pub cone_bound: bool,
    pub cone_distance: f64,
    /// Whether the step fell back to the exact projection.
    pub fallback: bool,
    /// Cone distance measured against a sampled normal span rather than the
    /// exact normal space (magnitude sets only).
    pub estimated: bool,
}

impl ConditionRecord {
    pub fn all_pass(&self) -> bool {
        self.step_monotone && self.coincidence && self.cone_bound
    }
}

/// Scalar run parameters reproduced in the trace serialization.
#[derive(Clone, Debug)]
pub struct TraceParams {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub gamma: f64,
    pub seed: u64,
    pub stop_gap: f64,
    pub max_iters: usize,
    pub rank_tol: f64,
    pub tie_tol: f64,
    pub strategy: Option<InexactStrategy>,
}

#[derive(Clone, Debug)]
pub struct IterateTrace {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub params: TraceParams,
    pub rows: Vec<IterationRow>,
    pub condition_log: Vec<ConditionRecord>,
    pub converged: bool,
    pub final_point: Matrix,
    /// Half squared-distance sum per iterate (averaged-projection runs).
    pub objective: Vec<f64>,
    /// Monitored flag: false if the objective ever increased.
    pub objective_monotone: bool,
    /// All iterates, retained only when the config asks for them.
    pub points: Option<Vec<Matrix>>,
}

impl IterateTrace {
    pub fn iterations(&self) -> usize {
        self.rows.last().map(|r| r.k).unwrap_or(0)
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.rows.iter().skip(1).map(|r| r.step_norm).collect()
    }

    /// Line-delimited structured record of the run, including the final
    /// point, suitable for exact re-reading.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run_id {}", if self.run_id.is_empty() { "-" } else { &self.run_id });
        let _ = writeln!(s, "algorithm {}", self.algorithm.name());
        let _ = writeln!(s, "m {}", self.params.m);
        let _ = writeln!(s, "n {}", self.params.n);
        let _ = writeln!(s, "s {}", self.params.s);
        let _ = writeln!(s, "gamma {}", fmt_f64(self.params.gamma));
        let _ = writeln!(s, "seed {}", self.params.seed);
        let _ = writeln!(s, "stop_gap {}", fmt_f64(self.params.stop_gap));
        let _ = writeln!(s, "max_iters {}", self.params.max_iters);
        let _ = writeln!(s, "rank_tol {}", fmt_f64(self.params.rank_tol));
        let _ = writeln!(s, "tie_tol {}", fmt_f64(self.params.tie_tol));
        let _ = writeln!(
            s,
            "strategy {}",
            self.params.strategy.map(|st| st.name()).unwrap_or("-")
        );
        let _ = writeln!(s, "converged {}", self.converged);
        let _ = writeln!(s, "iterations {}", self.iterations());
        let _ = writeln!(s, "columns k step_norm dist_S residual_M cond_a cond_b cond_c d_NM");
        for row in &self.rows {
            let (a, b, c, d) = self.condition_columns(row.k);
            let _ = writeln!(
                s,
                "row {} {} {} {} {} {} {} {}",
                row.k,
                fmt_f64(row.step_norm),
                fmt_f64(row.dist_s),
                fmt_f64(row.residual_m),
                a,
                b,
                c,
                fmt_f64(d)
            );
        }
        let _ = writeln!(s, "final_point");
        s.push_str(&self.final_point.to_text());
        s.push_str("end\n");
        s
    }

    /// CSV view with exactly the trace columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,step_norm,dist_S,residual_M,cond_a,cond_b,cond_c,d_NM\n");
        for row in &self.rows {
            let (a, b, c, d) = self.condition_columns(row.k);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                row.k,
                fmt_f64(row.step_norm),
                fmt_f64(row.dist_s),
                fmt_f64(row.residual_m),
                a,
                b,
                c,
                fmt_f64(d)
            );
        }
        s
    }

    fn condition_columns(&self, k: usize) -> (u8, u8, u8, f64) {
        match self.condition_log.iter().find(|r| r.k == k) {
            Some(r) => (
                r.step_monotone as u8,
                r.coincidence as u8,
                r.cone_bound as u8,
                r.cone_distance,
            ),
            None => (1, 1, 1, 0.0),
        }
    }

    /// Re-read a serialized trace. Rebuilds the rows, parameters and final
    /// point; the condition log is restored from the row columns.
    pub fn from_text(text: &str) -> Result<IterateTrace> {
        let mut run_id = String::new();
        let mut algorithm = Algorithm::AlternatingProjections;
        let mut params = TraceParams {
            m: 0,
            n: 0,
            s: 0,
            gamma: 0.0,
            seed: 0,
            stop_gap: 0.0,
            max_iters: 0,
            rank_tol: 0.0,
            tie_tol: 0.0,
            strategy: None,
        };
        let mut converged = false;
        let mut rows = Vec::new();
        let mut condition_log = Vec::new();
        let mut lines = text.lines().enumerate().peekable();
        let mut final_point = None;
        while let Some((lineno, line)) = lines.next() {
            let line = line.trim_end();
            if line.is_empty() || line == "end" {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            match key {
                "run_id" => run_id = if rest == "-" { String::new() } else { rest.to_string() },
                "algorithm" => algorithm = Algorithm::from_name(rest)?,
                "m" => params.m = rest.parse().map_err(|_| parse_err(format!("bad m '{rest}'")))?,
                "n" => params.n = rest.parse().map_err(|_| parse_err(format!("bad n '{rest}'")))?,
                "s" => params.s = rest.parse().map_err(|_| parse_err(format!("bad s '{rest}'")))?,
                "gamma" => {
                    params.gamma = rest.parse().map_err(|_| parse_err(format!("bad gamma '{rest}'")))?
                }
                "seed" => {
                    params.seed = rest.parse().map_err(|_| parse_err(format!("bad seed '{rest}'")))?
                }
                "stop_gap" => {
                    params.stop_gap =
                        rest.parse().map_err(|_| parse_err(format!("bad stop_gap '{rest}'")))?
                }
                "max_iters" => {
                    params.max_iters =
                        rest.parse().map_err(|_| parse_err(format!("bad max_iters '{rest}'")))?
                }
                "rank_tol" => {
                    params.rank_tol =
                        rest.parse().map_err(|_| parse_err(format!("bad rank_tol '{rest}'")))?
                }
                "tie_tol" => {
                    params.tie_tol =
                        rest.parse().map_err(|_| parse_err(format!("bad tie_tol '{rest}'")))?
                }
                "strategy" => {
                    params.strategy = if rest == "-" {
                        None
                    } else {
                        Some(InexactStrategy::from_name(rest)?)
                    }
                }
                "converged" => {
                    converged = rest.parse().map_err(|_| parse_err(format!("bad bool '{rest}'")))?
                }
                "iterations" | "columns" => {}
                "row" => {
                    let toks: Vec<&str> = rest.split_whitespace().collect();
                    if toks.len() != 8 {
                        return Err(parse_err(format!("row needs 8 fields, got {}", toks.len())));
                    }
                    let k: usize = toks[0].parse().map_err(|_| parse_err("bad row index".into()))?;
                    let nums: Vec<f64> = toks[1..4]
                        .iter()
                        .map(|t| t.parse::<f64>().map_err(|_| parse_err(format!("bad real '{t}'"))))
                        .collect::<Result<_>>()?;
                    let flags: Vec<u8> = toks[4..7]
                        .iter()
                        .map(|t| t.parse::<u8>().map_err(|_| parse_err(format!("bad flag '{t}'"))))
                        .collect::<Result<_>>()?;
                    let d_nm: f64 = toks[7].parse().map_err(|_| parse_err("bad d_NM".into()))?;
                    rows.push(IterationRow {
                        k,
                        step_norm: nums[0],
                        dist_s: nums[1],
                        residual_m: nums[2],
                    });
                    // Odd computed iterates carry the inexact-step checks.
                    if params.strategy.is_some() && k >= 3 && k % 2 == 1 {
                        condition_log.push(ConditionRecord {
                            k,
                            step_monotone: flags[0] != 0,
                            coincidence: flags[1] != 0,
                            cone_bound: flags[2] != 0,
                            cone_distance: d_nm,
                            fallback: false,
                            estimated: false,
                        });
                    }
                }
                "final_point" => {
                    let mut mat_text = String::new();
                    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
                        line: lineno + 2,
                        message: "missing final point".into(),
                    })?;
                    mat_text.push_str(header);
                    mat_text.push('\n');
                    let rows_n: usize = header
                        .split_whitespace()
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::Parse {
                            line: lineno + 2,
                            message: "bad final point header".into(),
                        })?;
                    for _ in 0..rows_n {
                        if let Some((_, l)) = lines.next() {
                            mat_text.push_str(l);
                            mat_text.push('\n');
                        }
                    }
                    final_point = Some(Matrix::from_text(&mat_text)?);
                }
                other => {
                    return Err(parse_err(format!("unknown trace field '{other}'")));
                }
            }
        }
        let final_point = final_point.ok_or_else(|| Error::Parse {
            line: 0,
            message: "trace lacks a final point".into(),
        })?;
        Ok(IterateTrace {
            run_id,
            algorithm,
            params,
            rows,
            condition_log,
            converged,
            final_point,
            objective: Vec::new(),
            objective_monotone: true,
            points: None,
        })
    }
}

/// A closed set with an exact nearest-point map and a feasibility measure.
pub trait SetProjector {
    fn project(&self, x: &Matrix) -> Result<Matrix>;
    /// Zero exactly on the set; recorded per iterate in traces.
    fn residual(&self, x: &Matrix) -> f64;
}

impl SetProjector for ConstraintSet {
    fn project(&self, x: &Matrix) -> Result<Matrix> {
        ConstraintSet::project(self, x)
    }

    fn residual(&self, x: &Matrix) -> f64 {
        ConstraintSet::residual(self, x)
    }
}

/// The rank level set as a projector.
#[derive(Clone, Copy, Debug)]
pub struct RankProjector(pub RankSetSpec);

impl SetProjector for RankProjector {
    fn project(&self, x: &Matrix) -> Result<Matrix> {
        Ok(project_rank(x, &self.0)?.point)
    }

    fn residual(&self, x: &Matrix) -> f64 {
        project_rank(x, &self.0).map(|r| r.distance).unwrap_or(f64::NAN)
    }
}

fn trace_params(x0: &Matrix, s: usize, cfg: &SolverConfig, strategy: Option<InexactStrategy>) -> TraceParams {
    let t = Tolerances::default();
    TraceParams {
        m: x0.rows(),
        n: x0.cols(),
        s,
        gamma: cfg.gamma,
        seed: cfg.seed,
        stop_gap: cfg.stop_gap,
        max_iters: cfg.max_iters,
        rank_tol: t.rank_tol,
        tie_tol: t.tie_tol,
        strategy,
    }
}

struct TraceBuilder {
    rows: Vec<IterationRow>,
    condition_log: Vec<ConditionRecord>,
    points: Option<Vec<Matrix>>,
    objective: Vec<f64>,
    objective_monotone: bool,
}

impl TraceBuilder {
    fn new(keep_points: bool) -> Self {
        TraceBuilder {
            rows: Vec::new(),
            condition_log: Vec::new(),
            points: keep_points.then(Vec::new),
            objective: Vec::new(),
            objective_monotone: true,
        }
    }

    fn push_row(&mut self, k: usize, step_norm: f64, dist_s: f64, residual_m: f64, point: &Matrix) {
        self.rows.push(IterationRow {
            k,
            step_norm,
            dist_s,
            residual_m,
        });
        if let Some(p) = self.points.as_mut() {
            p.push(point.clone());
        }
    }

    fn patch_dist_s(&mut self, k: usize, dist_s: f64) {
        if let Some(row) = self.rows.iter_mut().find(|r| r.k == k) {
            row.dist_s = dist_s;
        }
    }

    fn finish(
        self,
        algorithm: Algorithm,
        params: TraceParams,
        converged: bool,
        final_point: Matrix,
    ) -> IterateTrace {
        IterateTrace {
            run_id: String::new(),
            algorithm,
            params,
            rows: self.rows,
            condition_log: self.condition_log,
            converged,
            final_point,
            objective: self.objective,
            objective_monotone: self.objective_monotone,
            points: self.points,
        }
    }
}

fn ensure_finite(
    x: &Matrix,
    k: usize,
    builder: TraceBuilder,
    algorithm: Algorithm,
    params: TraceParams,
) -> Result<()> {
    if x.is_finite() {
        return Ok(());
    }
    let last_finite = builder
        .points
        .as_ref()
        .and_then(|p| p.last().cloned())
        .unwrap_or_else(|| Matrix::zeros(params.m, params.n));
    Err(Error::Diverged {
        at_iteration: k,
        trace: Box::new(builder.finish(algorithm, params, false, last_finite)),
    })
}

/// Exact alternating projections between two closed sets. `x0` must lie in
/// the first set and `x1` in the second; even iterates stay in the first
/// set and odd iterates in the second. Terminates when an even step norm
/// reaches the stop gap.
pub fn alternating_projections(
    proj_s: &dyn SetProjector,
    proj_m: &dyn SetProjector,
    x0: &Matrix,
    x1: &Matrix,
    cfg: &SolverConfig,
) -> Result<IterateTrace> {
    cfg.validate()?;
    if !x0.same_shape(x1) {
        return Err(Error::shape(x0.shape(), x1.shape()));
    }
    let params = trace_params(x0, usize::MAX, cfg, None);
    let mut builder = TraceBuilder::new(cfg.keep_points);
    builder.push_row(0, 0.0, proj_s.residual(x0), proj_m.residual(x0), x0);
    builder.push_row(
        1,
        x1.distance(x0)?,
        f64::NAN, // patched by the first S-projection
        proj_m.residual(x1),
        x1,
    );

    let mut cur = x1.clone();
    let mut converged = false;
    let mut k = 2;
    while k <= cfg.max_iters {
        let next = if k % 2 == 0 {
            let projected = proj_s.project(&cur)?;
            let step = projected.distance(&cur)?;
            builder.patch_dist_s(k - 1, step);
            builder.push_row(k, step, 0.0, proj_m.residual(&projected), &projected);
            if step <= cfg.stop_gap {
                converged = true;
                cur = projected;
                break;
            }
            projected
        } else {
            let projected = proj_m.project(&cur)?;
            let step = projected.distance(&cur)?;
            builder.push_row(k, step, f64::NAN, proj_m.residual(&projected), &projected);
            projected
        };
        if !next.is_finite() {
            return ensure_finite(&next, k, builder, Algorithm::AlternatingProjections, params)
                .map(|_| unreachable!("non-finite iterate must error"));
        }
        cur = next;
        k += 1;
    }
    // The run may end on an odd iterate whose distance to S was never
    // measured; fill it with one extra projection.
    if let Some(last) = builder.rows.last().copied() {
        if last.dist_s.is_nan() {
            let d = cur.distance(&proj_s.project(&cur)?)?;
            builder.patch_dist_s(last.k, d);
        }
    }
    Ok(builder.finish(Algorithm::AlternatingProjections, params, converged, cur))
}

/// Nearest point of M on the ray `{ origin - tau * direction : tau >= 0 }`.
///
/// `direction` must be a unit vector or zero. For an affine set the optimal
/// parameter solves a one-dimensional least-squares problem in closed form;
/// for the magnitude set the parameter is located by scanning and refining
/// the feasibility residual along the ray. A ray that never meets the set
/// within tolerance is an error the caller can fall back from.
pub fn ray_projection_onto_m(
    c: &ConstraintSet,
    origin: &Matrix,
    direction: &Matrix,
) -> Result<Matrix> {
    if origin.shape() != c.ambient() {
        return Err(Error::shape(c.ambient(), origin.shape()));
    }
    if !origin.same_shape(direction) {
        return Err(Error::shape(origin.shape(), direction.shape()));
    }
    let dir_norm = direction.fro_norm();
    let feas_scale = 1.0 + constraint_data_norm(c);
    if dir_norm == 0.0 {
        return if c.residual(origin) <= 1e-8 * feas_scale {
            Ok(origin.clone())
        } else {
            Err(Error::RayMiss {
                residual: c.residual(origin),
            })
        };
    }
    if (dir_norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "ray direction must be unit or zero, norm {dir_norm}"
        )));
    }
    match c {
        ConstraintSet::Affine(aff) => {
            let rho0: Vec<f64> = aff
                .maps()
                .iter()
                .zip(aff.rhs())
                .map(|(a, b)| a.trace_inner(origin).expect("shape checked") - b)
                .collect();
            let along: Vec<f64> = aff
                .maps()
                .iter()
                .map(|a| a.trace_inner(direction).expect("shape checked"))
                .collect();
            let denom: f64 = along.iter().map(|v| v * v).sum();
            let numer: f64 = rho0.iter().zip(&along).map(|(r, a)| r * a).sum();
            let tau = if denom > 0.0 { numer / denom } else { 0.0 };
            if tau < 0.0 {
                return Err(Error::RayMiss {
                    residual: c.residual(origin),
                });
            }
            let mut point = origin.clone();
            point.axpy(-tau, direction)?;
            let residual = c.residual(&point);
            if residual <= 1e-8 * feas_scale {
                Ok(point)
            } else {
                Err(Error::RayMiss { residual })
            }
        }
        ConstraintSet::Magnitude(_) => {
            let projected = c.project(origin)?;
            let tau_max = 10.0 * origin.distance(&projected)?.max(1e-12);
            let at = |tau: f64| -> Result<(Matrix, f64)> {
                let mut p = origin.clone();
                p.axpy(-tau, direction)?;
                let r = c.residual(&p);
                Ok((p, r))
            };
            let grid = 256;
            let mut best: Option<(f64, f64)> = None; // (tau, residual)
            for i in 0..=grid {
                let tau = tau_max * i as f64 / grid as f64;
                let (_, r) = at(tau)?;
                if best.map(|(_, br)| r < br).unwrap_or(true) {
                    best = Some((tau, r));
                }
                // Ascending scan: accept the first in-tolerance bracket so
                // the returned point is the nearest along the ray.
                if r <= 1e-8 * feas_scale {
                    break;
                }
            }
            let (tau0, _) = best.expect("grid is nonempty");
            // Ternary refinement of the residual around the best sample.
            let h = tau_max / grid as f64;
            let mut lo = (tau0 - h).max(0.0);
            let mut hi = tau0 + h;
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if at(m1)?.1 <= at(m2)?.1 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let tau = 0.5 * (lo + hi);
            let (point, residual) = at(tau)?;
            if residual <= 1e-8 * feas_scale {
                Ok(point)
            } else {
                Err(Error::RayMiss { residual })
            }
        }
    }
}

fn constraint_data_norm(c: &ConstraintSet) -> f64 {
    match c {
        ConstraintSet::Affine(aff) => aff.rhs().iter().map(|v| v * v).sum::<f64>().sqrt(),
        ConstraintSet::Magnitude(mag) => mag.moduli().iter().fold(0.0f64, |a, &b| a.max(b)),
    }
}

/// Dense Gram matrix of the measurement maps, used by the inner CG solver.
fn gram_matrix(aff: &AffineConstraint) -> Matrix {
    let p = aff.maps().len();
    Matrix::from_fn(p, p, |i, j| {
        aff.maps()[i]
            .trace_inner(&aff.maps()[j])
            .expect("maps share a shape")
    })
}

/// Conjugate gradients on `K w = r`, stopped at `||K w - r|| <= rel * ||r||`.
fn cg_solve(k_mat: &Matrix, r: &[f64], rel: f64) -> Vec<f64> {
    let n = r.len();
    let mut w = vec![0.0; n];
    let mut resid = r.to_vec();
    let mut p = resid.clone();
    let r_norm0: f64 = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
    let floor = (rel * r_norm0).max(1e-15 * r_norm0);
    let mut rs_old: f64 = resid.iter().map(|v| v * v).sum();
    for _ in 0..4 * n {
        if rs_old.sqrt() <= floor {
            break;
        }
        let kp = k_mat.matvec(&p);
        let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
        if pkp <= 0.0 {
            break;
        }
        let alpha = rs_old / pkp;
        for i in 0..n {
            w[i] += alpha * p[i];
            resid[i] -= alpha * kp[i];
        }
        let rs_new: f64 = resid.iter().map(|v| v * v).sum();
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = resid[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
    w
}

/// Distance of the unit search direction to the normal space of M at the
/// ray point. Exact for affine sets through the cached basis; for the
/// magnitude set it is the distance to the span of sampled proximal normals,
/// an under-estimate flagged in the record.
fn cone_distance(
    c: &ConstraintSet,
    at_point: &Matrix,
    direction: &Matrix,
    seed: u64,
    k: usize,
) -> Result<(f64, bool)> {
    if direction.fro_norm() == 0.0 {
        return Ok((0.0, false));
    }
    match c {
        ConstraintSet::Affine(aff) => Ok((aff.normal_space_distance(direction)?, false)),
        ConstraintSet::Magnitude(mag) => {
            let n_dim = mag.ambient().0 * mag.ambient().1;
            let samples = (2 * n_dim).min(64);
            let mut vecs = Vec::with_capacity(samples);
            for i in 0..samples {
                let v = mag.sample_normal(at_point, seed ^ ((k as u64) << 20) ^ i as u64)?;
                vecs.push(v.vectorize());
            }
            let span = orthonormalize(&vecs, 1e-10);
            Ok((span_residual(&span, &direction.vectorize()), true))
        }
    }
}

struct OddStep {
    candidate: Matrix,
    record: ConditionRecord,
}

/// One inexact M-step: generate the candidate via the configured strategy,
/// evaluate the step-monotonicity, coincidence, and cone-distance checks
/// against the ray projection, and fall back to the exact projection when a
/// check fails.
#[allow(clippy::too_many_arguments)]
fn inexact_odd_step(
    c: &ConstraintSet,
    cur: &Matrix,
    prev_step: f64,
    k: usize,
    cfg: &SolverConfig,
    gram: Option<&Matrix>,
) -> Result<OddStep> {
    let scale = 1.0 + cur.fro_norm();
    let ctol = 1e-12 * scale;
    let exact = c.project(cur)?;
    let delta = cur.distance(&exact)?;

    // Coincidence short-circuit: the current point already lies in M.
    if delta <= ctol {
        return Ok(OddStep {
            candidate: cur.clone(),
            record: ConditionRecord {
                k,
                step_monotone: true,
                coincidence: true,
                cone_bound: true,
                cone_distance: 0.0,
                fallback: false,
                estimated: false,
            },
        });
    }

    let mut fallback = false;
    let candidate = match cfg.inexact_strategy {
        InexactStrategy::Exact => exact.clone(),
        InexactStrategy::Perturbed => match c {
            ConstraintSet::Affine(aff) => {
                perturbed_candidate(aff, cur, &exact, delta, prev_step, k, cfg, &mut fallback)?
            }
            ConstraintSet::Magnitude(_) => {
                // The magnitude set has no feasible directions to perturb
                // along (its transformed frame pins every coordinate), so
                // the strategy reduces to the exact projection there.
                fallback = true;
                exact.clone()
            }
        },
        InexactStrategy::TruncatedInner => match c {
            ConstraintSet::Affine(aff) => {
                let gram = gram.expect("gram matrix precomputed for affine runs");
                let resid: Vec<f64> = aff
                    .maps()
                    .iter()
                    .zip(aff.rhs())
                    .map(|(a, b)| a.trace_inner(cur).expect("shape checked") - b)
                    .collect();
                let w = cg_solve(gram, &resid, cfg.gamma / 4.0);
                let mut cand = cur.clone();
                for (wi, a) in w.iter().zip(aff.maps()) {
                    cand.axpy(-wi, a)?;
                }
                cand
            }
            ConstraintSet::Magnitude(_) => {
                return Err(Error::InvalidParameter(
                    "truncated-inner strategy requires an affine constraint set".into(),
                ))
            }
        },
    };

    let evaluated = evaluate_odd_candidate(c, cur, candidate, prev_step, k, cfg, ctol)?;
    match evaluated {
        Some(mut step) => {
            step.record.fallback = fallback;
            Ok(step)
        }
        None => {
            // A check failed (or the ray missed): restore exactness.
            let step = evaluate_odd_candidate(c, cur, exact.clone(), prev_step, k, cfg, ctol)?;
            match step {
                Some(mut step) => {
                    step.record.fallback = true;
                    Ok(step)
                }
                None => {
                    // Exact projection direction: the ray meets M at the
                    // projection itself, so measure the conditions there.
                    let zhat = direction_between(cur, &exact, delta);
                    let (d_nm, estimated) = cone_distance(c, &exact, &zhat, cfg.seed, k)?;
                    let slack = cone_check_slack(cur.rows() * cur.cols(), cur.fro_norm(), delta);
                    Ok(OddStep {
                        candidate: exact,
                        record: ConditionRecord {
                            k,
                            step_monotone: delta <= prev_step + ctol,
                            coincidence: true,
                            cone_bound: d_nm <= cfg.gamma + slack,
                            cone_distance: d_nm,
                            fallback: true,
                            estimated,
                        },
                    })
                }
            }
        }
    }
}

fn direction_between(from: &Matrix, to: &Matrix, dist: f64) -> Matrix {
    let mut d = from.clone();
    d.axpy(-1.0, to).expect("same shape");
    d.scale(1.0 / dist)
}

/// Measurement floor for the cone-distance check. The search direction is a
/// normalized difference of nearby iterates, so its tangential component
/// carries cancellation noise of order eps * ||x|| amplified by 1 / step;
/// below that floor the condition is not measurable.
fn cone_check_slack(ambient_dim: usize, cur_norm: f64, step_len: f64) -> f64 {
    1e-12 + 4.0 * ambient_dim as f64 * f64::EPSILON * (1.0 + cur_norm) / step_len
}

/// Check one candidate odd iterate; `None` means a condition failed and the
/// caller should fall back.
fn evaluate_odd_candidate(
    c: &ConstraintSet,
    cur: &Matrix,
    candidate: Matrix,
    prev_step: f64,
    k: usize,
    cfg: &SolverConfig,
    ctol: f64,
) -> Result<Option<OddStep>> {
    let step_len = cur.distance(&candidate)?;
    if step_len <= ctol {
        // Candidate coincides with the current iterate; handled earlier
        // unless the strategy collapsed the step, in which case signal a
        // fallback evaluation.
        return Ok(None);
    }
    let zhat = direction_between(cur, &candidate, step_len);
    let x_star = match ray_projection_onto_m(c, cur, &zhat) {
        Ok(p) => p,
        Err(Error::RayMiss { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let coincident_ray = x_star.distance(cur)? <= ctol;
    if coincident_ray {
        // Condition (b) forces the step back onto the current point.
        return Ok(Some(OddStep {
            candidate: cur.clone(),
            record: ConditionRecord {
                k,
                step_monotone: true,
                coincidence: true,
                cone_bound: true,
                cone_distance: 0.0,
                fallback: false,
                estimated: false,
            },
        }));
    }
    let step_monotone = step_len <= prev_step + ctol;
    let (d_nm, estimated) = cone_distance(c, &x_star, &zhat, cfg.seed, k)?;
    let slack = cone_check_slack(cur.rows() * cur.cols(), cur.fro_norm(), step_len);
    let cone_bound = d_nm <= cfg.gamma + slack;
    if !(step_monotone && cone_bound) {
        return Ok(None);
    }
    Ok(Some(OddStep {
        candidate,
        record: ConditionRecord {
            k,
            step_monotone,
            coincidence: true,
            cone_bound,
            cone_distance: d_nm,
            fallback: false,
            estimated,
        },
    }))
}

/// Tangentially perturbed exact projection for affine sets, resampled until
/// the step-monotonicity and cone-distance checks hold (up to 20 tries,
/// then the exact point).
#[allow(clippy::too_many_arguments)]
fn perturbed_candidate(
    aff: &AffineConstraint,
    cur: &Matrix,
    exact: &Matrix,
    delta: f64,
    prev_step: f64,
    k: usize,
    cfg: &SolverConfig,
    fallback: &mut bool,
) -> Result<Matrix> {
    if cfg.gamma == 0.0 {
        return Ok(exact.clone());
    }
    let mut rng = derived_rng(cfg.seed, 0x706572 ^ (k as u64));
    let eta_cap = delta * cfg.gamma / (1.0 - cfg.gamma * cfg.gamma).sqrt();
    for _ in 0..20 {
        let raw = crate::random::gaussian_matrix(&mut rng, cur.rows(), cur.cols());
        // Remove the normal-space component so the perturbation stays in M.
        let mut tangent = raw.clone();
        for g in aff.normal_space() {
            let coef = g.trace_inner(&tangent)?;
            tangent.axpy(-coef, g)?;
        }
        let t_norm = tangent.fro_norm();
        if t_norm < 1e-12 {
            continue;
        }
        let theta: f64 = 0.2 + 0.7 * rng.gen::<f64>();
        let eta = theta * eta_cap;
        let mut candidate = exact.clone();
        candidate.axpy(eta / t_norm, &tangent)?;
        let step_len = cur.distance(&candidate)?;
        if step_len > prev_step {
            continue;
        }
        let zhat = direction_between(cur, &candidate, step_len);
        let d_nm = aff.normal_space_distance(&zhat)?;
        if d_nm <= cfg.gamma {
            return Ok(candidate);
        }
    }
    *fallback = true;
    Ok(exact.clone())
}

/// Alternating projections with exact rank-set steps and inexact M-steps
/// satisfying the step-monotonicity, coincidence, and cone-distance checks;
/// any violated check falls back to the exact projection for that step.
/// The per-iteration outcomes are recorded in the condition log.
pub fn inexact_alternating_projections(
    spec: &RankSetSpec,
    c: &ConstraintSet,
    x0: &Matrix,
    x1: &Matrix,
    cfg: &SolverConfig,
) -> Result<IterateTrace> {
    cfg.validate()?;
    if !x0.same_shape(x1) {
        return Err(Error::shape(x0.shape(), x1.shape()));
    }
    if x0.shape() != c.ambient() {
        return Err(Error::shape(c.ambient(), x0.shape()));
    }
    let params = trace_params(x0, spec.s, cfg, Some(cfg.inexact_strategy));
    let gram = match (cfg.inexact_strategy, c) {
        (InexactStrategy::TruncatedInner, ConstraintSet::Affine(aff)) => Some(gram_matrix(aff)),
        (InexactStrategy::TruncatedInner, ConstraintSet::Magnitude(_)) => {
            return Err(Error::InvalidParameter(
                "truncated-inner strategy requires an affine constraint set".into(),
            ))
        }
        _ => None,
    };

    let mut builder = TraceBuilder::new(cfg.keep_points);
    builder.push_row(
        0,
        0.0,
        project_rank(x0, spec)?.distance,
        c.residual(x0),
        x0,
    );
    builder.push_row(1, x1.distance(x0)?, f64::NAN, c.residual(x1), x1);

    let mut cur = x1.clone();
    let mut prev_step = x1.distance(x0)?;
    let mut converged = false;
    let mut k = 2;
    while k <= cfg.max_iters {
        let next = if k % 2 == 0 {
            let res = project_rank(&cur, spec)?;
            let step = res.distance;
            builder.patch_dist_s(k - 1, step);
            builder.push_row(k, step, 0.0, c.residual(&res.point), &res.point);
            prev_step = step;
            if step <= cfg.stop_gap {
                converged = true;
                cur = res.point;
                break;
            }
            res.point
        } else {
            let odd = inexact_odd_step(c, &cur, prev_step, k, cfg, gram.as_ref())?;
            let step = cur.distance(&odd.candidate)?;
            builder.condition_log.push(odd.record);
            builder.push_row(k, step, f64::NAN, c.residual(&odd.candidate), &odd.candidate);
            prev_step = step;
            odd.candidate
        };
        if !next.is_finite() {
            return ensure_finite(
                &next,
                k,
                builder,
                Algorithm::InexactAlternatingProjections,
                params,
            )
            .map(|_| unreachable!("non-finite iterate must error"));
        }
        cur = next;
        k += 1;
    }
    if let Some(last) = builder.rows.last().copied() {
        if last.dist_s.is_nan() {
            let d = project_rank(&cur, spec)?.distance;
            builder.patch_dist_s(last.k, d);
        }
    }
    Ok(builder.finish(
        Algorithm::InexactAlternatingProjections,
        params,
        converged,
        cur,
    ))
}

/// Entrywise midpoint; shared by the averaged and product-space loops so
/// their diagonal sequences agree bit for bit.
fn midpoint(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for (o, (x, y)) in out
        .entries_mut()
        .iter_mut()
        .zip(a.entries().iter().zip(b.entries()))
    {
        *o = 0.5 * (x + y);
    }
    out
}

fn averaged_like_loop(
    spec: &RankSetSpec,
    c: &ConstraintSet,
    x0: &Matrix,
    cfg: &SolverConfig,
    algorithm: Algorithm,
) -> Result<IterateTrace> {
    cfg.validate()?;
    if x0.shape() != c.ambient() {
        return Err(Error::shape(c.ambient(), x0.shape()));
    }
    let params = trace_params(x0, spec.s, cfg, None);
    let mut builder = TraceBuilder::new(cfg.keep_points);

    let first = project_rank(x0, spec)?;
    builder.push_row(0, 0.0, first.distance, c.residual(x0), x0);

    let mut cur = x0.clone();
    let mut cur_proj_s = first;
    let mut converged = false;
    for k in 1..=cfg.max_iters {
        // For the product-space view both components of the pair equal the
        // diagonal iterate after the previous D-projection, so one rank
        // projection and one M-projection service both formulations.
        let pm = c.project(&cur)?;
        let d_m = cur.distance(&pm)?;
        let d_s = cur_proj_s.distance;
        let objective = 0.5 * (d_s * d_s + d_m * d_m);
        if let Some(prev) = builder.objective.last() {
            if objective > prev + 1e-12 * (1.0 + prev) {
                builder.objective_monotone = false;
            }
        }
        builder.objective.push(objective);

        let next = midpoint(&cur_proj_s.point, &pm);
        if !next.is_finite() {
            return ensure_finite(&next, k, builder, algorithm, params)
                .map(|_| unreachable!("non-finite iterate must error"));
        }
        let step = next.distance(&cur)?;
        let next_proj_s = project_rank(&next, spec)?;
        builder.push_row(k, step, next_proj_s.distance, c.residual(&next), &next);
        cur = next;
        cur_proj_s = next_proj_s;
        if step <= cfg.stop_gap {
            converged = true;
            break;
        }
    }
    // Objective value at the final iterate.
    let d_m = cur.distance(&c.project(&cur)?)?;
    let d_s = cur_proj_s.distance;
    builder.objective.push(0.5 * (d_s * d_s + d_m * d_m));
    Ok(builder.finish(algorithm, params, converged, cur))
}

/// Steepest descent on half the sum of squared distances to S and M without
/// line search, realized as averaged projections
/// `x <- (P_S(x) + P_M(x)) / 2`. The trace records the objective value per
/// iterate; a non-monotone objective clears the monitored flag instead of
/// failing the run.
pub fn averaged_projections(
    spec: &RankSetSpec,
    c: &ConstraintSet,
    x0: &Matrix,
    cfg: &SolverConfig,
) -> Result<IterateTrace> {
    averaged_like_loop(spec, c, x0, cfg, Algorithm::AveragedProjections)
}

/// Alternating projections between the diagonal D and the box S x M on the
/// doubled space. Projecting a diagonal pair onto the box splits into the
/// two set projections and projecting back onto D averages them, so the
/// diagonal sequence reproduces averaged projections exactly; the trace
/// records that diagonal sequence.
pub fn product_space_ap(
    spec: &RankSetSpec,
    c: &ConstraintSet,
    x0: &Matrix,
    cfg: &SolverConfig,
) -> Result<IterateTrace> {
    averaged_like_loop(spec, c, x0, cfg, Algorithm::ProductSpace)
}

/// The local linear-rate guarantee for inexact alternating projections at
/// angle constant `c_bar` and inexactness `gamma`: the prox-regular form
/// `c sqrt(1 - g^2) + g sqrt(1 - c^2)`, under a square root when the data
/// set lacks prox-regularity. Requires `gamma < sqrt(1 - c_bar^2)`.
pub fn rate_bound(c_bar: f64, gamma: f64, m_prox_regular: bool) -> Result<f64> {
    if !(0.0..1.0).contains(&c_bar) {
        return Err(Error::InvalidParameter(format!(
            "angle constant must lie in [0, 1), got {c_bar}"
        )));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let limit = (1.0 - c_bar * c_bar).sqrt();
    if gamma >= limit {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} violates the rate hypothesis gamma < sqrt(1 - c_bar^2) = {limit}"
        )));
    }
    let rho = linear_rate_expression(c_bar, gamma);
    Ok(if m_prox_regular { rho } else { rho.sqrt() })
}

/// The raw rate expression `c sqrt(1 - g^2) + g sqrt(1 - c^2)` without the
/// hypothesis gate; callers that sweep gamma past the guarantee region can
/// still evaluate the prediction they are comparing against.
pub fn linear_rate_expression(c_bar: f64, gamma: f64) -> f64 {
    c_bar * (1.0 - gamma * gamma).max(0.0).sqrt() + gamma * (1.0 - c_bar * c_bar).max(0.0).sqrt()
}
