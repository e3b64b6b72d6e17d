//! Batch experiment machinery: planted feasible instances, the cross-product
//! experiment runner, the flat-file ledger, and plot-ready data emission.
//! Everything on disk is plain text, keyed by the experiment seeds, and
//! byte-deterministic for a fixed config (timestamps live in a sidecar).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::constraint::{AffineConstraint, ConstraintSet, MagnitudeConstraint};
use crate::diagnostics::{
    angle_constant, angle_constant_sampled, fit_linear_rate, RegularityMethod, RegularityReport,
};
use crate::error::{Error, Result};
use crate::matrix::{fmt_f64, Matrix};
use crate::random::{derived_rng, gaussian_matrix, random_orthogonal, random_orthonormal_columns, seeded_rng, unit_direction};
use crate::rank_set::{project_rank, RankSetSpec};
use crate::solver::{
    alternating_projections, averaged_projections, inexact_alternating_projections,
    linear_rate_expression, product_space_ap, Algorithm, InexactStrategy, IterateTrace,
    RankProjector, SolverConfig,
};
use crate::svd::numeric_rank;
use crate::tol::Tolerances;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Affine { p: usize },
    Magnitude,
}

/// Everything a batch experiment needs: problem dimensions, the constraint
/// family, and the sweeps over algorithms, inexactness budgets, seeds, and
/// starting distances.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub kind: ConstraintKind,
    pub algorithms: Vec<Algorithm>,
    pub gammas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub start_distances: Vec<f64>,
    pub stop_gap: f64,
    pub max_iters: usize,
    pub strategy: InexactStrategy,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    /// Monte-Carlo budget for the sampled angle on magnitude instances.
    pub angle_samples: usize,
}

/// Oversampling heuristic for the measurement count when the config leaves
/// it out: one and a half times the parameter count of rank-s matrices.
pub fn default_measurement_count(m: usize, n: usize, s: usize) -> usize {
    ((3 * s * (m + n - s)) as f64 / 2.0).ceil() as usize
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s > self.m.min(self.n) {
            return Err(Error::InvalidParameter(format!(
                "s = {} exceeds min(m, n) = {}",
                self.s,
                self.m.min(self.n)
            )));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidParameter("algorithm list is empty".into()));
        }
        if self.gammas.is_empty() || self.seeds.is_empty() || self.start_distances.is_empty() {
            return Err(Error::InvalidParameter(
                "gamma, seed, and start-distance sweeps must be nonempty".into(),
            ));
        }
        if let ConstraintKind::Affine { p } = self.kind {
            if p == 0 {
                return Err(Error::InvalidParameter("affine kind needs p >= 1".into()));
            }
        }
        if !(self.stop_gap > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidParameter("bad stopping parameters".into()));
        }
        for g in &self.gammas {
            if !(0.0..1.0).contains(g) {
                return Err(Error::InvalidParameter(format!("gamma {g} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Canonical key-value snapshot; `parse` reads the same shape back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "m {}", self.m);
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "s {}", self.s);
        match self.kind {
            ConstraintKind::Affine { p } => {
                let _ = writeln!(s, "constraint affine");
                let _ = writeln!(s, "p {p}");
            }
            ConstraintKind::Magnitude => {
                let _ = writeln!(s, "constraint magnitude");
            }
        }
        let _ = writeln!(
            s,
            "algorithms {}",
            self.algorithms.iter().map(|a| a.name()).collect::<Vec<_>>().join(" ")
        );
        let _ = writeln!(
            s,
            "gammas {}",
            self.gammas.iter().map(|g| fmt_f64(*g)).collect::<Vec<_>>().join(" ")
        );
        let _ = writeln!(
            s,
            "seeds {}",
            self.seeds.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        );
        let _ = writeln!(
            s,
            "start_distances {}",
            self.start_distances
                .iter()
                .map(|d| fmt_f64(*d))
                .collect::<Vec<_>>()
                .join(" ")
        );
        let _ = writeln!(s, "stop_gap {}", fmt_f64(self.stop_gap));
        let _ = writeln!(s, "max_iters {}", self.max_iters);
        let _ = writeln!(s, "strategy {}", self.strategy.name());
        let _ = writeln!(s, "rank_tol {}", fmt_f64(self.tolerances.rank_tol));
        let _ = writeln!(s, "tie_tol {}", fmt_f64(self.tolerances.tie_tol));
        let _ = writeln!(s, "subspace_tol {}", fmt_f64(self.tolerances.subspace_tol));
        let _ = writeln!(s, "angle_samples {}", self.angle_samples);
        let _ = writeln!(s, "out {}", self.out_dir.display());
        s
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut m = None;
        let mut n = None;
        let mut s_bound = None;
        let mut kind_name: Option<String> = None;
        let mut p: Option<usize> = None;
        let mut algorithms = Vec::new();
        let mut gammas = Vec::new();
        let mut seeds = Vec::new();
        let mut start_distances = Vec::new();
        let mut stop_gap = 1e-10;
        let mut max_iters = 10_000;
        let mut strategy = InexactStrategy::Exact;
        let mut tolerances = Tolerances::default();
        let mut out_dir = PathBuf::from("experiment-out");
        let mut angle_samples = 2000usize;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let perr = |msg: String| Error::Parse {
                line: lineno + 1,
                message: msg,
            };
            match key {
                "m" => m = Some(rest.parse().map_err(|_| perr(format!("bad m '{rest}'")))?),
                "n" => n = Some(rest.parse().map_err(|_| perr(format!("bad n '{rest}'")))?),
                "s" => s_bound = Some(rest.parse().map_err(|_| perr(format!("bad s '{rest}'")))?),
                "constraint" => kind_name = Some(rest.to_string()),
                "p" => p = Some(rest.parse().map_err(|_| perr(format!("bad p '{rest}'")))?),
                "algorithms" => {
                    algorithms = rest
                        .split_whitespace()
                        .map(Algorithm::from_name)
                        .collect::<Result<_>>()?;
                }
                "gammas" => {
                    gammas = rest
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| perr(format!("bad gamma '{t}'"))))
                        .collect::<Result<_>>()?;
                }
                "seeds" => {
                    seeds = rest
                        .split_whitespace()
                        .map(|t| t.parse::<u64>().map_err(|_| perr(format!("bad seed '{t}'"))))
                        .collect::<Result<_>>()?;
                }
                "start_distances" => {
                    start_distances = rest
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| perr(format!("bad distance '{t}'"))))
                        .collect::<Result<_>>()?;
                }
                "stop_gap" => {
                    stop_gap = rest.parse().map_err(|_| perr(format!("bad stop_gap '{rest}'")))?
                }
                "max_iters" => {
                    max_iters = rest.parse().map_err(|_| perr(format!("bad max_iters '{rest}'")))?
                }
                "strategy" => strategy = InexactStrategy::from_name(rest)?,
                "rank_tol" => {
                    tolerances.rank_tol =
                        rest.parse().map_err(|_| perr(format!("bad rank_tol '{rest}'")))?
                }
                "tie_tol" => {
                    tolerances.tie_tol =
                        rest.parse().map_err(|_| perr(format!("bad tie_tol '{rest}'")))?
                }
                "subspace_tol" => {
                    tolerances.subspace_tol =
                        rest.parse().map_err(|_| perr(format!("bad subspace_tol '{rest}'")))?
                }
                "angle_samples" => {
                    angle_samples =
                        rest.parse().map_err(|_| perr(format!("bad angle_samples '{rest}'")))?
                }
                "out" => out_dir = PathBuf::from(rest),
                other => return Err(perr(format!("unknown config key '{other}'"))),
            }
        }

        let m = m.ok_or_else(|| Error::InvalidParameter("config lacks m".into()))?;
        let n = n.ok_or_else(|| Error::InvalidParameter("config lacks n".into()))?;
        let s_bound = s_bound.ok_or_else(|| Error::InvalidParameter("config lacks s".into()))?;
        let kind = match kind_name.as_deref() {
            Some("affine") | None => ConstraintKind::Affine {
                p: p.unwrap_or_else(|| default_measurement_count(m, n, s_bound)),
            },
            Some("magnitude") => ConstraintKind::Magnitude,
            Some(other) => {
                return Err(Error::InvalidParameter(format!(
                    "unknown constraint kind '{other}'"
                )))
            }
        };
        if gammas.is_empty() {
            gammas.push(0.0);
        }
        if start_distances.is_empty() {
            start_distances.extend([0.01, 0.05, 0.1, 0.2]);
        }
        let cfg = ExperimentConfig {
            m,
            n,
            s: s_bound,
            kind,
            algorithms,
            gammas,
            seeds,
            start_distances,
            stop_gap,
            max_iters,
            strategy,
            tolerances,
            out_dir,
            angle_samples,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Plant a point of exact rank s and wrap a constraint set through it, so
/// the intersection is nonempty by construction. Identical seeds give
/// bit-identical instances.
pub fn generate_instance(cfg: &ExperimentConfig, seed: u64) -> Result<(Matrix, ConstraintSet)> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    let (m, n, s) = (cfg.m, cfg.n, cfg.s);
    let x_star = if s == 0 {
        Matrix::zeros(m, n)
    } else {
        let mut sigma: Vec<f64> = (0..s).map(|_| 1.0 + rng.gen::<f64>()).collect();
        sigma.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        let u = random_orthonormal_columns(&mut rng, m, s);
        let v = random_orthonormal_columns(&mut rng, n, s);
        let mut x = Matrix::zeros(m, n);
        for (j, &sj) in sigma.iter().enumerate() {
            let uj = u.column(j);
            let vj = v.column(j);
            for i in 0..m {
                let c = sj * uj[i];
                for k in 0..n {
                    x[(i, k)] += c * vj[k];
                }
            }
        }
        x
    };
    let constraint = match cfg.kind {
        ConstraintKind::Affine { p } => {
            let maps: Vec<Matrix> = (0..p).map(|_| gaussian_matrix(&mut rng, m, n)).collect();
            let rhs: Vec<f64> = maps
                .iter()
                .map(|a| a.trace_inner(&x_star).expect("same shape"))
                .collect();
            ConstraintSet::Affine(AffineConstraint::new(maps, rhs)?)
        }
        ConstraintKind::Magnitude => {
            let dim = m * n;
            let q = random_orthogonal(&mut rng, dim);
            let moduli: Vec<f64> = q.matvec(&x_star.vectorize()).iter().map(|v| v.abs()).collect();
            ConstraintSet::Magnitude(MagnitudeConstraint::new(m, n, q, moduli)?)
        }
    };
    Ok((x_star, constraint))
}

/// Instance-level ledger entry.
#[derive(Clone, Debug)]
pub struct InstanceRecord {
    pub requested_seed: u64,
    /// Seed the instance was actually built from after regularity reseeds.
    pub seed: u64,
    pub reseeds: u32,
    pub rank: usize,
    pub residual: f64,
    pub c_bar: f64,
    pub strongly_regular: bool,
    pub method: RegularityMethod,
}

/// Run-level ledger entry.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub seed: u64,
    pub start_distance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_dist_s: f64,
    pub final_residual_m: f64,
    pub c_bar: f64,
    pub predicted_rate: f64,
    pub hypothesis_ok: bool,
    pub empirical_rate: Option<f64>,
    pub compliant: bool,
    pub note: String,
    pub trace_path: String,
    pub csv_path: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentLedger {
    pub config_text: String,
    pub instances: Vec<InstanceRecord>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentLedger {
    pub fn to_text(&self) -> String {
        let mut s = String::from("ledger v1\nconfig-begin\n");
        s.push_str(&self.config_text);
        s.push_str("config-end\n");
        for i in &self.instances {
            let _ = writeln!(
                s,
                "instance requested={} seed={} reseeds={} rank={} residual={} c_bar={} strongly_regular={} method={}",
                i.requested_seed,
                i.seed,
                i.reseeds,
                i.rank,
                fmt_f64(i.residual),
                fmt_f64(i.c_bar),
                i.strongly_regular,
                i.method.name()
            );
        }
        for r in &self.runs {
            let _ = writeln!(
                s,
                "run id={} algorithm={} gamma={} seed={} delta={} converged={} iterations={} final_dist_S={} final_residual_M={} c_bar={} predicted={} hypothesis_ok={} empirical={} compliant={} note={} trace={} csv={}",
                r.run_id,
                r.algorithm.name(),
                fmt_f64(r.gamma),
                r.seed,
                fmt_f64(r.start_distance),
                r.converged,
                r.iterations,
                fmt_f64(r.final_dist_s),
                fmt_f64(r.final_residual_m),
                fmt_f64(r.c_bar),
                fmt_f64(r.predicted_rate),
                r.hypothesis_ok,
                r.empirical_rate.map(fmt_f64).unwrap_or_else(|| "-".into()),
                r.compliant,
                r.note,
                r.trace_path,
                r.csv_path
            );
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<ExperimentLedger> {
        let mut config_text = String::new();
        let mut instances = Vec::new();
        let mut runs = Vec::new();
        let mut in_config = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            let perr = |msg: String| Error::Parse {
                line: lineno + 1,
                message: msg,
            };
            match line {
                "ledger v1" | "end" | "" => continue,
                "config-begin" => {
                    in_config = true;
                    continue;
                }
                "config-end" => {
                    in_config = false;
                    continue;
                }
                _ => {}
            }
            if in_config {
                config_text.push_str(line);
                config_text.push('\n');
                continue;
            }
            let fields = parse_kv_line(line);
            if line.starts_with("instance ") {
                instances.push(InstanceRecord {
                    requested_seed: kv(&fields, "requested").and_then(|v| v.parse().ok()).ok_or_else(|| perr("bad requested seed".into()))?,
                    seed: kv(&fields, "seed").and_then(|v| v.parse().ok()).ok_or_else(|| perr("bad seed".into()))?,
                    reseeds: kv(&fields, "reseeds").and_then(|v| v.parse().ok()).unwrap_or(0),
                    rank: kv(&fields, "rank").and_then(|v| v.parse().ok()).unwrap_or(0),
                    residual: kv(&fields, "residual").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
                    c_bar: kv(&fields, "c_bar").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
                    strongly_regular: kv(&fields, "strongly_regular").map(|v| v == "true").unwrap_or(false),
                    method: match kv(&fields, "method") {
                        Some("sampled") => RegularityMethod::Sampled,
                        _ => RegularityMethod::SubspaceExact,
                    },
                });
            } else if line.starts_with("run ") {
                runs.push(RunRecord {
                    run_id: kv(&fields, "id").unwrap_or_default().to_string(),
                    algorithm: Algorithm::from_name(kv(&fields, "algorithm").unwrap_or("ap"))?,
                    gamma: kv(&fields, "gamma").and_then(|v| v.parse().ok()).unwrap_or(0.0),
                    seed: kv(&fields, "seed").and_then(|v| v.parse().ok()).unwrap_or(0),
                    start_distance: kv(&fields, "delta").and_then(|v| v.parse().ok()).unwrap_or(0.0),
                    converged: kv(&fields, "converged").map(|v| v == "true").unwrap_or(false),
                    iterations: kv(&fields, "iterations").and_then(|v| v.parse().ok()).unwrap_or(0),
                    final_dist_s: kv(&fields, "final_dist_S").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
                    final_residual_m: kv(&fields, "final_residual_M").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
                    c_bar: kv(&fields, "c_bar").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
                    predicted_rate: kv(&fields, "predicted").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
                    hypothesis_ok: kv(&fields, "hypothesis_ok").map(|v| v == "true").unwrap_or(false),
                    empirical_rate: match kv(&fields, "empirical") {
                        Some("-") | None => None,
                        Some(v) => v.parse().ok(),
                    },
                    compliant: kv(&fields, "compliant").map(|v| v == "true").unwrap_or(false),
                    note: kv(&fields, "note").unwrap_or("ok").to_string(),
                    trace_path: kv(&fields, "trace").unwrap_or_default().to_string(),
                    csv_path: kv(&fields, "csv").unwrap_or_default().to_string(),
                });
            } else {
                return Err(perr(format!("unrecognized ledger line '{line}'")));
            }
        }
        Ok(ExperimentLedger {
            config_text,
            instances,
            runs,
        })
    }
}

fn parse_kv_line(line: &str) -> Vec<(&str, &str)> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .collect()
}

fn kv<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Option<&'a str> {
    fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

/// Files one planted instance is stored in.
pub struct InstanceFiles {
    pub dir: PathBuf,
}

impl InstanceFiles {
    pub fn write(dir: &Path, cfg: &ExperimentConfig, seed: u64, x_star: &Matrix, c: &ConstraintSet) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("x_star.mat"), x_star.to_text())?;
        fs::write(dir.join("constraint.txt"), c.to_text())?;
        let mut meta = String::new();
        let _ = writeln!(meta, "kind {}", c.kind());
        let _ = writeln!(meta, "m {}", cfg.m);
        let _ = writeln!(meta, "n {}", cfg.n);
        let _ = writeln!(meta, "s {}", cfg.s);
        let _ = writeln!(meta, "seed {seed}");
        fs::write(dir.join("instance.txt"), meta)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<(Matrix, ConstraintSet, InstanceMeta)> {
        let x_star = Matrix::from_text(&fs::read_to_string(dir.join("x_star.mat"))?)?;
        let constraint = ConstraintSet::from_text(&fs::read_to_string(dir.join("constraint.txt"))?)?;
        let meta_text = fs::read_to_string(dir.join("instance.txt"))?;
        let mut meta = InstanceMeta {
            s: 0,
            seed: 0,
        };
        for line in meta_text.lines() {
            if let Some((k, v)) = line.split_once(' ') {
                match k {
                    "s" => meta.s = v.trim().parse().unwrap_or(0),
                    "seed" => meta.seed = v.trim().parse().unwrap_or(0),
                    _ => {}
                }
            }
        }
        Ok((x_star, constraint, meta))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct InstanceMeta {
    pub s: usize,
    pub seed: u64,
}

/// Deterministic perturbed start for one (seed, start-distance) cell: the
/// planted point moved by a seeded unit direction and projected back onto S.
pub fn starting_point(
    x_star: &Matrix,
    spec: &RankSetSpec,
    seed: u64,
    delta_index: usize,
    delta: f64,
) -> Result<Matrix> {
    let mut rng = derived_rng(seed, 0x7374 + delta_index as u64);
    let e = unit_direction(&mut rng, x_star.rows(), x_star.cols());
    let mut start = x_star.clone();
    start.axpy(delta, &e)?;
    Ok(project_rank(&start, spec)?.point)
}

/// Run one algorithm cell and return its trace.
pub fn run_single(
    algorithm: Algorithm,
    spec: &RankSetSpec,
    c: &ConstraintSet,
    x0: &Matrix,
    cfg: &SolverConfig,
) -> Result<IterateTrace> {
    match algorithm {
        Algorithm::AlternatingProjections => {
            let x1 = c.project(x0)?;
            alternating_projections(&RankProjector(*spec), c, x0, &x1, cfg)
        }
        Algorithm::InexactAlternatingProjections => {
            let x1 = c.project(x0)?;
            inexact_alternating_projections(spec, c, x0, &x1, cfg)
        }
        Algorithm::AveragedProjections => averaged_projections(spec, c, x0, cfg),
        Algorithm::ProductSpace => product_space_ap(spec, c, x0, cfg),
    }
}

fn regularity_for_instance(
    cfg: &ExperimentConfig,
    spec: &RankSetSpec,
    x_star: &Matrix,
    c: &ConstraintSet,
    seed: u64,
) -> Result<RegularityReport> {
    match c {
        ConstraintSet::Affine(aff) => angle_constant(x_star, spec, aff),
        ConstraintSet::Magnitude(mag) => {
            angle_constant_sampled(x_star, spec, mag, cfg.angle_samples, seed)
        }
    }
}

/// Execute the full cross product of (algorithm x gamma x seed x start
/// distance). Affine instances whose planted intersection fails the strong
/// regularity check are reseeded deterministically (bounded attempts, the
/// count is recorded). The ledger is written atomically; wall-clock data
/// goes to a `.meta` sidecar so reruns with identical seeds are
/// byte-identical.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentLedger> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    fs::create_dir_all(out.join("traces"))?;
    fs::create_dir_all(out.join("instances"))?;
    let started = std::time::SystemTime::now();

    let spec = RankSetSpec::with_tolerances(cfg.s, &cfg.tolerances);
    let mut ledger = ExperimentLedger {
        config_text: cfg.to_text(),
        instances: Vec::new(),
        runs: Vec::new(),
    };

    for &requested_seed in &cfg.seeds {
        // Regularity-gated instance generation (affine only: the sampled
        // magnitude estimate is a lower bound and cannot certify failure).
        let mut seed = requested_seed;
        let mut reseeds = 0u32;
        let (x_star, constraint, report) = loop {
            let (x_star, constraint) = generate_instance(cfg, seed)?;
            let report = regularity_for_instance(cfg, &spec, &x_star, &constraint, seed)?;
            let gate_failed = matches!(constraint, ConstraintSet::Affine(_))
                && !report.strongly_regular
                && cfg.s > 0;
            if !gate_failed || reseeds >= 20 {
                break (x_star, constraint, report);
            }
            reseeds += 1;
            seed = requested_seed.wrapping_add((reseeds as u64) << 33);
        };

        let inst_dir = out.join("instances").join(format!("seed{requested_seed}"));
        InstanceFiles::write(&inst_dir, cfg, seed, &x_star, &constraint)?;
        ledger.instances.push(InstanceRecord {
            requested_seed,
            seed,
            reseeds,
            rank: numeric_rank(&x_star, cfg.tolerances.rank_tol)?,
            residual: constraint.residual(&x_star),
            c_bar: report.c_bar,
            strongly_regular: report.strongly_regular,
            method: report.method,
        });

        for &algorithm in &cfg.algorithms {
            for &gamma in &cfg.gammas {
                for (delta_index, &delta) in cfg.start_distances.iter().enumerate() {
                    let run_id = format!(
                        "{}-g{}-seed{}-d{}",
                        algorithm.name(),
                        fmt_f64(gamma),
                        requested_seed,
                        fmt_f64(delta)
                    );
                    let solver_cfg = SolverConfig {
                        gamma,
                        max_iters: cfg.max_iters,
                        stop_gap: cfg.stop_gap,
                        seed,
                        inexact_strategy: cfg.strategy,
                        keep_points: false,
                    };
                    let x0 = starting_point(&x_star, &spec, seed, delta_index, delta)?;
                    let mut trace = run_single(algorithm, &spec, &constraint, &x0, &solver_cfg)?;
                    trace.run_id = run_id.clone();

                    let gamma_effective = match algorithm {
                        Algorithm::InexactAlternatingProjections => gamma,
                        _ => 0.0,
                    };
                    let predicted = linear_rate_expression(report.c_bar, gamma_effective);
                    let hypothesis_ok = report.c_bar < 1.0
                        && gamma_effective < (1.0 - report.c_bar * report.c_bar).sqrt();
                    let (empirical, compliant, note) =
                        match fit_linear_rate(&trace, None, predicted) {
                            Ok(fit) => (
                                Some(fit.empirical_rate),
                                fit.compliant,
                                if fit.insufficient_decay {
                                    "insufficient-decay".to_string()
                                } else if fit.truncated_window {
                                    "truncated-window".to_string()
                                } else {
                                    "ok".to_string()
                                },
                            ),
                            Err(Error::InsufficientData(_)) => {
                                (None, trace.converged, "insufficient-data".to_string())
                            }
                            Err(e) => return Err(e),
                        };

                    let trace_rel = format!("traces/{run_id}.trace");
                    let csv_rel = format!("traces/{run_id}.csv");
                    fs::write(out.join(&trace_rel), trace.to_text())?;
                    fs::write(out.join(&csv_rel), trace.to_csv())?;

                    let final_dist_s = project_rank(&trace.final_point, &spec)?.distance;
                    ledger.runs.push(RunRecord {
                        run_id,
                        algorithm,
                        gamma,
                        seed: requested_seed,
                        start_distance: delta,
                        converged: trace.converged,
                        iterations: trace.iterations(),
                        final_dist_s,
                        final_residual_m: constraint.residual(&trace.final_point),
                        c_bar: report.c_bar,
                        predicted_rate: predicted,
                        hypothesis_ok,
                        empirical_rate: empirical,
                        compliant,
                        note,
                        trace_path: trace_rel,
                        csv_path: csv_rel,
                    });
                }
            }
        }
    }

    // Atomic ledger write, wall-clock in the sidecar only.
    let ledger_tmp = out.join("ledger.txt.tmp");
    fs::write(&ledger_tmp, ledger.to_text())?;
    fs::rename(&ledger_tmp, out.join("ledger.txt"))?;
    let elapsed = started.elapsed().unwrap_or_default();
    fs::write(
        out.join("ledger.meta"),
        format!(
            "wall_clock_seconds {}\nfinished_unix {}\n",
            elapsed.as_secs_f64(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        ),
    )?;
    Ok(ledger)
}

/// Emit plot-ready CSVs next to the ledger: per run `(k, log step norm)`
/// and one summary table `(gamma, c_bar, predicted_rate, empirical_rate)`
/// with rows in ledger order.
pub fn emit_plot_data(ledger: &ExperimentLedger, ledger_dir: &Path) -> Result<Vec<PathBuf>> {
    if ledger.runs.is_empty() {
        return Err(Error::InvalidParameter("ledger holds no runs".into()));
    }
    let plots = ledger_dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();

    let mut summary = String::from("gamma,c_bar,predicted_rate,empirical_rate\n");
    for run in &ledger.runs {
        let trace_path = ledger_dir.join(&run.trace_path);
        let text = fs::read_to_string(&trace_path).map_err(|_| Error::MissingTrace {
            run_id: run.run_id.clone(),
        })?;
        let trace = IterateTrace::from_text(&text)?;
        let mut csv = String::from("k,log_step_norm\n");
        for row in trace.rows.iter().skip(1) {
            if row.step_norm > 0.0 {
                let _ = writeln!(csv, "{},{}", row.k, fmt_f64(row.step_norm.ln()));
            }
        }
        let path = plots.join(format!("{}_trace.csv", run.run_id));
        fs::write(&path, csv)?;
        written.push(path);

        let _ = writeln!(
            summary,
            "{},{},{},{}",
            fmt_f64(run.gamma),
            fmt_f64(run.c_bar),
            fmt_f64(run.predicted_rate),
            run.empirical_rate.map(fmt_f64).unwrap_or_else(|| "nan".into())
        );
    }
    let summary_path = plots.join("summary.csv");
    fs::write(&summary_path, summary)?;
    written.push(summary_path);
    Ok(written)
}
