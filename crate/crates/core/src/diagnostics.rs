//! Regularity and rate analytics: the angle constant between the normal
//! spaces of the two sets at an intersection point, the row-space probe for
//! strong regularity, and a least-squares fit of the empirical linear rate
//! from an iterate trace.

use crate::constraint::{AffineConstraint, MagnitudeConstraint};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ortho::max_principal_cosine;
use crate::rank_set::{normal_subspace_basis, RankSetSpec};
use crate::solver::IterateTrace;
use crate::svd::{numeric_rank, row_space_basis, singular_values};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularityMethod {
    /// Exact principal angles between the two normal subspaces.
    SubspaceExact,
    /// Monte-Carlo maximum over sampled normal pairs; a lower bound.
    Sampled,
}

impl RegularityMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RegularityMethod::SubspaceExact => "subspace-exact",
            RegularityMethod::Sampled => "sampled",
        }
    }
}

/// Angle data at an intersection point: `c_bar` is the cosine of the minimal
/// principal angle between the normal spaces, and the intersection is
/// strongly regular when it stays below 1.
#[derive(Clone, Copy, Debug)]
pub struct RegularityReport {
    pub c_bar: f64,
    pub angle_rad: f64,
    pub strongly_regular: bool,
    pub method: RegularityMethod,
    /// The rank-set normal subspace was trivial (s = min(m, n)).
    pub degenerate_cone: bool,
}

impl RegularityReport {
    fn from_c_bar(c_bar: f64, method: RegularityMethod, degenerate_cone: bool) -> Self {
        let c = c_bar.clamp(0.0, 1.0);
        RegularityReport {
            c_bar: c,
            angle_rad: c.acos(),
            strongly_regular: c < 1.0 - 1e-8,
            method,
            degenerate_cone,
        }
    }
}

fn require_on_rank_set(base: &Matrix, spec: &RankSetSpec) -> Result<()> {
    let rank = numeric_rank(base, spec.rank_tol)?;
    if rank != spec.s {
        return Err(Error::Precondition(format!(
            "base point has rank {rank}, need exactly s = {}",
            spec.s
        )));
    }
    Ok(())
}

/// Exact angle constant against an affine set: the largest singular value of
/// the cross-Gram matrix between the rank-set normal basis and the cached
/// orthonormal basis of span{A_i}. Signs do not matter for subspaces, so the
/// reflection of the second cone drops out.
pub fn angle_constant(
    base: &Matrix,
    spec: &RankSetSpec,
    c: &AffineConstraint,
) -> Result<RegularityReport> {
    require_on_rank_set(base, spec)?;
    let b_norm: f64 = c.rhs().iter().map(|v| v * v).sum::<f64>().sqrt();
    if c.residual(base) > 1e-8 * (1.0 + b_norm) {
        return Err(Error::Precondition(format!(
            "base point infeasible for the affine set (residual {:.3e})",
            c.residual(base)
        )));
    }
    let basis_s = normal_subspace_basis(base, spec)?;
    if basis_s.is_empty() {
        return Ok(RegularityReport::from_c_bar(
            0.0,
            RegularityMethod::SubspaceExact,
            true,
        ));
    }
    let basis_m = c.normal_space();
    let cross = Matrix::from_fn(basis_s.len(), basis_m.len(), |i, j| {
        basis_s[i].trace_inner(&basis_m[j]).expect("same ambient")
    });
    let top = singular_values(&cross)?
        .first()
        .copied()
        .unwrap_or(0.0);
    Ok(RegularityReport::from_c_bar(
        top,
        RegularityMethod::SubspaceExact,
        false,
    ))
}

/// Sampled angle estimate against the magnitude set: the maximum inner
/// product over seeded pairs of a random unit element of the rank-set
/// normal subspace and a normalized sampled proximal normal of M. Only a
/// lower bound on the true constant, as the report's method records.
pub fn angle_constant_sampled(
    base: &Matrix,
    spec: &RankSetSpec,
    c: &MagnitudeConstraint,
    n_samples: usize,
    seed: u64,
) -> Result<RegularityReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    require_on_rank_set(base, spec)?;
    let scale = c.moduli().iter().fold(1.0f64, |a, &b| a.max(b));
    if c.residual(base) > 1e-8 * scale {
        return Err(Error::Precondition(format!(
            "base point infeasible for the magnitude set (residual {:.3e})",
            c.residual(base)
        )));
    }
    let basis_s = normal_subspace_basis(base, spec)?;
    if basis_s.is_empty() {
        return Ok(RegularityReport::from_c_bar(0.0, RegularityMethod::Sampled, true));
    }
    // Each seeded sample starts from a certified proximal normal of M and
    // is ascended by alternating maximization: best unit element of the
    // rank-set normal span for the current v, then the nearest cone
    // direction of M for that u. Both stay in their sets, so the running
    // maximum over samples remains a lower bound on the true constant, and
    // it stabilizes far faster than raw pair sampling.
    let q = c.transform();
    let y_base = q.matvec(&base.vectorize());
    let free: Vec<bool> = c.moduli().iter().map(|&cj| cj <= 1e-12).collect();
    let span_project = |v: &Matrix| -> Result<Matrix> {
        let mut p = Matrix::zeros(base.rows(), base.cols());
        for b in &basis_s {
            p.axpy(b.trace_inner(v)?, b)?;
        }
        Ok(p)
    };
    let mut best: f64 = 0.0;
    for i in 0..n_samples {
        let mut v = c.sample_normal(base, seed ^ (0x5eed << 16) ^ i as u64)?;
        let v_norm = v.fro_norm();
        if v_norm < 1e-14 {
            continue;
        }
        v = v.scale(1.0 / v_norm);
        let mut cos = 0.0;
        for _ in 0..24 {
            let pu = span_project(&v)?;
            let nu = pu.fro_norm();
            if nu < 1e-14 {
                break;
            }
            let u = pu.scale(1.0 / nu);
            // Nearest cone direction: clip the transformed coordinates that
            // would flip the sign of a pinned modulus.
            let mut w = q.matvec(&u.vectorize());
            for (j, wj) in w.iter_mut().enumerate() {
                if !free[j] && *wj * y_base[j] < 0.0 {
                    *wj = 0.0;
                }
            }
            let wn: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if wn < 1e-14 {
                break;
            }
            for wj in w.iter_mut() {
                *wj /= wn;
            }
            v = Matrix::from_vectorized(base.rows(), base.cols(), q.matvec_transpose(&w))?;
            let next = u.trace_inner(&v)?;
            if next - cos < 1e-12 {
                cos = next.max(cos);
                break;
            }
            cos = next;
        }
        best = best.max(cos);
    }
    Ok(RegularityReport::from_c_bar(best, RegularityMethod::Sampled, false))
}

/// Sufficient condition for strong regularity of the intersection with S:
/// every supplied nonzero normal of the data set must have a row space that
/// meets the row space of the base point nontrivially.
pub fn strong_regularity_probe(
    base: &Matrix,
    spec: &RankSetSpec,
    normals_m: &[Matrix],
    subspace_tol: f64,
) -> Result<bool> {
    if normals_m.is_empty() {
        return Err(Error::InvalidParameter("no normals supplied to probe".into()));
    }
    let rank = numeric_rank(base, spec.rank_tol)?;
    if rank > spec.s {
        return Err(Error::Precondition(format!(
            "base point has rank {rank} > s = {}",
            spec.s
        )));
    }
    let rows_base = row_space_basis(base, spec.rank_tol)?;
    for v in normals_m {
        if !v.same_shape(base) {
            return Err(Error::shape(base.shape(), v.shape()));
        }
        if v.fro_norm() < 1e-14 {
            continue;
        }
        let rows_v = row_space_basis(v, spec.rank_tol)?;
        let cos = max_principal_cosine(&rows_v, &rows_base)?;
        if cos < 1.0 - subspace_tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fitted R-linear rate of a run against the prediction it is compared to.
#[derive(Clone, Copy, Debug)]
pub struct RateReport {
    pub empirical_rate: f64,
    pub predicted_rate: f64,
    /// Iterate indices (first, last) of the fitted tail window.
    pub fit_window: (usize, usize),
    /// Root-mean-square residual of the log-linear fit.
    pub fit_residual: f64,
    pub compliant: bool,
    /// Zeros inside the window forced it to shrink.
    pub truncated_window: bool,
    /// The fitted slope was nonnegative; no decay to speak of.
    pub insufficient_decay: bool,
}

/// Least-squares slope of log(error) over the tail of a run (the last 60%
/// of iterations, at least 5 points). The error sequence is the distance to
/// `target` when given (requires a trace that retained its iterates) and
/// the step norms otherwise. `predicted_rate` seeds the compliance check
/// `empirical <= predicted + 0.05`.
pub fn fit_linear_rate(
    trace: &IterateTrace,
    target: Option<&Matrix>,
    predicted_rate: f64,
) -> Result<RateReport> {
    if trace.rows.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 10 iterations, trace has {}",
            trace.rows.len()
        )));
    }
    let mut series: Vec<(usize, f64)> = match target {
        Some(t) => {
            let points = trace.points.as_ref().ok_or_else(|| {
                Error::InsufficientData(
                    "trace did not retain iterates; rerun with keep_points to fit against a target"
                        .into(),
                )
            })?;
            points
                .iter()
                .enumerate()
                .map(|(k, p)| Ok((k, p.distance(t)?)))
                .collect::<Result<_>>()?
        }
        None => trace
            .rows
            .iter()
            .skip(1)
            .map(|r| (r.k, r.step_norm))
            .collect(),
    };

    let mut truncated = false;
    while series.last().map(|(_, e)| *e <= 0.0).unwrap_or(false) {
        series.pop();
        truncated = true;
    }
    if let Some(last_zero) = series.iter().rposition(|(_, e)| *e <= 0.0) {
        series.drain(..=last_zero);
        truncated = true;
    }
    let total = series.len();
    if total < 5 {
        return Err(Error::InsufficientData(format!(
            "only {total} positive residuals available for the fit"
        )));
    }
    let n_tail = ((0.6 * total as f64).ceil() as usize).clamp(5, total);
    let window = &series[total - n_tail..];

    let n = window.len() as f64;
    let mean_k = window.iter().map(|(k, _)| *k as f64).sum::<f64>() / n;
    let mean_log = window.iter().map(|(_, e)| e.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (k, e) in window {
        let dx = *k as f64 - mean_k;
        sxx += dx * dx;
        sxy += dx * (e.ln() - mean_log);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate fit window".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_log - slope * mean_k;
    let rms = (window
        .iter()
        .map(|(k, e)| {
            let p = intercept + slope * *k as f64;
            (e.ln() - p) * (e.ln() - p)
        })
        .sum::<f64>()
        / n)
        .sqrt();

    let empirical_rate = slope.exp();
    let insufficient_decay = slope >= 0.0;
    let compliant = !insufficient_decay && empirical_rate <= predicted_rate + 0.05;
    Ok(RateReport {
        empirical_rate,
        predicted_rate,
        fit_window: (window.first().unwrap().0, window.last().unwrap().0),
        fit_residual: rms,
        compliant,
        truncated_window: truncated,
        insufficient_decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, random_orthogonal, seeded_rng, standard_normal};
    use crate::solver::{Algorithm, IterationRow, TraceParams};

    fn e(i: usize, j: usize, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        m[(i, j)] = 1.0;
        m
    }

    fn synthetic_trace(errors: &[f64]) -> IterateTrace {
        IterateTrace {
            run_id: String::new(),
            algorithm: Algorithm::AlternatingProjections,
            params: TraceParams {
                m: 1,
                n: 1,
                s: 0,
                gamma: 0.0,
                seed: 0,
                stop_gap: 1e-10,
                max_iters: 100,
                rank_tol: 1e-9,
                tie_tol: 1e-8,
                strategy: None,
            },
            rows: std::iter::once(IterationRow {
                k: 0,
                step_norm: 0.0,
                dist_s: 0.0,
                residual_m: 0.0,
            })
            .chain(errors.iter().enumerate().map(|(i, &e)| IterationRow {
                k: i + 1,
                step_norm: e,
                dist_s: 0.0,
                residual_m: 0.0,
            }))
            .collect(),
            condition_log: Vec::new(),
            converged: true,
            final_point: Matrix::zeros(1, 1),
            objective: Vec::new(),
            objective_monotone: true,
            points: None,
        }
    }

    #[test]
    fn orthogonal_normals_give_right_angle() {
        let base = Matrix::diag(&[1.0, 0.0]);
        let c = AffineConstraint::new(vec![e(0, 0, 2)], vec![1.0]).unwrap();
        let report = angle_constant(&base, &RankSetSpec::new(1), &c).unwrap();
        assert!(report.c_bar < 1e-10);
        assert!((report.angle_rad - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
        assert!(report.strongly_regular);
        assert_eq!(report.method, RegularityMethod::SubspaceExact);
    }

    #[test]
    fn identical_normal_lines_give_angle_zero() {
        let base = Matrix::diag(&[1.0, 0.0]);
        let c = AffineConstraint::new(vec![e(1, 1, 2)], vec![0.0]).unwrap();
        let report = angle_constant(&base, &RankSetSpec::new(1), &c).unwrap();
        assert!((report.c_bar - 1.0).abs() < 1e-10);
        assert!(!report.strongly_regular);
    }

    #[test]
    fn degenerate_cone_at_full_rank_bound() {
        let base = Matrix::diag(&[2.0, 1.0]);
        let c = AffineConstraint::new(vec![e(0, 1, 2)], vec![0.0]).unwrap();
        let report = angle_constant(&base, &RankSetSpec::new(2), &c).unwrap();
        assert_eq!(report.c_bar, 0.0);
        assert!(report.degenerate_cone);
    }

    #[test]
    fn angle_matches_maximization_oracle() {
        // Planted affine instance: maximize <u, v> over unit pairs from the
        // two normal subspaces directly (alternating ascent from random
        // starts, never touching the cross-Gram spectrum) and compare with
        // the subspace value.
        let mut rng = seeded_rng(40);
        let m = 6;
        let n = 6;
        let s = 2;
        let u = random_orthogonal(&mut rng, m);
        let v = random_orthogonal(&mut rng, n);
        let base = u
            .matmul(&Matrix::diag_embed(m, n, &[1.5, 1.2]))
            .unwrap()
            .matmul(&v.transpose())
            .unwrap();
        let maps: Vec<Matrix> = (0..8).map(|_| gaussian_matrix(&mut rng, m, n)).collect();
        let rhs: Vec<f64> = maps.iter().map(|a| a.trace_inner(&base).unwrap()).collect();
        let c = AffineConstraint::new(maps, rhs).unwrap();
        let spec = RankSetSpec::new(s);
        let report = angle_constant(&base, &spec, &c).unwrap();
        assert!(report.c_bar > 0.0 && report.c_bar < 1.0);

        let basis_s = normal_subspace_basis(&base, &spec).unwrap();
        let basis_m = c.normal_space();
        let span_project = |basis: &[Matrix], x: &Matrix| {
            let mut p = Matrix::zeros(m, n);
            for b in basis {
                p.axpy(b.trace_inner(x).unwrap(), b).unwrap();
            }
            p
        };
        let mut best: f64 = 0.0;
        for _ in 0..50 {
            let mut cand = Matrix::zeros(m, n);
            for b in &basis_s {
                cand.axpy(standard_normal(&mut rng), b).unwrap();
            }
            let norm = cand.fro_norm();
            if norm < 1e-14 {
                continue;
            }
            let mut us = cand.scale(1.0 / norm);
            let mut cos = 0.0;
            for _ in 0..100 {
                let pv = span_project(basis_m, &us);
                let nv = pv.fro_norm();
                if nv < 1e-14 {
                    break;
                }
                let vm = pv.scale(1.0 / nv);
                let pu = span_project(&basis_s, &vm);
                let nu = pu.fro_norm();
                if nu < 1e-14 {
                    break;
                }
                us = pu.scale(1.0 / nu);
                cos = us.trace_inner(&vm).unwrap();
            }
            best = best.max(cos);
        }
        assert!(best <= report.c_bar + 1e-9);
        assert!(best >= report.c_bar - 2e-2);
    }

    #[test]
    fn sampled_estimate_vanishes_for_disjoint_frames() {
        let base = Matrix::diag(&[1.0, 0.0]);
        let moduli: Vec<f64> = Matrix::identity(4)
            .matvec(&base.vectorize())
            .iter()
            .map(|v| v.abs())
            .collect();
        let c = MagnitudeConstraint::new(2, 2, Matrix::identity(4), moduli).unwrap();
        let report =
            angle_constant_sampled(&base, &RankSetSpec::new(1), &c, 200, 7).unwrap();
        assert!(report.c_bar < 1e-10);
        assert_eq!(report.method, RegularityMethod::Sampled);
    }

    #[test]
    fn sampled_estimate_rejects_zero_samples() {
        let base = Matrix::diag(&[1.0, 0.0]);
        let moduli: Vec<f64> = base.vectorize().iter().map(|v| v.abs()).collect();
        let c = MagnitudeConstraint::new(2, 2, Matrix::identity(4), moduli).unwrap();
        assert!(angle_constant_sampled(&base, &RankSetSpec::new(1), &c, 0, 7).is_err());
    }

    #[test]
    fn sampled_estimate_is_stable_in_sample_count() {
        let mut rng = seeded_rng(44);
        let q = random_orthogonal(&mut rng, 16);
        let u = random_orthogonal(&mut rng, 4);
        let v = random_orthogonal(&mut rng, 4);
        let base = u
            .matmul(&Matrix::diag_embed(4, 4, &[1.3]))
            .unwrap()
            .matmul(&v.transpose())
            .unwrap();
        let moduli: Vec<f64> = q.matvec(&base.vectorize()).iter().map(|t| t.abs()).collect();
        let c = MagnitudeConstraint::new(4, 4, q, moduli).unwrap();
        let spec = RankSetSpec::new(1);
        let small = angle_constant_sampled(&base, &spec, &c, 10_000, 3).unwrap();
        let large = angle_constant_sampled(&base, &spec, &c, 100_000, 3).unwrap();
        assert!((small.c_bar - large.c_bar).abs() < 5e-2);
        assert!(small.c_bar <= large.c_bar + 1e-12); // monotone max over a prefix
    }

    #[test]
    fn probe_row_space_examples() {
        let base = Matrix::diag(&[1.0, 0.0]);
        let spec = RankSetSpec::new(1);
        assert!(strong_regularity_probe(&base, &spec, &[e(0, 0, 2)], 1e-6).unwrap());
        assert!(!strong_regularity_probe(&base, &spec, &[e(1, 1, 2)], 1e-6).unwrap());
        assert!(strong_regularity_probe(&base, &spec, &[], 1e-6).is_err());
    }

    #[test]
    fn probe_consistent_with_angle_constant_on_planted_instances() {
        for seed in 0..50 {
            let mut rng = seeded_rng(1000 + seed);
            let m = 5;
            let n = 5;
            let u = random_orthogonal(&mut rng, m);
            let v = random_orthogonal(&mut rng, n);
            let base = u
                .matmul(&Matrix::diag_embed(m, n, &[1.4, 1.1]))
                .unwrap()
                .matmul(&v.transpose())
                .unwrap();
            let maps: Vec<Matrix> = (0..6).map(|_| gaussian_matrix(&mut rng, m, n)).collect();
            let rhs: Vec<f64> = maps.iter().map(|a| a.trace_inner(&base).unwrap()).collect();
            let c = AffineConstraint::new(maps, rhs).unwrap();
            let spec = RankSetSpec::new(2);
            let probe =
                strong_regularity_probe(&base, &spec, c.normal_space(), 1e-6).unwrap();
            let report = angle_constant(&base, &spec, &c).unwrap();
            if probe {
                assert!(report.strongly_regular, "seed {seed}: probe true but c_bar = {}", report.c_bar);
            }
        }
    }

    #[test]
    fn fit_exact_geometric_sequence() {
        let errors: Vec<f64> = (1..=40).map(|k| 0.5f64.powi(k)).collect();
        let trace = synthetic_trace(&errors);
        let report = fit_linear_rate(&trace, None, 0.6).unwrap();
        assert!((report.empirical_rate - 0.5).abs() < 1e-6);
        assert!(report.compliant);
        assert!(!report.insufficient_decay);
    }

    #[test]
    fn fit_noisy_geometric_sequence() {
        let errors: Vec<f64> = (1..=60)
            .map(|k| 0.9f64.powi(k) * (1.0 + 0.01 * if k % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let trace = synthetic_trace(&errors);
        let report = fit_linear_rate(&trace, None, 0.9).unwrap();
        assert!((report.empirical_rate - 0.9).abs() < 0.01);
    }

    #[test]
    fn fit_constant_sequence_reports_insufficient_decay() {
        let errors = vec![0.25; 30];
        let trace = synthetic_trace(&errors);
        let report = fit_linear_rate(&trace, None, 0.99).unwrap();
        assert!(report.insufficient_decay);
        assert!(!report.compliant);
    }

    #[test]
    fn fit_short_trace_is_an_error() {
        let errors = vec![0.5, 0.25, 0.125];
        let trace = synthetic_trace(&errors);
        assert!(matches!(
            fit_linear_rate(&trace, None, 0.9),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fit_truncates_trailing_zeros() {
        let mut errors: Vec<f64> = (1..=30).map(|k| 0.5f64.powi(k)).collect();
        errors.extend([0.0, 0.0]);
        let trace = synthetic_trace(&errors);
        let report = fit_linear_rate(&trace, None, 0.6).unwrap();
        assert!(report.truncated_window);
        assert!((report.empirical_rate - 0.5).abs() < 1e-6);
    }

    #[test]
    fn fit_against_target_needs_points() {
        let errors: Vec<f64> = (1..=20).map(|k| 0.5f64.powi(k)).collect();
        let trace = synthetic_trace(&errors);
        let target = Matrix::zeros(1, 1);
        assert!(matches!(
            fit_linear_rate(&trace, Some(&target), 0.9),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn angle_constant_invariant_under_base_resvd() {
        // Rebuilding the base from its own canonical factors must not move
        // the angle: principal angles depend on the subspaces only.
        let mut rng = seeded_rng(50);
        let m = 5;
        let n = 4;
        let u = random_orthogonal(&mut rng, m);
        let v = random_orthogonal(&mut rng, n);
        let base = u
            .matmul(&Matrix::diag_embed(m, n, &[1.6, 1.2]))
            .unwrap()
            .matmul(&v.transpose())
            .unwrap();
        let maps: Vec<Matrix> = (0..5).map(|_| gaussian_matrix(&mut rng, m, n)).collect();
        let rhs: Vec<f64> = maps.iter().map(|a| a.trace_inner(&base).unwrap()).collect();
        let c = AffineConstraint::new(maps, rhs).unwrap();
        let spec = RankSetSpec::new(2);
        let r1 = angle_constant(&base, &spec, &c).unwrap();
        let f = crate::svd::svd(&base).unwrap();
        let rebuilt = f.reconstruct();
        let r2 = angle_constant(&rebuilt, &spec, &c).unwrap();
        assert!((r1.c_bar - r2.c_bar).abs() < 1e-8);
    }
}
