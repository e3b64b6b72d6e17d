//! The rank level set `S = { y : rank(y) <= s }`: truncation projection with
//! a multivaluedness certificate, tie detection, normal-cone membership
//! tests, the normal-subspace construction at rank-s points, proximal-normal
//! sampling, and the single-valuedness radius.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ortho::max_principal_cosine;
use crate::random::{derived_rng, gaussian_matrix};
use crate::svd::{numeric_rank, row_space_basis, svd, SvdFactors};
use crate::tol::Tolerances;

/// Parameters of a rank level set in some ambient space of m-by-n matrices.
#[derive(Clone, Copy, Debug)]
pub struct RankSetSpec {
    /// Rank bound, 0 <= s <= min(m, n).
    pub s: usize,
    /// Relative band within which singular values count as tied.
    pub tie_tol: f64,
    /// Relative threshold for treating a singular value as zero.
    pub rank_tol: f64,
}

impl RankSetSpec {
    pub fn new(s: usize) -> Self {
        let t = Tolerances::default();
        RankSetSpec {
            s,
            tie_tol: t.tie_tol,
            rank_tol: t.rank_tol,
        }
    }

    pub fn with_tolerances(s: usize, tol: &Tolerances) -> Self {
        RankSetSpec {
            s,
            tie_tol: tol.tie_tol,
            rank_tol: tol.rank_tol,
        }
    }

    fn validate_for(&self, x: &Matrix) -> Result<()> {
        let r = x.rows().min(x.cols());
        if self.s > r {
            return Err(Error::InvalidParameter(format!(
                "rank bound s = {} exceeds min(m, n) = {r}",
                self.s
            )));
        }
        Ok(())
    }
}

/// Extended-real truncation threshold. The infinite case (s = 0) is a tag,
/// never an IEEE infinity fed into arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Finite(f64),
    Infinite,
}

impl Threshold {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Threshold::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Threshold::Finite(v) => Some(*v),
            Threshold::Infinite => None,
        }
    }
}

/// One projection representative together with the multivaluedness
/// certificate for the projected point.
#[derive(Clone, Debug)]
pub struct ProjectionResult {
    /// The canonical representative of the projection onto S.
    pub point: Matrix,
    /// Frobenius distance from the input to `point`.
    pub distance: f64,
    /// The truncation threshold: the s-th singular value, infinite at s = 0.
    pub alpha_s: Threshold,
    /// Number of singular values within the tie band of the threshold.
    pub j_count: usize,
    /// Whether the projection has more than one member.
    pub multivalued: bool,
}

/// Membership query for the normal-cone formula at a base point of S.
#[derive(Clone, Debug)]
pub struct NormalConeQuery {
    pub base: Matrix,
    pub vector: Matrix,
    pub subspace_tol: f64,
}

/// Zero out all singular values past the first `s`:
/// `U * diag_embed(sigma_1..sigma_s, 0, ..) * V^T`.
pub fn sigma_truncate(f: &SvdFactors, s: usize) -> Result<Matrix> {
    if s > f.rank_bound() {
        return Err(Error::InvalidParameter(format!(
            "truncation rank {s} exceeds min(m, n) = {}",
            f.rank_bound()
        )));
    }
    Ok(f.reconstruct_truncated(s))
}

fn tie_band(sigma: &[f64], tie_tol: f64) -> f64 {
    tie_tol * sigma.first().copied().unwrap_or(0.0).max(1.0)
}

fn index_set_from_sigma(sigma: &[f64], alpha: Threshold, tie_tol: f64) -> Vec<usize> {
    match alpha {
        Threshold::Infinite => Vec::new(),
        Threshold::Finite(a) => {
            let cutoff = a - tie_band(sigma, tie_tol);
            sigma
                .iter()
                .enumerate()
                .filter(|(_, &s)| s >= cutoff)
                .map(|(j, _)| j)
                .collect()
        }
    }
}

/// Indices (0-based) of singular values at or above `alpha`, measured with
/// the tie band. The infinite threshold selects nothing; a zero threshold
/// selects everything.
pub fn threshold_index_set(x: &Matrix, alpha: Threshold, tie_tol: f64) -> Result<Vec<usize>> {
    if let Threshold::Finite(a) = alpha {
        if !(a >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must be nonnegative, got {a}"
            )));
        }
    }
    let sv = crate::svd::singular_values(x)?;
    Ok(index_set_from_sigma(&sv, alpha, tie_tol))
}

fn threshold_from_sigma(sigma: &[f64], s: usize) -> Threshold {
    if s == 0 {
        Threshold::Infinite
    } else {
        Threshold::Finite(sigma[s - 1])
    }
}

/// The largest threshold that keeps at least `s` singular values: infinite
/// for s = 0, otherwise the s-th largest singular value (which is 0 whenever
/// rank(x) < s <= min(m, n)).
pub fn truncation_threshold(x: &Matrix, s: usize) -> Result<Threshold> {
    let r = x.rows().min(x.cols());
    if s > r {
        return Err(Error::InvalidParameter(format!(
            "s = {s} exceeds min(m, n) = {r}"
        )));
    }
    let sv = crate::svd::singular_values(x)?;
    Ok(threshold_from_sigma(&sv, s))
}

fn certificate_from_sigma(sigma: &[f64], s: usize, spec: &RankSetSpec) -> (Threshold, usize, bool) {
    let alpha = threshold_from_sigma(sigma, s);
    let j_count = index_set_from_sigma(sigma, alpha, spec.tie_tol).len();
    // A tie among zero singular values does not split the projection: when
    // the threshold is (numerically) zero the input already lies in S and
    // the projection is the identity there.
    let positive = match alpha {
        Threshold::Infinite => false,
        Threshold::Finite(a) => a > spec.rank_tol * sigma.first().copied().unwrap_or(0.0).max(1.0),
    };
    let multivalued = positive && j_count > s;
    (alpha, j_count, multivalued)
}

/// Nearest points of the rank level set: truncate the singular spectrum
/// after the s largest values. Returns the canonical representative plus
/// the multivaluedness certificate.
pub fn project_rank(x: &Matrix, spec: &RankSetSpec) -> Result<ProjectionResult> {
    spec.validate_for(x)?;
    let f = svd(x)?;
    let point = f.reconstruct_truncated(spec.s);
    let distance = x.distance(&point)?;
    let (alpha_s, j_count, multivalued) = certificate_from_sigma(&f.sigma, spec.s, spec);
    Ok(ProjectionResult {
        point,
        distance,
        alpha_s,
        j_count,
        multivalued,
    })
}

/// Lexicographic k-subsets of {0, .., n-1}.
struct Combinations {
    n: usize,
    k: usize,
    state: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        let state = if k <= n { Some((0..k).collect()) } else { None };
        Combinations { n, k, state }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.state.clone()?;
        // Advance to the next combination.
        let mut next = current.clone();
        let mut i = self.k;
        loop {
            if i == 0 {
                self.state = None;
                break;
            }
            i -= 1;
            if next[i] + 1 <= self.n - (self.k - i) {
                next[i] += 1;
                for j in i + 1..self.k {
                    next[j] = next[j - 1] + 1;
                }
                self.state = Some(next);
                break;
            }
        }
        Some(current)
    }
}

/// Materialize distinct members of the projection when the spectrum is tied
/// at the cut boundary, by re-selecting which tied indices are kept. Returns
/// at most `limit` members, all equidistant from `x`.
pub fn enumerate_projection_representatives(
    x: &Matrix,
    spec: &RankSetSpec,
    limit: usize,
) -> Result<Vec<Matrix>> {
    if limit == 0 {
        return Err(Error::InvalidParameter("representative limit must be >= 1".into()));
    }
    let result = project_rank(x, spec)?;
    if !result.multivalued {
        return Ok(vec![result.point]);
    }
    let f = svd(x)?;
    let a = result
        .alpha_s
        .finite()
        .expect("multivalued projection has a finite threshold");
    let band = tie_band(&f.sigma, spec.tie_tol);
    let group: Vec<usize> = (0..f.sigma.len())
        .filter(|&j| (f.sigma[j] - a).abs() <= band)
        .collect();
    let fixed: Vec<usize> = (0..spec.s).filter(|j| !group.contains(j)).collect();
    let keep_from_group = spec.s - fixed.len();

    let mut members: Vec<Matrix> = Vec::new();
    for combo in Combinations::new(group.len(), keep_from_group) {
        let mut kept = fixed.clone();
        kept.extend(combo.iter().map(|&i| group[i]));
        let mut y = Matrix::zeros(x.rows(), x.cols());
        for &j in &kept {
            y.axpy(f.sigma[j], &outer(&f.left_vector(j), &f.right_vector(j)))?;
        }
        let distinct = members
            .iter()
            .all(|m| m.distance(&y).map(|d| d > 1e-9).unwrap_or(true));
        if distinct {
            members.push(y);
            if members.len() == limit {
                break;
            }
        }
    }
    Ok(members)
}

fn outer(u: &[f64], v: &[f64]) -> Matrix {
    Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

/// Membership test for the normal-cone formula at a point of S:
/// `rank(v) <= min(m,n) - s` and the row spaces of `v` and the base point
/// intersect only at the origin.
pub fn stated_normal_cone_member(q: &NormalConeQuery, spec: &RankSetSpec) -> Result<bool> {
    if !q.base.same_shape(&q.vector) {
        return Err(Error::shape(q.base.shape(), q.vector.shape()));
    }
    spec.validate_for(&q.base)?;
    let base_rank = numeric_rank(&q.base, spec.rank_tol)?;
    if base_rank > spec.s {
        return Err(Error::Precondition(format!(
            "base point has rank {base_rank} > s = {}, not a member of S",
            spec.s
        )));
    }
    let r = q.base.rows().min(q.base.cols());
    let v_rank = numeric_rank(&q.vector, spec.rank_tol)?;
    if v_rank > r - spec.s {
        return Ok(false);
    }
    let rows_v = row_space_basis(&q.vector, spec.rank_tol)?;
    let rows_base = row_space_basis(&q.base, spec.rank_tol)?;
    let cosine = max_principal_cosine(&rows_v, &rows_base)?;
    Ok(cosine < 1.0 - q.subspace_tol)
}

fn require_rank_exactly_s(base: &Matrix, spec: &RankSetSpec) -> Result<SvdFactors> {
    spec.validate_for(base)?;
    let f = svd(base)?;
    let cutoff = spec.rank_tol * f.sigma.first().copied().unwrap_or(0.0).max(1.0);
    let rank = f.sigma.iter().filter(|&&s| s > cutoff).count();
    if rank != spec.s {
        return Err(Error::Precondition(format!(
            "base point has rank {rank}, need exactly s = {} (at rank < s the only proximal normal is 0)",
            spec.s
        )));
    }
    Ok(f)
}

/// Orthonormal basis of the span of proximal normals at a rank-s point:
/// the (m-s)(n-s) matrices `u_i v_j^T` built from the trailing singular
/// vectors of the base point.
pub fn normal_subspace_basis(base: &Matrix, spec: &RankSetSpec) -> Result<Vec<Matrix>> {
    let f = require_rank_exactly_s(base, spec)?;
    let (m, n) = base.shape();
    let mut basis = Vec::with_capacity((m - spec.s) * (n - spec.s));
    for i in spec.s..m {
        let ui = f.left_vector(i);
        for j in spec.s..n {
            basis.push(outer(&ui, &f.right_vector(j)));
        }
    }
    Ok(basis)
}

/// A certified proximal normal at a rank-s base point: perturb the base
/// inside the trailing singular block with a seeded random matrix small
/// enough that the projection returns the base, and return the difference.
pub fn sample_proximal_normal(base: &Matrix, spec: &RankSetSpec, seed: u64) -> Result<Matrix> {
    let f = require_rank_exactly_s(base, spec)?;
    let (m, n) = base.shape();
    let mut rng = derived_rng(seed, 0x70726f78);
    if spec.s == 0 {
        // S = {0}: every direction is a proximal normal at the origin.
        let g = gaussian_matrix(&mut rng, m, n);
        let norm = g.fro_norm();
        return Ok(if norm > 0.0 { g.scale(1.0 / norm) } else { g });
    }
    let sigma_s = f.sigma[spec.s - 1];
    let w = gaussian_matrix(&mut rng, m - spec.s, n - spec.s);
    let w_norm = w.fro_norm();
    let w = if w_norm > 0.0 {
        w.scale(sigma_s / (4.0 * w_norm))
    } else {
        w
    };
    // v = U_tail * W * V_tail^T, supported on the trailing singular block.
    let u_tail = Matrix::from_fn(m, m - spec.s, |i, j| f.u[(i, spec.s + j)]);
    let v_tail = Matrix::from_fn(n, n - spec.s, |i, j| f.v[(i, spec.s + j)]);
    u_tail.matmul(&w)?.matmul(&v_tail.transpose())
}

/// Radius around a rank-s point inside which the projection onto S is
/// single-valued: a quarter of the smallest kept singular value. Within the
/// ball the spectral gap between kept and dropped values stays open because
/// singular values are 1-Lipschitz.
pub fn prox_regularity_certificate(base: &Matrix, spec: &RankSetSpec) -> Result<f64> {
    if spec.s == 0 {
        return Err(Error::Precondition(
            "certificate needs s >= 1; at s = 0 the projection is globally single-valued".into(),
        ));
    }
    let f = require_rank_exactly_s(base, spec)?;
    Ok(f.sigma[spec.s - 1] / 4.0)
}

/// Draw a matrix strictly within Frobenius distance `radius` of `base`
/// (seeded): a random direction at a uniform fraction of the radius.
pub fn perturb_within(base: &Matrix, radius: f64, seed: u64) -> Matrix {
    let mut rng = derived_rng(seed, 0x62616c6c);
    let dir = gaussian_matrix(&mut rng, base.rows(), base.cols());
    let norm = dir.fro_norm();
    let fraction: f64 = rng.gen();
    let mut out = base.clone();
    if norm > 0.0 {
        out.axpy(radius * fraction * 0.999 / norm, &dir).expect("same shape");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_orthogonal, seeded_rng};

    fn planted(m: usize, n: usize, sigma: &[f64], seed: u64) -> Matrix {
        let mut rng = seeded_rng(seed);
        let u = random_orthogonal(&mut rng, m);
        let v = random_orthogonal(&mut rng, n);
        u.matmul(&Matrix::diag_embed(m, n, sigma))
            .unwrap()
            .matmul(&v.transpose())
            .unwrap()
    }

    #[test]
    fn truncate_ordered_diagonal() {
        let f = svd(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        let t = sigma_truncate(&f, 2).unwrap();
        assert!(t.distance(&Matrix::diag(&[3.0, 2.0, 0.0])).unwrap() < 1e-12);
    }

    #[test]
    fn truncate_full_rank_is_identity() {
        let x = planted(4, 3, &[2.5, 1.5, 0.5], 1);
        let f = svd(&x).unwrap();
        assert!(sigma_truncate(&f, 3).unwrap().distance(&x).unwrap() < 1e-12);
    }

    #[test]
    fn truncate_to_zero() {
        let x = planted(3, 3, &[2.0, 1.0, 0.5], 2);
        let f = svd(&x).unwrap();
        assert_eq!(sigma_truncate(&f, 0).unwrap(), Matrix::zeros(3, 3));
        assert!(sigma_truncate(&f, 4).is_err());
    }

    #[test]
    fn index_set_counts_ties() {
        let x = Matrix::diag(&[3.0, 2.0, 2.0, 1.0]);
        let idx = threshold_index_set(&x, Threshold::Finite(2.0), 1e-8).unwrap();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn index_set_infinite_is_empty() {
        let x = Matrix::diag(&[3.0, 1.0]);
        assert!(threshold_index_set(&x, Threshold::Infinite, 1e-8)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn index_set_zero_is_everything() {
        let x = Matrix::diag(&[3.0, 1.0, 0.0]);
        let idx = threshold_index_set(&x, Threshold::Finite(0.0), 1e-8).unwrap();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn threshold_examples() {
        let x = Matrix::diag(&[3.0, 2.0, 2.0, 1.0]);
        assert_eq!(truncation_threshold(&x, 2).unwrap(), Threshold::Finite(2.0));
        assert_eq!(truncation_threshold(&x, 0).unwrap(), Threshold::Infinite);
        let y = Matrix::diag(&[1.0, 0.0, 0.0]);
        assert_eq!(truncation_threshold(&y, 2).unwrap(), Threshold::Finite(0.0));
        assert!(truncation_threshold(&y, 4).is_err());
    }

    #[test]
    fn projection_ordered_diagonal() {
        let x = Matrix::diag(&[3.0, 2.0, 1.0]);
        let res = project_rank(&x, &RankSetSpec::new(1)).unwrap();
        assert!(res.point.distance(&Matrix::diag(&[3.0, 0.0, 0.0])).unwrap() < 1e-12);
        assert!((res.distance - 5f64.sqrt()).abs() < 1e-12);
        assert!(!res.multivalued);
    }

    #[test]
    fn projection_tied_spectrum_is_multivalued() {
        let x = Matrix::diag(&[1.0, 1.0]);
        let res = project_rank(&x, &RankSetSpec::new(1)).unwrap();
        assert!(res.multivalued);
        assert_eq!(res.j_count, 2);
        assert!((res.distance - 1.0).abs() < 1e-12);
        // The alternative selection is equidistant.
        let alt = Matrix::diag(&[0.0, 1.0]);
        assert!((x.distance(&alt).unwrap() - res.distance).abs() < 1e-12);
    }

    #[test]
    fn projection_distance_matches_tail_and_beats_candidates() {
        let sigma = [5.0, 4.0, 3.0, 2.0, 1.0, 0.0];
        let x = planted(8, 6, &sigma, 3);
        let res = project_rank(&x, &RankSetSpec::new(3)).unwrap();
        assert!((res.distance - 5f64.sqrt()).abs() < 1e-9);
        // Brute-force oracle: no random rank-3 candidate does better.
        let mut rng = seeded_rng(77);
        for _ in 0..200 {
            let a = gaussian_matrix(&mut rng, 8, 3);
            let b = gaussian_matrix(&mut rng, 3, 6);
            let y = a.matmul(&b).unwrap();
            assert!(x.distance(&y).unwrap() + 1e-9 >= res.distance);
        }
    }

    #[test]
    fn projection_at_rank_below_s_is_single_valued() {
        // rank 1 < s = 2: the input is already in S, so the projection is
        // the identity there and must not be flagged multivalued.
        let x = Matrix::diag(&[1.0, 0.0, 0.0]);
        let res = project_rank(&x, &RankSetSpec::new(2)).unwrap();
        assert!(!res.multivalued);
        assert!(res.distance < 1e-12);
        assert!(res.point.distance(&x).unwrap() < 1e-12);
    }

    #[test]
    fn enumerate_two_representatives_for_tie() {
        let x = Matrix::diag(&[1.0, 1.0]);
        let reps = enumerate_projection_representatives(&x, &RankSetSpec::new(1), 4).unwrap();
        assert_eq!(reps.len(), 2);
        let targets = [Matrix::diag(&[1.0, 0.0]), Matrix::diag(&[0.0, 1.0])];
        for t in &targets {
            assert!(reps.iter().any(|r| r.distance(t).unwrap() < 1e-9));
        }
    }

    #[test]
    fn enumerate_singleton_without_tie() {
        let x = Matrix::diag(&[3.0, 2.0, 1.0]);
        let reps = enumerate_projection_representatives(&x, &RankSetSpec::new(2), 4).unwrap();
        assert_eq!(reps.len(), 1);
    }

    #[test]
    fn enumerate_three_way_tie() {
        let x = Matrix::diag(&[2.0, 1.0, 1.0, 1.0]);
        let reps = enumerate_projection_representatives(&x, &RankSetSpec::new(2), 8).unwrap();
        assert_eq!(reps.len(), 3);
        let d0 = x.distance(&reps[0]).unwrap();
        for r in &reps {
            assert!((x.distance(r).unwrap() - d0).abs() < 1e-9);
        }
    }

    #[test]
    fn enumerate_respects_limit() {
        let x = Matrix::diag(&[2.0, 1.0, 1.0, 1.0]);
        let reps = enumerate_projection_representatives(&x, &RankSetSpec::new(2), 2).unwrap();
        assert_eq!(reps.len(), 2);
        assert!(enumerate_projection_representatives(&x, &RankSetSpec::new(2), 0).is_err());
    }

    #[test]
    fn stated_member_disjoint_support() {
        let base = Matrix::diag(&[1.0, 0.0]);
        let v = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 5.0]]).unwrap();
        let q = NormalConeQuery {
            base,
            vector: v,
            subspace_tol: 1e-6,
        };
        assert!(stated_normal_cone_member(&q, &RankSetSpec::new(1)).unwrap());
    }

    #[test]
    fn stated_member_shared_row_space_rejected() {
        let base = Matrix::diag(&[1.0, 0.0]);
        let v = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let q = NormalConeQuery {
            base,
            vector: v,
            subspace_tol: 1e-6,
        };
        assert!(!stated_normal_cone_member(&q, &RankSetSpec::new(1)).unwrap());
    }

    #[test]
    fn stated_member_rank_bound_rejected() {
        let base = Matrix::diag(&[1.0, 0.0, 0.0]);
        let v = planted(3, 3, &[1.0, 0.7, 0.3], 5);
        let q = NormalConeQuery {
            base,
            vector: v,
            subspace_tol: 1e-6,
        };
        assert!(!stated_normal_cone_member(&q, &RankSetSpec::new(1)).unwrap());
    }

    #[test]
    fn normal_basis_small_examples() {
        let basis = normal_subspace_basis(&Matrix::diag(&[1.0, 0.0]), &RankSetSpec::new(1)).unwrap();
        assert_eq!(basis.len(), 1);
        assert!(basis[0]
            .distance(&Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap())
            .unwrap()
            < 1e-12);

        let basis = normal_subspace_basis(&Matrix::diag(&[1.0, 0.0, 0.0]), &RankSetSpec::new(1)).unwrap();
        assert_eq!(basis.len(), 4);
    }

    #[test]
    fn normal_basis_annihilates_base() {
        let base = planted(4, 5, &[2.0, 1.0, 0.0, 0.0], 9);
        let spec = RankSetSpec::new(2);
        let basis = normal_subspace_basis(&base, &spec).unwrap();
        assert_eq!(basis.len(), 6);
        for b in &basis {
            let left = b.matmul(&base.transpose()).unwrap();
            assert!(left.fro_norm() < 1e-10);
            let right = base.transpose().matmul(b).unwrap();
            assert!(right.fro_norm() < 1e-10);
            let q = NormalConeQuery {
                base: base.clone(),
                vector: b.clone(),
                subspace_tol: 1e-6,
            };
            assert!(stated_normal_cone_member(&q, &spec).unwrap());
        }
    }

    #[test]
    fn normal_basis_requires_exact_rank() {
        let base = Matrix::diag(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            normal_subspace_basis(&base, &RankSetSpec::new(2)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn proximal_sample_round_trips() {
        let base = planted(5, 4, &[1.8, 1.2, 0.0, 0.0], 13);
        let spec = RankSetSpec::new(2);
        for seed in 0..100 {
            let v = sample_proximal_normal(&base, &spec, seed).unwrap();
            let x = base.add(&v).unwrap();
            let res = project_rank(&x, &spec).unwrap();
            assert!(res.point.distance(&base).unwrap() < 1e-9, "seed {seed}");
            assert!(!res.multivalued);
            let q = NormalConeQuery {
                base: base.clone(),
                vector: v,
                subspace_tol: 1e-6,
            };
            assert!(stated_normal_cone_member(&q, &spec).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn certificate_values() {
        assert!(
            (prox_regularity_certificate(&Matrix::diag(&[1.0, 0.0]), &RankSetSpec::new(1)).unwrap()
                - 0.25)
                .abs()
                < 1e-15
        );
        assert!(
            (prox_regularity_certificate(&Matrix::diag(&[4.0, 4.0, 0.0]), &RankSetSpec::new(2))
                .unwrap()
                - 1.0)
                .abs()
                < 1e-15
        );
        assert!(prox_regularity_certificate(&Matrix::diag(&[1.0, 0.0]), &RankSetSpec::new(2)).is_err());
    }

    #[test]
    fn certificate_radius_is_single_valued() {
        let base = planted(10, 10, &[2.0, 1.7, 1.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 31);
        let spec = RankSetSpec::new(3);
        let rho = prox_regularity_certificate(&base, &spec).unwrap();
        for seed in 0..50 {
            let x = perturb_within(&base, rho, seed);
            let res = project_rank(&x, &spec).unwrap();
            assert!(!res.multivalued, "seed {seed}");
        }
    }
}
