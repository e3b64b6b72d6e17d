//! Full singular value decomposition via one-sided Jacobi rotations.
//!
//! The factors are canonicalized so that identical inputs always produce
//! identical output: singular values sorted descending with a stable sort,
//! and the sign of each singular pair fixed by making the largest-magnitude
//! entry of the corresponding left column positive (ties broken by lowest
//! row index). Full square U and V are produced because the orthogonal
//! complements of the column/row spaces feed the normal-cone construction.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ortho::{complete_basis, dot, norm};

/// Relative off-diagonal threshold at which a column pair counts as
/// orthogonal. Convergence of the sweep stops once every pair is below it.
const ORTH_EPS: f64 = 1e-14;

/// Iteration cap for the cyclic sweeps.
const MAX_SWEEPS: usize = 64;

/// Columns whose norm falls below `noise_floor` of the largest column are
/// cancellation residue of rank-deficient input; rotating against them
/// thrashes without converging, so they are frozen out of the sweep and
/// their left vectors come from basis completion instead. Their norm is
/// still reported as the singular value (within a Weyl-perturbation of the
/// true zero).
fn noise_floor(n: usize, max_norm: f64) -> f64 {
    8.0 * n as f64 * f64::EPSILON * max_norm
}

/// Full SVD of a real matrix: `x = U * diag_embed(sigma) * V^T` with
/// U (m-by-m) and V (n-by-n) orthogonal and sigma descending of length
/// `min(m, n)`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rows(&self) -> usize {
        self.u.rows()
    }

    pub fn cols(&self) -> usize {
        self.v.rows()
    }

    /// min(m, n), the length of the singular value vector.
    pub fn rank_bound(&self) -> usize {
        self.sigma.len()
    }

    pub fn left_vector(&self, j: usize) -> Vec<f64> {
        self.u.column(j)
    }

    pub fn right_vector(&self, j: usize) -> Vec<f64> {
        self.v.column(j)
    }

    /// Rebuild the source matrix from the factors.
    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_truncated(self.sigma.len())
    }

    /// Sum of the first `s` singular triplets: `sum_{j<s} sigma_j u_j v_j^T`.
    pub fn reconstruct_truncated(&self, s: usize) -> Matrix {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Matrix::zeros(m, n);
        for j in 0..s.min(self.sigma.len()) {
            let sj = self.sigma[j];
            if sj == 0.0 {
                continue;
            }
            for i in 0..m {
                let uij = self.u[(i, j)] * sj;
                if uij == 0.0 {
                    continue;
                }
                for k in 0..n {
                    out[(i, k)] += uij * self.v[(k, j)];
                }
            }
        }
        out
    }

    /// `||U^T U - I||_F`, for invariant checks.
    pub fn left_orthogonality_residual(&self) -> f64 {
        orthogonality_residual(&self.u)
    }

    pub fn right_orthogonality_residual(&self) -> f64 {
        orthogonality_residual(&self.v)
    }
}

fn orthogonality_residual(q: &Matrix) -> f64 {
    let n = q.cols();
    let mut acc = 0.0;
    for i in 0..n {
        let ci = q.column(i);
        for j in 0..n {
            let g = dot(&ci, &q.column(j)) - if i == j { 1.0 } else { 0.0 };
            acc += g * g;
        }
    }
    acc.sqrt()
}

/// Cyclic one-sided Jacobi: orthogonalize the columns of `a_cols` by plane
/// rotations, accumulating the rotations into `v_cols` when present.
/// Returns the number of sweeps used.
fn jacobi_sweeps(a_cols: &mut [Vec<f64>], mut v_cols: Option<&mut [Vec<f64>]>) -> Result<usize> {
    let n = a_cols.len();
    if n <= 1 {
        return Ok(0);
    }
    for sweep in 0..MAX_SWEEPS {
        let norms: Vec<f64> = a_cols.iter().map(|c| norm(c)).collect();
        let max_norm = norms.iter().fold(0.0f64, |a, &b| a.max(b));
        let floor = noise_floor(n, max_norm);
        let mut rotated = false;
        for p in 0..n - 1 {
            if norms[p] <= floor {
                continue;
            }
            for q in p + 1..n {
                if norms[q] <= floor {
                    continue;
                }
                let app = dot(&a_cols[p], &a_cols[p]);
                let aqq = dot(&a_cols[q], &a_cols[q]);
                if app == 0.0 || aqq == 0.0 {
                    continue;
                }
                let apq = dot(&a_cols[p], &a_cols[q]);
                if apq.abs() <= ORTH_EPS * app.sqrt() * aqq.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(a_cols, p, q, c, s);
                if let Some(v) = v_cols.as_deref_mut() {
                    rotate_pair(v, p, q, c, s);
                }
            }
        }
        if !rotated {
            return Ok(sweep);
        }
    }
    // Report the worst remaining relative off-diagonal as the residual.
    let mut worst: f64 = 0.0;
    for p in 0..n - 1 {
        for q in p + 1..n {
            let np = norm(&a_cols[p]);
            let nq = norm(&a_cols[q]);
            if np == 0.0 || nq == 0.0 {
                continue;
            }
            let apq = dot(&a_cols[p], &a_cols[q]).abs();
            worst = worst.max(apq / (np * nq));
        }
    }
    Err(Error::NumericalFailure {
        message: format!("one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps"),
        residual: worst,
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let new_p = c * *xp - s * *xq;
        let new_q = s * *xp + c * *xq;
        *xp = new_p;
        *xq = new_q;
    }
}

/// Full canonical SVD.
pub fn svd(x: &Matrix) -> Result<SvdFactors> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let transposed = x.rows() < x.cols();
    let work = if transposed { x.transpose() } else { x.clone() };
    let (m, n) = work.shape(); // m >= n

    let mut a_cols: Vec<Vec<f64>> = (0..n).map(|j| work.column(j)).collect();
    let mut v_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    jacobi_sweeps(&mut a_cols, Some(&mut v_cols))?;

    let norms: Vec<f64> = a_cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let floor = noise_floor(n, sigma_max);

    // Left vectors from the orthogonalized columns; directions for
    // below-floor values come from deterministic completion afterwards.
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing: Vec<usize> = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > floor && norms[j] > 0.0 {
            u_cols.push(a_cols[j].iter().map(|v| v / norms[j]).collect());
        } else {
            u_cols.push(vec![0.0; m]); // placeholder, filled below
            missing.push(slot);
        }
    }
    let present: Vec<Vec<f64>> = u_cols
        .iter()
        .enumerate()
        .filter(|(slot, _)| !missing.contains(slot))
        .map(|(_, c)| c.clone())
        .collect();
    let fill = complete_basis(&present, m);
    let mut fill_iter = fill.into_iter();
    for slot in &missing {
        u_cols[*slot] = fill_iter.next().expect("completion covers missing columns");
    }
    for extra in fill_iter {
        u_cols.push(extra); // columns n..m of the full U
    }

    let v_ordered: Vec<Vec<f64>> = order.iter().map(|&j| v_cols[j].clone()).collect();

    let u = Matrix::from_columns(&u_cols)?;
    let v = Matrix::from_columns(&v_ordered)?;

    let (mut u, mut v) = if transposed { (v, u) } else { (u, v) };
    canonicalize_signs(&mut u, &mut v, sigma.len());

    Ok(SvdFactors { u, sigma, v })
}

/// Singular values only (descending); skips the accumulation of V and the
/// completion of U.
pub fn singular_values(x: &Matrix) -> Result<Vec<f64>> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let work = if x.rows() < x.cols() { x.transpose() } else { x.clone() };
    let n = work.cols();
    let mut a_cols: Vec<Vec<f64>> = (0..n).map(|j| work.column(j)).collect();
    jacobi_sweeps(&mut a_cols, None)?;
    let mut sv: Vec<f64> = a_cols.iter().map(|c| norm(c)).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(sv)
}

/// Sign convention: for each singular pair j < r, the largest-magnitude entry
/// of U's column j is made positive (ties by lowest row index) with the
/// matching V column flipped alongside. Trailing columns of U and V beyond
/// the singular pairs get the same rule independently.
fn canonicalize_signs(u: &mut Matrix, v: &mut Matrix, r: usize) {
    let m = u.rows();
    let n = v.rows();
    for j in 0..m {
        if dominant_entry_negative(u, j) {
            flip_column(u, j);
            if j < r {
                flip_column(v, j);
            }
        }
    }
    for j in r..n {
        if dominant_entry_negative(v, j) {
            flip_column(v, j);
        }
    }
}

fn dominant_entry_negative(q: &Matrix, j: usize) -> bool {
    let mut best = 0;
    let mut best_abs = q[(0, j)].abs();
    for i in 1..q.rows() {
        let a = q[(i, j)].abs();
        if a > best_abs {
            best = i;
            best_abs = a;
        }
    }
    q[(best, j)] < 0.0
}

fn flip_column(q: &mut Matrix, j: usize) {
    for i in 0..q.rows() {
        q[(i, j)] = -q[(i, j)];
    }
}

/// Number of singular values above `tol * max(1, sigma_1)`; zero for the
/// zero matrix.
pub fn numeric_rank(x: &Matrix, tol: f64) -> Result<usize> {
    if tol < 0.0 {
        return Err(Error::InvalidParameter(format!("rank tolerance {tol} < 0")));
    }
    let sv = singular_values(x)?;
    let cutoff = tol * sv.first().copied().unwrap_or(0.0).max(1.0);
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

/// Orthonormal basis (as coordinate vectors of length n) of the row space,
/// taken from the leading right singular vectors.
pub fn row_space_basis(x: &Matrix, rank_tol: f64) -> Result<Vec<Vec<f64>>> {
    let f = svd(x)?;
    let cutoff = rank_tol * f.sigma.first().copied().unwrap_or(0.0).max(1.0);
    let k = f.sigma.iter().filter(|&&s| s > cutoff).count();
    Ok((0..k).map(|j| f.right_vector(j)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, random_orthogonal, seeded_rng};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn check_factors(x: &Matrix, f: &SvdFactors) {
        let m = x.rows();
        let n = x.cols();
        assert!(f.left_orthogonality_residual() <= 1e-10 * m as f64);
        assert!(f.right_orthogonality_residual() <= 1e-10 * n as f64);
        for w in f.sigma.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let recon = f.reconstruct();
        let err = recon.distance(x).unwrap();
        assert!(
            err <= 1e-9 * (1.0 + f.sigma.first().copied().unwrap_or(0.0)),
            "reconstruction error {err}"
        );
    }

    #[test]
    fn already_diagonal_ordered() {
        let x = Matrix::diag(&[2.0, 1.0]);
        let f = svd(&x).unwrap();
        assert_eq!(f.sigma, vec![2.0, 1.0]);
        assert_eq!(f.u, Matrix::identity(2));
        assert_eq!(f.v, Matrix::identity(2));
    }

    #[test]
    fn permuted_diagonal() {
        let x = Matrix::from_rows(&[vec![0.0, 3.0], vec![4.0, 0.0]]).unwrap();
        let f = svd(&x).unwrap();
        assert_eq!(f.sigma, vec![4.0, 3.0]);
        check_factors(&x, &f);
    }

    #[test]
    fn planted_spectrum_5x3() {
        let mut rng = seeded_rng(7);
        let u0 = random_orthogonal(&mut rng, 5);
        let v0 = random_orthogonal(&mut rng, 3);
        let planted = [3.0, 2.0, 1.0];
        let core = Matrix::diag_embed(5, 3, &planted);
        let x = u0.matmul(&core).unwrap().matmul(&v0.transpose()).unwrap();
        let f = svd(&x).unwrap();
        for (got, want) in f.sigma.iter().zip(planted.iter()) {
            assert_close(*got, *want, 1e-12);
        }
        check_factors(&x, &f);
    }

    #[test]
    fn wide_matrix_via_transpose() {
        let mut rng = seeded_rng(11);
        let x = gaussian_matrix(&mut rng, 3, 6);
        let f = svd(&x).unwrap();
        assert_eq!(f.u.shape(), (3, 3));
        assert_eq!(f.v.shape(), (6, 6));
        assert_eq!(f.sigma.len(), 3);
        check_factors(&x, &f);
    }

    #[test]
    fn zero_matrix() {
        let x = Matrix::zeros(3, 2);
        let f = svd(&x).unwrap();
        assert_eq!(f.sigma, vec![0.0, 0.0]);
        check_factors(&x, &f);
        assert_eq!(numeric_rank(&x, 1e-9).unwrap(), 0);
    }

    #[test]
    fn determinism_bit_identical() {
        let mut rng = seeded_rng(3);
        let x = gaussian_matrix(&mut rng, 6, 4);
        let f1 = svd(&x).unwrap();
        let f2 = svd(&x).unwrap();
        assert_eq!(f1.u, f2.u);
        assert_eq!(f1.sigma, f2.sigma);
        assert_eq!(f1.v, f2.v);
    }

    #[test]
    fn numeric_rank_relative_threshold() {
        let x = Matrix::diag(&[5.0, 1e-14]);
        assert_eq!(numeric_rank(&x, 1e-9).unwrap(), 1);
        assert_eq!(numeric_rank(&Matrix::identity(4), 1e-9).unwrap(), 4);
    }

    #[test]
    fn numeric_rank_planted_rank_two() {
        let mut rng = seeded_rng(21);
        let a = gaussian_matrix(&mut rng, 10, 2);
        let b = gaussian_matrix(&mut rng, 2, 10);
        let x = a.matmul(&b).unwrap();
        assert_eq!(numeric_rank(&x, 1e-9).unwrap(), 2);
    }

    #[test]
    fn numeric_rank_rejects_negative_tol() {
        assert!(numeric_rank(&Matrix::identity(2), -1.0).is_err());
    }

    #[test]
    fn graded_spectrum_stays_orthogonal() {
        let mut rng = seeded_rng(5);
        let u0 = random_orthogonal(&mut rng, 6);
        let v0 = random_orthogonal(&mut rng, 6);
        let planted = [1.0, 1e-3, 1e-6, 1e-9, 1e-12, 0.0];
        let x = u0
            .matmul(&Matrix::diag(&planted))
            .unwrap()
            .matmul(&v0.transpose())
            .unwrap();
        let f = svd(&x).unwrap();
        check_factors(&x, &f);
        for (got, want) in f.sigma.iter().zip(planted.iter()) {
            assert!((got - want).abs() <= 1e-14 + 1e-10 * want);
        }
    }

    #[test]
    fn values_only_matches_full() {
        let mut rng = seeded_rng(9);
        let x = gaussian_matrix(&mut rng, 7, 5);
        let f = svd(&x).unwrap();
        let sv = singular_values(&x).unwrap();
        for (a, b) in f.sigma.iter().zip(sv.iter()) {
            assert_close(*a, *b, 1e-12);
        }
    }

    #[test]
    fn exact_tie_reported_exactly() {
        let x = Matrix::diag(&[1.0, 1.0]);
        let f = svd(&x).unwrap();
        assert_eq!(f.sigma, vec![1.0, 1.0]);
    }
}
