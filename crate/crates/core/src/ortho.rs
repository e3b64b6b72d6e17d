//! Vector-space helpers shared by the SVD, the constraint projectors, and the
//! subspace diagnostics: Gram-Schmidt orthonormalization, span projections,
//! and principal-angle cosines. Vectors are plain `Vec<f64>` coordinates.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::svd::singular_values;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt with a second orthogonalization pass.
///
/// Vectors whose residual after orthogonalization drops below
/// `drop_tol * original_norm` are treated as linearly dependent and skipped.
pub fn orthonormalize(vectors: &[Vec<f64>], drop_tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let original = norm(v);
        if original == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let remaining = norm(&w);
        if remaining > drop_tol * original {
            for wi in w.iter_mut() {
                *wi /= remaining;
            }
            basis.push(w);
        }
    }
    basis
}

/// Orthogonal projection of `v` onto the span of an orthonormal basis.
pub fn project_onto_span(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; v.len()];
    for b in basis {
        let c = dot(v, b);
        for (pi, bi) in p.iter_mut().zip(b) {
            *pi += c * bi;
        }
    }
    p
}

/// Norm of `v - P_span(v)` for an orthonormal basis.
pub fn span_residual(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut w = v.to_vec();
    // Two passes keep the residual accurate when v is nearly in the span.
    for _ in 0..2 {
        for b in basis {
            let c = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
    }
    norm(&w)
}

/// Extend `existing` (orthonormal) to a full orthonormal basis of R^dim.
/// Each round takes the standard basis vector with the largest residual
/// outside the current span (ties by lowest index), which is always at
/// least sqrt(missing / dim) in exact arithmetic. Deterministic.
pub fn complete_basis(existing: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut added: Vec<Vec<f64>> = Vec::with_capacity(dim.saturating_sub(existing.len()));
    while existing.len() + added.len() < dim {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for t in 0..dim {
            let mut w = vec![0.0; dim];
            w[t] = 1.0;
            for _ in 0..2 {
                for b in existing.iter().chain(added.iter()) {
                    let c = dot(&w, b);
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= c * bi;
                    }
                }
            }
            let r = norm(&w);
            if best.as_ref().map(|(br, _)| r > *br).unwrap_or(true) {
                best = Some((r, w));
            }
        }
        let (r, mut w) = best.expect("dim >= 1");
        assert!(
            r > 1e-8,
            "no standard basis vector has a usable residual while completing R^{dim}"
        );
        for wi in w.iter_mut() {
            *wi /= r;
        }
        added.push(w);
    }
    added
}

/// Cosine of the minimal principal angle between two subspaces given by
/// orthonormal bases: the largest singular value of the cross-Gram matrix.
/// Either span being trivial gives 0.
pub fn max_principal_cosine(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let gram = Matrix::from_fn(a.len(), b.len(), |i, j| dot(&a[i], &b[j]));
    let sv = singular_values(&gram)?;
    Ok(sv.first().copied().unwrap_or(0.0).min(1.0))
}
