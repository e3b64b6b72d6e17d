/// Tolerance record threaded by value through every numerically sensitive
/// operation. All thresholds are relative unless noted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative threshold on singular values when counting numerical rank.
    pub rank_tol: f64,
    /// Relative band within which singular values are treated as tied.
    pub tie_tol: f64,
    /// Margin on the largest principal-angle cosine when deciding whether
    /// two subspaces intersect trivially.
    pub subspace_tol: f64,
    /// Allowed orthogonality residual for computed orthogonal factors.
    pub orth_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 1e-9,
            tie_tol: 1e-8,
            subspace_tol: 1e-6,
            orth_tol: 1e-10,
        }
    }
}
