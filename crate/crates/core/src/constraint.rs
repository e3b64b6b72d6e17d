//! The data-model side of the feasibility problem: an affine equality set
//! `{ x : <A_i, x> = b_i }` with an exact projector built on a cached
//! orthonormal basis, and a nonconvex magnitude set `{ x : |(Q vec x)_j| = c_j }`
//! for an orthogonal transform Q, with its closed-form sign projector.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{fmt_f64, Matrix};
use crate::ortho::orthonormalize;
use crate::random::derived_rng;
use crate::svd::svd;

/// `M = { x : <A_i, x> = b_i, i = 1..p }`, convex and closed.
///
/// Construction validates consistency of the system and caches an
/// orthonormal basis of span{A_i} together with the coordinates of one
/// feasible point in that basis, so each projection is a handful of inner
/// products.
#[derive(Clone, Debug)]
pub struct AffineConstraint {
    maps: Vec<Matrix>,
    rhs: Vec<f64>,
    basis: Vec<Matrix>,
    feasible_coords: Vec<f64>,
}

impl AffineConstraint {
    pub fn new(maps: Vec<Matrix>, rhs: Vec<f64>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidParameter(
                "affine constraint needs at least one measurement map".into(),
            ));
        }
        if maps.len() != rhs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} maps but {} right-hand sides",
                maps.len(),
                rhs.len()
            )));
        }
        let shape = maps[0].shape();
        for a in &maps {
            if a.shape() != shape {
                return Err(Error::shape(shape, a.shape()));
            }
        }
        if let Some(bad) = rhs.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite rhs entry {bad}")));
        }

        let vectors: Vec<Vec<f64>> = maps.iter().map(|a| a.vectorize()).collect();
        let basis_vecs = orthonormalize(&vectors, 1e-12);
        let basis: Vec<Matrix> = basis_vecs
            .iter()
            .map(|v| Matrix::from_vectorized(shape.0, shape.1, v.clone()))
            .collect::<Result<_>>()?;

        // Express the system in basis coordinates: with A_i = sum_k R_ik G_k,
        // feasibility reads R g = b. Solve least squares by pseudoinverse and
        // reject when the residual says the system is inconsistent.
        let p = maps.len();
        let q = basis.len();
        let r_mat = Matrix::from_fn(p, q, |i, k| {
            maps[i].trace_inner(&basis[k]).expect("shapes validated")
        });
        let g_star = pseudo_solve(&r_mat, &rhs)?;
        let achieved = r_mat.matvec(&g_star);
        let residual: f64 = achieved
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let b_norm: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if residual > 1e-8 * b_norm {
            return Err(Error::InconsistentConstraint { residual });
        }

        Ok(AffineConstraint {
            maps,
            rhs,
            basis,
            feasible_coords: g_star,
        })
    }

    pub fn ambient(&self) -> (usize, usize) {
        self.maps[0].shape()
    }

    pub fn maps(&self) -> &[Matrix] {
        &self.maps
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Orthonormal basis (trace inner product) of span{A_i}; this is the
    /// normal space of M at every one of its points.
    pub fn normal_space(&self) -> &[Matrix] {
        &self.basis
    }

    /// Nearest point of M: subtract the normal-space components that differ
    /// from the feasible coordinates.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.shape() != self.ambient() {
            return Err(Error::shape(self.ambient(), x.shape()));
        }
        let mut out = x.clone();
        for (g, &coord) in self.basis.iter().zip(&self.feasible_coords) {
            let c = g.trace_inner(x)? - coord;
            out.axpy(-c, g)?;
        }
        Ok(out)
    }

    /// Largest absolute constraint violation.
    pub fn residual(&self, x: &Matrix) -> f64 {
        self.maps
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a.trace_inner(x).expect("shape checked") - b).abs())
            .fold(0.0, f64::max)
    }

    /// Distance of a unit vector to span{A_i}; exact because the basis is
    /// cached. Used for the cone-distance condition of the inexact solver.
    pub fn normal_space_distance(&self, direction: &Matrix) -> Result<f64> {
        let mut residual = direction.clone();
        for _ in 0..2 {
            for g in &self.basis {
                let c = g.trace_inner(&residual)?;
                residual.axpy(-c, g)?;
            }
        }
        Ok(residual.fro_norm())
    }
}

/// Least-squares solve of `a * x = b` through the SVD pseudoinverse.
fn pseudo_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let f = svd(a)?;
    let cutoff = 1e-12 * f.sigma.first().copied().unwrap_or(0.0).max(1.0);
    let utb = f.u.matvec_transpose(b);
    let mut coeffs = vec![0.0; f.rank_bound()];
    for j in 0..f.rank_bound() {
        if f.sigma[j] > cutoff {
            coeffs[j] = utb[j] / f.sigma[j];
        }
    }
    let mut x = vec![0.0; a.cols()];
    for (j, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (xi, vi) in x.iter_mut().zip(f.v.column(j)) {
            *xi += c * vi;
        }
    }
    Ok(x)
}

/// `M = { x : |(Q vec x)_j| = c_j }` for an orthogonal Q; the real analog of
/// a measured-intensity constraint. Closed and nonconvex; the projector
/// rescales each transformed coordinate to its target modulus, keeping the
/// sign (with sign(0) read as +1).
#[derive(Clone, Debug)]
pub struct MagnitudeConstraint {
    rows: usize,
    cols: usize,
    transform: Matrix,
    moduli: Vec<f64>,
}

impl MagnitudeConstraint {
    pub fn new(rows: usize, cols: usize, transform: Matrix, moduli: Vec<f64>) -> Result<Self> {
        let n = rows * cols;
        if transform.shape() != (n, n) {
            return Err(Error::shape((n, n), transform.shape()));
        }
        if moduli.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} moduli for ambient dimension {n}",
                moduli.len()
            )));
        }
        if let Some(bad) = moduli.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "moduli must be finite and nonnegative, got {bad}"
            )));
        }
        let orth = orthogonality_defect(&transform);
        if orth > 1e-10 * n as f64 {
            return Err(Error::Precondition(format!(
                "transform is not orthogonal: ||Q^T Q - I||_F = {orth:.3e}"
            )));
        }
        Ok(MagnitudeConstraint {
            rows,
            cols,
            transform,
            moduli,
        })
    }

    pub fn ambient(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transform(&self) -> &Matrix {
        &self.transform
    }

    pub fn moduli(&self) -> &[f64] {
        &self.moduli
    }

    fn to_frame(&self, x: &Matrix) -> Vec<f64> {
        self.transform.matvec(&x.vectorize())
    }

    fn from_frame(&self, y: &[f64]) -> Result<Matrix> {
        Matrix::from_vectorized(self.rows, self.cols, self.transform.matvec_transpose(y))
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.shape() != (self.rows, self.cols) {
            return Err(Error::shape((self.rows, self.cols), x.shape()));
        }
        let y = self.to_frame(x);
        let snapped: Vec<f64> = y
            .iter()
            .zip(&self.moduli)
            .map(|(&yj, &cj)| if yj < 0.0 { -cj } else { cj })
            .collect();
        self.from_frame(&snapped)
    }

    /// Largest deviation of a transformed coordinate from its modulus.
    pub fn residual(&self, x: &Matrix) -> f64 {
        self.to_frame(x)
            .iter()
            .zip(&self.moduli)
            .map(|(yj, cj)| (yj.abs() - cj).abs())
            .fold(0.0, f64::max)
    }

    /// Seeded proximal normal at a feasible point: scale every transformed
    /// coordinate outward from its modulus (no sign flips), map back, and
    /// return the difference. The projector reverses the scaling, which is
    /// the round-trip certificate.
    pub fn sample_normal(&self, base: &Matrix, seed: u64) -> Result<Matrix> {
        let scale = self.moduli.iter().fold(1.0f64, |a, &b| a.max(b));
        if self.residual(base) > 1e-8 * scale {
            return Err(Error::Precondition(format!(
                "base point infeasible for the magnitude set (residual {:.3e})",
                self.residual(base)
            )));
        }
        let mut rng = derived_rng(seed, 0x6d61676e);
        let y = self.to_frame(base);
        let delta: Vec<f64> = y
            .iter()
            .map(|&yj| {
                let t: f64 = 0.05 + 0.45 * rng.gen::<f64>();
                t * yj
            })
            .collect();
        self.from_frame(&delta)
    }
}

fn orthogonality_defect(q: &Matrix) -> f64 {
    let n = q.cols();
    let mut acc = 0.0;
    let cols: Vec<Vec<f64>> = (0..n).map(|j| q.column(j)).collect();
    for i in 0..n {
        for j in 0..n {
            let g: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            let d = g - if i == j { 1.0 } else { 0.0 };
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// Either kind of "other set" the solvers run against.
#[derive(Clone, Debug)]
pub enum ConstraintSet {
    Affine(AffineConstraint),
    Magnitude(MagnitudeConstraint),
}

impl ConstraintSet {
    pub fn ambient(&self) -> (usize, usize) {
        match self {
            ConstraintSet::Affine(c) => c.ambient(),
            ConstraintSet::Magnitude(c) => c.ambient(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConstraintSet::Affine(_) => "affine",
            ConstraintSet::Magnitude(_) => "magnitude",
        }
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            ConstraintSet::Affine(c) => c.project(x),
            ConstraintSet::Magnitude(c) => c.project(x),
        }
    }

    pub fn residual(&self, x: &Matrix) -> f64 {
        match self {
            ConstraintSet::Affine(c) => c.residual(x),
            ConstraintSet::Magnitude(c) => c.residual(x),
        }
    }

    /// Structured text document: set kind, dimensions, the maps/transform in
    /// matrix text form, and the right-hand data. Round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self {
            ConstraintSet::Affine(c) => {
                let (m, n) = c.ambient();
                let _ = writeln!(s, "constraint affine");
                let _ = writeln!(s, "dims {m} {n}");
                let _ = writeln!(s, "p {}", c.maps.len());
                for a in &c.maps {
                    let _ = writeln!(s, "map");
                    s.push_str(&a.to_text());
                }
                let _ = writeln!(s, "rhs");
                let _ = writeln!(s, "{}", join_floats(&c.rhs));
            }
            ConstraintSet::Magnitude(c) => {
                let (m, n) = c.ambient();
                let _ = writeln!(s, "constraint magnitude");
                let _ = writeln!(s, "dims {m} {n}");
                let _ = writeln!(s, "transform");
                s.push_str(&c.transform.to_text());
                let _ = writeln!(s, "moduli");
                let _ = writeln!(s, "{}", join_floats(&c.moduli));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<ConstraintSet> {
        let mut reader = LineReader::new(text);
        let header = reader.next_line("constraint header")?;
        let kind = header
            .strip_prefix("constraint ")
            .ok_or_else(|| reader.err("expected 'constraint <kind>'"))?
            .trim()
            .to_string();
        let dims_line = reader.next_line("dims")?;
        let dims: Vec<usize> = parse_tokens(dims_line.strip_prefix("dims ").unwrap_or(""))
            .map_err(|m| reader.err(&m))?;
        if dims.len() != 2 {
            return Err(reader.err("dims line must carry two integers"));
        }
        let (m, n) = (dims[0], dims[1]);
        match kind.as_str() {
            "affine" => {
                let p_line = reader.next_line("p")?;
                let p: usize = p_line
                    .strip_prefix("p ")
                    .and_then(|t| t.trim().parse().ok())
                    .ok_or_else(|| reader.err("bad p line"))?;
                let mut maps = Vec::with_capacity(p);
                for _ in 0..p {
                    reader.expect("map")?;
                    maps.push(reader.read_matrix()?);
                }
                reader.expect("rhs")?;
                let rhs_line = reader.next_line("rhs values")?;
                let rhs: Vec<f64> = parse_tokens(rhs_line).map_err(|msg| reader.err(&msg))?;
                reader.expect("end")?;
                Ok(ConstraintSet::Affine(AffineConstraint::new(maps, rhs)?))
            }
            "magnitude" => {
                reader.expect("transform")?;
                let q = reader.read_matrix()?;
                reader.expect("moduli")?;
                let mod_line = reader.next_line("moduli values")?;
                let moduli: Vec<f64> = parse_tokens(mod_line).map_err(|msg| reader.err(&msg))?;
                reader.expect("end")?;
                Ok(ConstraintSet::Magnitude(MagnitudeConstraint::new(
                    m, n, q, moduli,
                )?))
            }
            other => Err(reader.err(&format!("unknown constraint kind '{other}'"))),
        }
    }
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_tokens<T: std::str::FromStr>(line: &str) -> std::result::Result<Vec<T>, String> {
    line.split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| format!("bad token '{t}'")))
        .collect()
}

/// Small cursor over the lines of a structured text document.
struct LineReader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    fn err(&self, message: &str) -> Error {
        Error::Parse {
            line: self.pos,
            message: message.to_string(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<&'a str> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos];
            self.pos += 1;
            if !line.trim().is_empty() {
                return Ok(line);
            }
        }
        Err(Error::Parse {
            line: self.pos,
            message: format!("document ended while looking for {what}"),
        })
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let line = self.next_line(tag)?;
        if line.trim() == tag {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{tag}', found '{line}'")))
        }
    }

    fn read_matrix(&mut self) -> Result<Matrix> {
        let header = self.next_line("matrix header")?;
        let dims: Vec<usize> = parse_tokens(header).map_err(|m| self.err(&m))?;
        if dims.len() != 2 {
            return Err(self.err("matrix header must be 'rows cols'"));
        }
        let mut text = String::new();
        text.push_str(header);
        text.push('\n');
        for _ in 0..dims[0] {
            let line = self.next_line("matrix row")?;
            text.push_str(line);
            text.push('\n');
        }
        Matrix::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, random_orthogonal, seeded_rng};

    fn e(i: usize, j: usize, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        m[(i, j)] = 1.0;
        m
    }

    #[test]
    fn single_entry_constraint_projects_nearest() {
        let c = AffineConstraint::new(vec![e(0, 0, 2)], vec![1.0]).unwrap();
        let out = c.project(&Matrix::zeros(2, 2)).unwrap();
        assert!(out.distance(&e(0, 0, 2)).unwrap() < 1e-12);
    }

    #[test]
    fn feasible_point_is_fixed() {
        let mut rng = seeded_rng(4);
        let maps = vec![gaussian_matrix(&mut rng, 3, 3), gaussian_matrix(&mut rng, 3, 3)];
        let x_feas = gaussian_matrix(&mut rng, 3, 3);
        let rhs: Vec<f64> = maps.iter().map(|a| a.trace_inner(&x_feas).unwrap()).collect();
        let c = AffineConstraint::new(maps, rhs).unwrap();
        let out = c.project(&x_feas).unwrap();
        assert!(out.distance(&x_feas).unwrap() < 1e-12);
    }

    #[test]
    fn projection_matches_dense_least_squares_oracle() {
        let mut rng = seeded_rng(8);
        let maps = vec![gaussian_matrix(&mut rng, 3, 3), gaussian_matrix(&mut rng, 3, 3)];
        let x_feas = gaussian_matrix(&mut rng, 3, 3);
        let rhs: Vec<f64> = maps.iter().map(|a| a.trace_inner(&x_feas).unwrap()).collect();
        let c = AffineConstraint::new(maps.clone(), rhs.clone()).unwrap();
        let x = gaussian_matrix(&mut rng, 3, 3);
        let out = c.project(&x).unwrap();

        // Oracle: y = x - sum_i w_i A_i with Gram * w = residuals, solved
        // densely through the pseudoinverse (normal equations of the
        // minimum-distance problem).
        let p = maps.len();
        let gram = Matrix::from_fn(p, p, |i, j| maps[i].trace_inner(&maps[j]).unwrap());
        let resid: Vec<f64> = maps
            .iter()
            .zip(&rhs)
            .map(|(a, b)| a.trace_inner(&x).unwrap() - b)
            .collect();
        let w = pseudo_solve(&gram, &resid).unwrap();
        let mut oracle = x.clone();
        for (wi, a) in w.iter().zip(&maps) {
            oracle.axpy(-wi, a).unwrap();
        }
        assert!(out.distance(&oracle).unwrap() < 1e-9);
        assert!(c.residual(&out) < 1e-9 * (1.0 + 1.0));
    }

    #[test]
    fn inconsistent_system_rejected_at_construction() {
        let maps = vec![e(0, 0, 2), e(0, 0, 2).scale(2.0)];
        let err = AffineConstraint::new(maps, vec![1.0, 3.0]);
        assert!(matches!(err, Err(Error::InconsistentConstraint { .. })));
    }

    #[test]
    fn normal_space_single_map() {
        let c = AffineConstraint::new(vec![e(0, 0, 2)], vec![0.0]).unwrap();
        let basis = c.normal_space();
        assert_eq!(basis.len(), 1);
        assert!(basis[0].distance(&e(0, 0, 2)).unwrap() < 1e-12);
    }

    #[test]
    fn normal_space_dependent_maps_span_two_dims() {
        let a1 = e(0, 0, 2);
        let mut a2 = e(0, 0, 2).scale(2.0);
        a2.axpy(1.0, &e(0, 1, 2)).unwrap();
        let c = AffineConstraint::new(vec![a1, a2], vec![0.0, 0.0]).unwrap();
        let basis = c.normal_space();
        assert_eq!(basis.len(), 2);
        for (i, gi) in basis.iter().enumerate() {
            for (j, gj) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gi.trace_inner(gj).unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normal_space_gram_is_identity() {
        let mut rng = seeded_rng(12);
        let maps: Vec<Matrix> = (0..5).map(|_| gaussian_matrix(&mut rng, 4, 4)).collect();
        let rhs = vec![0.0; 5];
        let c = AffineConstraint::new(maps, rhs).unwrap();
        let basis = c.normal_space();
        assert_eq!(basis.len(), 5);
        for (i, gi) in basis.iter().enumerate() {
            for (j, gj) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gi.trace_inner(gj).unwrap() - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn magnitude_identity_transform_rescales() {
        let c = MagnitudeConstraint::new(1, 2, Matrix::identity(2), vec![2.0, 3.0]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let out = c.project(&x).unwrap();
        assert!(out
            .distance(&Matrix::from_rows(&[vec![2.0, -3.0]]).unwrap())
            .unwrap()
            < 1e-12);
    }

    #[test]
    fn magnitude_zero_coordinate_takes_positive_sign() {
        let c = MagnitudeConstraint::new(1, 2, Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        let x = Matrix::from_rows(&[vec![0.0, -0.5]]).unwrap();
        let out = c.project(&x).unwrap();
        assert!(out
            .distance(&Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap())
            .unwrap()
            < 1e-12);
    }

    #[test]
    fn magnitude_planted_point_is_fixed_and_optimal() {
        let mut rng = seeded_rng(6);
        let q = random_orthogonal(&mut rng, 6);
        let u_star = gaussian_matrix(&mut rng, 2, 3);
        let moduli: Vec<f64> = q.matvec(&u_star.vectorize()).iter().map(|v| v.abs()).collect();
        let c = MagnitudeConstraint::new(2, 3, q.clone(), moduli.clone()).unwrap();
        assert!(c.project(&u_star).unwrap().distance(&u_star).unwrap() < 1e-12);

        let x = gaussian_matrix(&mut rng, 2, 3);
        let best = c.project(&x).unwrap();
        let best_dist = x.distance(&best).unwrap();
        for _ in 0..500 {
            let signs: Vec<f64> = (0..6)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let y: Vec<f64> = signs.iter().zip(&moduli).map(|(s, c)| s * c).collect();
            let candidate =
                Matrix::from_vectorized(2, 3, q.matvec_transpose(&y)).unwrap();
            assert!(x.distance(&candidate).unwrap() + 1e-9 >= best_dist);
        }
    }

    #[test]
    fn magnitude_rejects_non_orthogonal_transform() {
        let q = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(MagnitudeConstraint::new(1, 2, q, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn magnitude_normal_sample_is_radial() {
        let c = MagnitudeConstraint::new(1, 1, Matrix::identity(1), vec![1.0]).unwrap();
        let base = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let v = c.sample_normal(&base, 3).unwrap();
        assert!(v[(0, 0)] > 0.0);
    }

    #[test]
    fn magnitude_normal_sample_outward_per_coordinate() {
        let c = MagnitudeConstraint::new(1, 2, Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        let base = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let v = c.sample_normal(&base, 5).unwrap();
        assert!(v[(0, 0)] > 0.0);
        assert!(v[(0, 1)] < 0.0);
    }

    #[test]
    fn magnitude_normal_samples_round_trip() {
        let mut rng = seeded_rng(14);
        let q = random_orthogonal(&mut rng, 36);
        let x_star = gaussian_matrix(&mut rng, 6, 6);
        let moduli: Vec<f64> = q.matvec(&x_star.vectorize()).iter().map(|v| v.abs()).collect();
        let c = MagnitudeConstraint::new(6, 6, q, moduli).unwrap();
        for seed in 0..50 {
            let v = c.sample_normal(&x_star, seed).unwrap();
            let back = c.project(&x_star.add(&v).unwrap()).unwrap();
            assert!(back.distance(&x_star).unwrap() < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn magnitude_infeasible_base_rejected() {
        let c = MagnitudeConstraint::new(1, 2, Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        let base = Matrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        assert!(matches!(
            c.sample_normal(&base, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn serialization_round_trip_affine() {
        let mut rng = seeded_rng(20);
        let maps = vec![gaussian_matrix(&mut rng, 2, 3), gaussian_matrix(&mut rng, 2, 3)];
        let x_feas = gaussian_matrix(&mut rng, 2, 3);
        let rhs: Vec<f64> = maps.iter().map(|a| a.trace_inner(&x_feas).unwrap()).collect();
        let c = ConstraintSet::Affine(AffineConstraint::new(maps, rhs).unwrap());
        let text = c.to_text();
        let back = ConstraintSet::from_text(&text).unwrap();
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn serialization_round_trip_magnitude() {
        let mut rng = seeded_rng(21);
        let q = random_orthogonal(&mut rng, 4);
        let c = ConstraintSet::Magnitude(
            MagnitudeConstraint::new(2, 2, q, vec![0.5, 1.5, 0.0, 2.0]).unwrap(),
        );
        let text = c.to_text();
        let back = ConstraintSet::from_text(&text).unwrap();
        assert_eq!(text, back.to_text());
    }
}
