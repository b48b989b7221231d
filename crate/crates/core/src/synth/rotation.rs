//! Subspace sequences: rotations driven by skew-symmetric generators, and
//! piecewise-constant sequences with abrupt changes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{expm, qr_orthonormalize, spectral_norm, Basis};
use crate::rng;

/// A random `n x n` skew-symmetric matrix of unit spectral norm: i.i.d.
/// standard normal strictly-upper entries, antisymmetrized, then rescaled.
pub fn skew_generator(n: usize, stream: &mut rng::Stream) -> Array2<f64> {
    let mut b = Array2::<f64>::zeros((n, n));
    for j in 1..n {
        for i in 0..j {
            let v = rng::standard_normal(stream);
            b[[i, j]] = v;
            b[[j, i]] = -v;
        }
    }
    let norm = spectral_norm(b.view());
    if norm > 0.0 {
        b /= norm;
    }
    b
}

/// `QR(exp(-delta B) P)`, one rotation step.
pub fn rotate(p: &Basis, b: ArrayView2<f64>, delta: f64) -> Result<Basis> {
    if b.dim() != (p.n(), p.n()) {
        return Err(Error::dims(format!("{0}x{0} generator", p.n()), format!("{:?}", b.dim())));
    }
    let e = expm((b.to_owned() * -delta).view());
    Ok(qr_orthonormalize(e.dot(&p.view()).view())?.0)
}

/// An `n x r` basis from an i.i.d. Gaussian matrix drawn from `stream`.
pub fn random_basis(n: usize, r: usize, stream: &mut rng::Stream) -> Result<Basis> {
    let g = rng::gaussian_matrix(stream, n, r);
    Ok(qr_orthonormalize(g.view())?.0)
}

/// A random orthonormal `n x r` matrix whose columns are orthogonal to `p`.
pub fn random_complement(p: &Basis, r: usize, stream: &mut rng::Stream) -> Result<Basis> {
    if p.r() + r > p.n() {
        return Err(Error::InvalidRank { r: p.r() + r, rows: p.n(), cols: p.n() });
    }
    let g = rng::gaussian_matrix(stream, p.n(), r);
    // project twice so the result is orthogonal to p to working precision
    let once = p.project_out_mat(g.view());
    let twice = p.project_out_mat(once.view());
    Ok(qr_orthonormalize(twice.view())?.0)
}

/// `P_(1), ..., P_(num_steps)` from `P_(t) = QR(exp(-delta B_t) P_(t-1))` with
/// `P_(0)` a random basis and a fresh unit-norm generator `B_t` per step.
///
/// Each step costs a dense `n x n` exponential, so this is meant for small
/// `n`; [`geodesic`] covers large problems.
pub fn gen_rotation_sequence(
    n: usize,
    r: usize,
    delta: f64,
    num_steps: usize,
    seed: u64,
) -> Result<Vec<Basis>> {
    check_dims(n, r)?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be >= 0")));
    }
    let mut p = random_basis(n, r, &mut rng::stream(seed, "p0", 0))?;
    let mut out = Vec::with_capacity(num_steps);
    for t in 0..num_steps {
        if delta > 0.0 {
            let b = skew_generator(n, &mut rng::stream(seed, "skew", t as u64));
            p = rotate(&p, b.view(), delta)?;
        }
        out.push(p.clone());
    }
    Ok(out)
}

/// Rotation with a fixed generator `B = P0 X^T - X P0^T`, where `X` is a random
/// orthonormal `n x r` matrix orthogonal to `P0`. `B` is skew-symmetric with
/// unit spectral norm and `exp(-t delta B) P0 = P0 cos(t delta) + X sin(t delta)`,
/// so every point of the path is available in `O(nr)` without an `n x n`
/// exponential, and `dist(P_(s), P_(t)) = |sin((t - s) delta)|` exactly.
pub fn geodesic(n: usize, r: usize, delta: f64, seed: u64) -> Result<SubspacePath> {
    check_dims(n, r)?;
    if 2 * r > n {
        return Err(Error::InvalidParameter(format!(
            "the fixed-tangent rotation needs n >= 2r (n = {n}, r = {r})"
        )));
    }
    let p0 = random_basis(n, r, &mut rng::stream(seed, "p0", 0))?;
    let x = random_complement(&p0, r, &mut rng::stream(seed, "tangent", 0))?;
    Ok(SubspacePath::Geodesic { p0, x, delta })
}

/// Per-batch subspaces that stay constant except at `change_batches`, where a
/// freshly drawn random subspace takes over. Consecutive changes (and the
/// first change relative to batch 0) must be more than `min_spacing` batches
/// apart.
pub fn gen_piecewise_sequence(
    n: usize,
    r: usize,
    num_batches: usize,
    change_batches: &[usize],
    min_spacing: usize,
    seed: u64,
) -> Result<Vec<Basis>> {
    check_dims(n, r)?;
    let bases = (0..=change_batches.len())
        .map(|k| random_basis(n, r, &mut rng::stream(seed, "piece", k as u64)))
        .collect::<Result<Vec<_>>>()?;
    piecewise_from_bases(num_batches, change_batches, min_spacing, bases)
}

/// Same as [`gen_piecewise_sequence`] with the pieces supplied by the caller.
pub fn piecewise_from_bases(
    num_batches: usize,
    change_batches: &[usize],
    min_spacing: usize,
    bases: Vec<Basis>,
) -> Result<Vec<Basis>> {
    validate_changes(num_batches, change_batches, min_spacing)?;
    if bases.len() != change_batches.len() + 1 {
        return Err(Error::dims(
            format!("{} pieces", change_batches.len() + 1),
            bases.len(),
        ));
    }
    let mut out = Vec::with_capacity(num_batches);
    let mut piece = 0;
    for j in 0..num_batches {
        while piece < change_batches.len() && change_batches[piece] <= j {
            piece += 1;
        }
        out.push(bases[piece].clone());
    }
    Ok(out)
}

pub(crate) fn validate_changes(num_batches: usize, changes: &[usize], min_spacing: usize) -> Result<()> {
    let mut prev = 0;
    for &c in changes {
        if c == 0 || c >= num_batches {
            return Err(Error::InvalidSpacing(format!(
                "change batch {c} outside 1..{num_batches}"
            )));
        }
        if c <= prev || c - prev <= min_spacing {
            return Err(Error::InvalidSpacing(format!(
                "change at batch {c} follows batch {prev}; spacing must exceed {min_spacing}"
            )));
        }
        prev = c;
    }
    Ok(())
}

fn check_dims(n: usize, r: usize) -> Result<()> {
    if r == 0 || r >= n {
        return Err(Error::InvalidRank { r, rows: n, cols: r });
    }
    Ok(())
}

/// The true subspace as a function of the column index `t` (0-based; column
/// `t` lies in `P_(t+1)`).
#[derive(Clone, Debug)]
pub enum SubspacePath {
    Geodesic { p0: Basis, x: Basis, delta: f64 },
    /// One basis per column.
    Steps(Vec<Basis>),
    /// One basis per mini-batch of `alpha` columns.
    Batches { bases: Vec<Basis>, alpha: usize },
}

impl SubspacePath {
    pub fn n(&self) -> usize {
        match self {
            SubspacePath::Geodesic { p0, .. } => p0.n(),
            SubspacePath::Steps(b) => b[0].n(),
            SubspacePath::Batches { bases, .. } => bases[0].n(),
        }
    }

    pub fn r(&self) -> usize {
        match self {
            SubspacePath::Geodesic { p0, .. } => p0.r(),
            SubspacePath::Steps(b) => b[0].r(),
            SubspacePath::Batches { bases, .. } => bases[0].r(),
        }
    }

    /// `P_(t+1) a` for column `t`.
    pub fn apply(&self, t: usize, a: ArrayView1<f64>) -> Array1<f64> {
        match self {
            SubspacePath::Geodesic { p0, x, delta } => {
                let angle = (t + 1) as f64 * delta;
                p0.view().dot(&a) * angle.cos() + x.view().dot(&a) * angle.sin()
            }
            SubspacePath::Steps(b) => b[t].view().dot(&a),
            SubspacePath::Batches { bases, alpha } => bases[t / alpha].view().dot(&a),
        }
    }

    /// The basis holding column `t`.
    pub fn basis_at(&self, t: usize) -> Basis {
        match self {
            SubspacePath::Geodesic { p0, x, delta } => {
                let angle = (t + 1) as f64 * delta;
                let m = p0.view().to_owned() * angle.cos() + &(x.view().to_owned() * angle.sin());
                Basis::from_orthonormal(m)
            }
            SubspacePath::Steps(b) => b[t].clone(),
            SubspacePath::Batches { bases, alpha } => bases[t / alpha].clone(),
        }
    }

    /// Largest per-column drift `dist(P_(t), P_(t+1))` over `d` columns.
    pub fn max_step(&self, d: usize) -> f64 {
        match self {
            SubspacePath::Geodesic { delta, .. } => {
                if d < 2 { 0.0 } else { delta.min(std::f64::consts::FRAC_PI_2).sin() }
            }
            _ => (1..d)
                .map(|t| crate::linalg::dist(&self.basis_at(t - 1), &self.basis_at(t)).unwrap_or(1.0))
                .fold(0.0, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist;

    #[test]
    fn zero_rotation_is_constant() {
        let seq = gen_rotation_sequence(6, 2, 0.0, 5, 1).unwrap();
        for p in &seq {
            assert!(dist(p, &seq[0]).unwrap() < 1e-15);
        }
    }

    #[test]
    fn givens_plane_rotation_matches_closed_form() {
        let theta = 0.3_f64;
        let p1 = Basis::standard(4, &[0]).unwrap();
        let mut b = Array2::<f64>::zeros((4, 4));
        b[[0, 2]] = -1.0;
        b[[2, 0]] = 1.0;
        let p2 = rotate(&p1, b.view(), theta).unwrap();
        assert!((dist(&p1, &p2).unwrap() - theta.sin().abs()).abs() < 1e-14);
    }

    #[test]
    fn generator_is_skew_with_unit_norm() {
        let b = skew_generator(7, &mut rng::stream(2, "t", 0));
        assert!((&b + &b.t()).iter().all(|v| *v == 0.0));
        assert!((spectral_norm(b.view()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_steps_drift_at_most_delta() {
        let seq = gen_rotation_sequence(8, 2, 0.01, 6, 4).unwrap();
        for w in seq.windows(2) {
            assert!(dist(&w[0], &w[1]).unwrap() <= 0.01 * 1.0000001);
        }
    }

    #[test]
    fn geodesic_distance_is_exact() {
        let path = geodesic(20, 3, 0.01, 9).unwrap();
        let a = path.basis_at(4);
        let b = path.basis_at(14);
        assert!((dist(&a, &b).unwrap() - 0.1f64.sin()).abs() < 1e-13);
        assert!(a.orthonormality_error() < 1e-14);
    }

    #[test]
    fn piecewise_spacing_and_constancy() {
        assert!(matches!(
            gen_piecewise_sequence(6, 2, 10, &[3, 5], 2, 0),
            Err(Error::InvalidSpacing(_))
        ));
        assert!(matches!(
            gen_piecewise_sequence(6, 2, 10, &[12], 2, 0),
            Err(Error::InvalidSpacing(_))
        ));
        let seq = gen_piecewise_sequence(6, 2, 10, &[], 2, 0).unwrap();
        assert!(seq.iter().all(|p| *p == seq[0]));
        let seq = gen_piecewise_sequence(6, 2, 10, &[4], 2, 0).unwrap();
        assert_eq!(seq[3], seq[0]);
        assert_eq!(seq[4], seq[9]);
        assert!(seq[4] != seq[3]);
    }

    #[test]
    fn orthogonal_change_has_unit_distance() {
        let a = Basis::standard(6, &[0, 1]).unwrap();
        let b = Basis::standard(6, &[2, 3]).unwrap();
        let seq = piecewise_from_bases(8, &[4], 2, vec![a, b]).unwrap();
        assert_eq!(dist(&seq[3], &seq[4]).unwrap(), 1.0);
    }
}
