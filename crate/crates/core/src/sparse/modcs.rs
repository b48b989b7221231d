//! Modified compressed sensing:
//! `min ||x_{M^c}||_1  subject to  ||y~ - Psi x|| <= xi`.
//!
//! The constrained problem is reached through the penalized family
//! `F_mu(x) = ||w o x||_1 + ||Psi x - y~||^2 / (2 mu)` with `w = 0` on the
//! known support `M` and `1` elsewhere. Since `Psi` is an orthogonal
//! projector the smooth part has Lipschitz constant exactly `1 / mu`, so the
//! accelerated proximal step uses step size `mu` and reduces to
//! `x <- soft(P P^T v + y~, mu w)`.
//!
//! Proximal iterations only identify the active pattern (support and signs).
//! Once a pattern is guessed, the minimizer of `F_mu` restricted to it solves
//! `(I - B B^T) x_T = y~_T - mu s_T` (the same Woodbury system as the
//! projected LS fill), and the optimality conditions are checked on the
//! remaining coordinates. Accepted points are exact to rounding.
//!
//! The residual `||Psi x_mu - y~||` grows with `mu`, so `mu` is decreased
//! geometrically until the constraint holds and then bisected between the
//! last infeasible and the first feasible value. When both ends share a
//! pattern the path between them is affine in `mu`, and the penalty that
//! makes the constraint active is the root of a quadratic.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Basis, RestrictedSystem};

/// Relative slack accepted on the residual constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-9;
const POLISH_EVERY: usize = 8;
const MAX_PENALTY_STEPS: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Budget of proximal-gradient iterations summed over all penalty values.
    pub max_iters: usize,
    /// Relative bracket width at which the penalty search stops.
    pub tol: f64,
    /// Factor (in `(0, 1)`) applied to the penalty while no feasible point is known.
    pub continuation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iters: 20_000, tol: 1e-10, continuation: 0.25 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) || !(self.continuation > 0.0 && self.continuation < 1.0) {
            return Err(Error::Config("solver needs max_iters >= 1, tol > 0, 0 < continuation < 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModCsSolution {
    pub x: Array1<f64>,
    /// `||x_{M^c}||_1`.
    pub objective: f64,
    /// `||y~ - Psi x||`.
    pub residual: f64,
    /// Proximal-gradient iterations spent.
    pub iterations: usize,
    /// Objective of the feasible incumbent each time it was replaced.
    pub objective_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct Pattern {
    support: Vec<usize>,
    /// `+1`/`-1` off the known support, `0` on it.
    signs: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Eval {
    x: Array1<f64>,
    residual: f64,
    objective: f64,
    pattern: Option<Pattern>,
}

struct Problem<'a> {
    phat: &'a Basis,
    target: Array1<f64>,
    /// `||y~ - Psi y~||^2`, the part of the residual no `x` can remove.
    floor_sq: f64,
    known: Vec<bool>,
}

impl Problem<'_> {
    fn residual(&self, x: &Array1<f64>) -> f64 {
        let d = &self.phat.project_out(x.view()) - &self.target;
        (d.dot(&d) + self.floor_sq).sqrt()
    }

    fn objective(&self, x: &Array1<f64>) -> f64 {
        x.iter().zip(&self.known).filter(|(_, k)| !**k).map(|(v, _)| v.abs()).sum()
    }

    fn pattern_of(&self, x: &Array1<f64>) -> Pattern {
        let mut support = Vec::new();
        let mut signs = Vec::new();
        for (i, (&v, &k)) in x.iter().zip(&self.known).enumerate() {
            if k {
                support.push(i);
                signs.push(0.0);
            } else if v != 0.0 {
                support.push(i);
                signs.push(v.signum());
            }
        }
        Pattern { support, signs }
    }

    fn embed(&self, pattern: &Pattern, z: &Array1<f64>) -> Array1<f64> {
        let mut x = Array1::zeros(self.target.len());
        for (a, &i) in pattern.support.iter().enumerate() {
            x[i] = z[a];
        }
        x
    }

    /// `(a, b)` with `x_T(mu) = a - mu b` on the pattern's support.
    fn affine_path(&self, pattern: &Pattern) -> Option<(Array1<f64>, Array1<f64>)> {
        let sys = RestrictedSystem::new(self.phat, &pattern.support).ok()?;
        let rhs = Array1::from_iter(pattern.support.iter().map(|&i| self.target[i]));
        let a = sys.solve(rhs.view());
        let b = sys.solve(Array1::from(pattern.signs.clone()).view());
        Some((a, b))
    }

    /// Exact minimizer of `F_mu` if `pattern` is the optimal one.
    fn polish(&self, mu: f64, pattern: &Pattern, path: Option<&(Array1<f64>, Array1<f64>)>) -> Option<Array1<f64>> {
        let owned;
        let (a, b) = match path {
            Some(p) => p,
            None => {
                owned = self.affine_path(pattern)?;
                &owned
            }
        };
        let z = a - &(b * mu);
        if pattern.signs.iter().zip(z.iter()).any(|(&s, &v)| s != 0.0 && v * s <= 0.0) {
            return None;
        }
        let x = self.embed(pattern, &z);
        let g = &self.phat.project_out(x.view()) - &self.target;
        let mut in_support = vec![false; x.len()];
        for &i in &pattern.support {
            in_support[i] = true;
        }
        let bound = mu * (1.0 + KKT_TOL);
        if g.iter().zip(&in_support).any(|(gi, &s)| !s && gi.abs() > bound) {
            return None;
        }
        Some(x)
    }

    fn eval(&self, x: Array1<f64>, exact: bool) -> Eval {
        let pattern = exact.then(|| self.pattern_of(&x));
        Eval { residual: self.residual(&x), objective: self.objective(&x), pattern, x }
    }

    /// Minimize `F_mu` from `x0` with at most `budget` accelerated steps.
    fn penalized(&self, mu: f64, x0: &Array1<f64>, budget: usize) -> (Eval, usize) {
        let pattern = self.pattern_of(x0);
        if let Some(x) = self.polish(mu, &pattern, None) {
            return (self.eval(x, true), 0);
        }
        let mut x = x0.clone();
        let mut v = x0.clone();
        let mut t = 1.0f64;
        for k in 1..=budget {
            // gradient step with step mu: v - (Psi v - y~) = P P^T v + y~
            let z = &v - &self.phat.project_out(v.view()) + &self.target;
            let xn = Array1::from_iter(z.iter().zip(&self.known).map(|(&zi, &known)| {
                if known {
                    zi
                } else {
                    zi.signum() * (zi.abs() - mu).max(0.0)
                }
            }));
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let step = &xn - &x;
            v = &xn + &(&step * ((t - 1.0) / tn));
            let moved = step.dot(&step).sqrt();
            x = xn;
            t = tn;
            let stalled = moved <= 1e-15 * x.dot(&x).sqrt().max(1.0);
            if k % POLISH_EVERY == 0 || stalled {
                let pattern = self.pattern_of(&x);
                if let Some(xp) = self.polish(mu, &pattern, None) {
                    return (self.eval(xp, true), k);
                }
                if stalled {
                    return (self.eval(x, false), k);
                }
            }
        }
        (self.eval(x, false), budget)
    }

    /// Penalty in `[lo, hi]` at which the affine path of `pattern` has residual
    /// `target_residual`.
    fn root_on_path(&self, pattern: &Pattern, lo: f64, hi: f64, target_residual: f64) -> Option<(f64, Array1<f64>)> {
        let path = self.affine_path(pattern)?;
        let e_sq = target_residual * target_residual - self.floor_sq;
        if e_sq <= 0.0 {
            return None;
        }
        let u = &self.phat.project_out(self.embed(pattern, &path.0).view()) - &self.target;
        let v = self.phat.project_out(self.embed(pattern, &path.1).view());
        let (uu, uv, vv) = (u.dot(&u), u.dot(&v), v.dot(&v));
        if vv <= 0.0 {
            return None;
        }
        // ||u - mu v||^2 = e^2
        let disc = uv * uv - vv * (uu - e_sq);
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let mu = [(uv + root) / vv, (uv - root) / vv]
            .into_iter()
            .filter(|m| *m >= lo * (1.0 - 1e-12) && *m <= hi * (1.0 + 1e-12))
            .fold(f64::NAN, f64::max);
        if !mu.is_finite() || mu <= 0.0 {
            return None;
        }
        self.polish(mu, pattern, Some(&path)).map(|x| (mu, x))
    }
}

/// Solve the modified-CS program for `y_tilde` (usually `Psi y`) with known
/// support `known`. The zero vector is returned when it is feasible.
pub fn solve_modcs(
    phat: &Basis,
    y_tilde: ArrayView1<f64>,
    known: &[usize],
    xi: f64,
    cfg: &SolverConfig,
) -> Result<ModCsSolution> {
    let n = phat.n();
    if y_tilde.len() != n {
        return Err(Error::dims(format!("length {n}"), y_tilde.len()));
    }
    if let Some(&bad) = known.iter().find(|&&i| i >= n) {
        return Err(Error::dims(format!("index < {n}"), bad));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!("xi must be positive, got {xi}")));
    }
    cfg.validate()?;

    let y_norm = y_tilde.dot(&y_tilde).sqrt();
    if y_norm <= xi {
        return Ok(ModCsSolution {
            x: Array1::zeros(n),
            objective: 0.0,
            residual: y_norm,
            iterations: 0,
            objective_trace: vec![0.0],
        });
    }
    let target = phat.project_out(y_tilde);
    let off = &y_tilde - &target;
    let mut mask = vec![false; n];
    for &i in known {
        mask[i] = true;
    }
    let prob = Problem { phat, target, floor_sq: off.dot(&off), known: mask };
    let feasible_at = xi * (1.0 + FEASIBILITY_TOL);
    if prob.floor_sq.sqrt() > feasible_at {
        return Err(Error::SolverDidNotConverge { iterations: 0, residual: prob.floor_sq.sqrt(), xi });
    }

    // mu -> infinity: x vanishes off M and x_M is the least-squares fit
    let mut known_sorted: Vec<usize> = known.to_vec();
    known_sorted.sort_unstable();
    known_sorted.dedup();
    let start = if known_sorted.is_empty() {
        Some(Array1::zeros(n))
    } else {
        let pattern = Pattern { signs: vec![0.0; known_sorted.len()], support: known_sorted };
        prob.affine_path(&pattern).map(|(a, _)| prob.embed(&pattern, &a))
    };
    let mut iterations = 0;
    let mut hi: Option<(f64, Eval)> = None;
    let mut lo: Option<(f64, Eval)> = None;
    let mut incumbent: Option<Eval> = None;
    let mut trace = Vec::new();

    let accept = |e: &Eval, incumbent: &mut Option<Eval>, trace: &mut Vec<f64>| {
        if incumbent.as_ref().is_none_or(|b| e.objective <= b.objective) {
            trace.push(e.objective);
            *incumbent = Some(e.clone());
        }
    };

    let (mut mu, x0) = match start {
        Some(x) => {
            let e = prob.eval(x, true);
            if e.residual <= feasible_at {
                trace.push(e.objective);
                return Ok(ModCsSolution {
                    objective: e.objective,
                    residual: e.residual,
                    x: e.x,
                    iterations: 0,
                    objective_trace: trace,
                });
            }
            let g = &prob.phat.project_out(e.x.view()) - &prob.target;
            let mu0 = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let x = e.x.clone();
            hi = Some((mu0, e));
            (mu0 * cfg.continuation, x)
        }
        None => (prob.target.iter().fold(0.0f64, |m, v| m.max(v.abs())), Array1::zeros(n)),
    };

    // bracket: hi infeasible, lo feasible
    let mut warm = x0;
    let mut steps = 0;
    while lo.is_none() || hi.is_none() {
        steps += 1;
        let budget = cfg.max_iters.saturating_sub(iterations);
        if steps > MAX_PENALTY_STEPS || budget == 0 || !(mu > 0.0) {
            break;
        }
        let (e, k) = prob.penalized(mu, &warm, budget);
        iterations += k;
        warm = e.x.clone();
        if e.residual <= feasible_at {
            accept(&e, &mut incumbent, &mut trace);
            lo = Some((mu, e));
            if hi.is_none() {
                mu /= cfg.continuation;
            }
        } else {
            hi = Some((mu, e));
            if lo.is_none() {
                mu *= cfg.continuation;
            }
        }
    }

    // bisection on log(mu), finishing on the affine path when possible
    while let (Some((mlo, elo)), Some((mhi, ehi))) = (&lo, &hi) {
        if mhi / mlo - 1.0 <= cfg.tol || elo.residual >= xi * (1.0 - cfg.tol) {
            break;
        }
        if let (Some(pl), Some(ph)) = (&elo.pattern, &ehi.pattern) {
            if pl == ph {
                if let Some((_, x)) = prob.root_on_path(pl, *mlo, *mhi, xi * (1.0 - 1e-12)) {
                    let e = prob.eval(x, true);
                    if e.residual <= feasible_at {
                        accept(&e, &mut incumbent, &mut trace);
                        break;
                    }
                }
            }
        }
        steps += 1;
        let budget = cfg.max_iters.saturating_sub(iterations);
        if steps > MAX_PENALTY_STEPS || budget == 0 {
            break;
        }
        let mid = (mlo * mhi).sqrt();
        let (e, k) = prob.penalized(mid, &elo.x, budget);
        iterations += k;
        if e.residual <= feasible_at {
            accept(&e, &mut incumbent, &mut trace);
            lo = Some((mid, e));
        } else {
            hi = Some((mid, e));
        }
    }

    match incumbent {
        Some(e) => Ok(ModCsSolution {
            objective: e.objective,
            residual: e.residual,
            x: e.x,
            iterations,
            objective_trace: trace,
        }),
        None => Err(Error::SolverDidNotConverge {
            iterations,
            residual: hi.map_or(f64::INFINITY, |(_, e)| e.residual),
            xi,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{modcs_dual_bound, subgradient_modcs};
    use crate::rng::{gaussian_matrix, stream};
    use crate::synth::random_basis;
    use ndarray::array;

    #[test]
    fn zero_target_gives_zero() {
        let p = random_basis(10, 2, &mut stream(1, "basis", 0)).unwrap();
        let sol = solve_modcs(&p, Array1::zeros(10).view(), &[1], 0.1, &SolverConfig::default()).unwrap();
        assert_eq!(sol.x, Array1::<f64>::zeros(10));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn single_spike_is_shrunk_by_xi() {
        // Psi = I - e1 e1^T, y~ = 5 e3: the solution is (5 - xi) e3
        let p = Basis::standard(4, &[0]).unwrap();
        let y = array![0.0, 0.0, 5.0, 0.0];
        let sol = solve_modcs(&p, y.view(), &[], 0.5, &SolverConfig::default()).unwrap();
        assert!((sol.x[2] - 4.5).abs() < 1e-12, "{:?}", sol.x);
        assert!((sol.objective - 4.5).abs() < 1e-12);
        assert!(sol.residual <= 0.5 * (1.0 + 1e-9));
    }

    #[test]
    fn known_support_is_free() {
        let p = Basis::standard(4, &[0]).unwrap();
        let y = array![0.0, 0.0, 5.0, 0.0];
        let sol = solve_modcs(&p, y.view(), &[2], 0.5, &SolverConfig::default()).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn matches_reference_solvers_on_toy_instances() {
        for seed in 0..5u64 {
            let n = 30;
            let p = random_basis(n, 3, &mut stream(seed, "basis", 0)).unwrap();
            let mut rng = stream(seed, "modcs-toy", 0);
            let noise = gaussian_matrix(&mut rng, n, 1).column(0).to_owned() * 0.05;
            let mut x = Array1::zeros(n);
            x[3] = 4.0;
            x[11] = -3.0;
            x[20] = 2.5;
            x[7] = 1.0;
            let y = p.project_out((&x + &noise).view());
            let known = [7usize, 20];
            let xi = 0.3;
            let sol = solve_modcs(&p, y.view(), &known, xi, &SolverConfig::default()).unwrap();
            assert!(sol.residual <= xi * (1.0 + 1e-6));
            // upper side: slow projected-subgradient reference
            let (_, ref_obj) = subgradient_modcs(p.view(), y.view(), &known, xi, 200_000);
            assert!(sol.objective <= ref_obj + 1e-4, "seed {seed}: {} vs {}", sol.objective, ref_obj);
            // lower side: dense weak-duality certificate
            let direction = &y - &p.project_out(sol.x.view());
            let lower = modcs_dual_bound(p.view(), y.view(), &known, xi, direction.view());
            assert!(sol.objective - lower <= 1e-6 * sol.objective, "seed {seed}: {} vs {lower}", sol.objective);
        }
    }

    #[test]
    fn incumbent_objective_never_increases() {
        let n = 40;
        let p = random_basis(n, 4, &mut stream(9, "basis", 0)).unwrap();
        let mut rng = stream(9, "modcs-trace", 0);
        let y = p.project_out(gaussian_matrix(&mut rng, n, 1).column(0));
        let sol = solve_modcs(&p, y.view(), &[0, 1], 0.5, &SolverConfig::default()).unwrap();
        assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*sol.objective_trace.last().unwrap(), sol.objective);
    }

    #[test]
    fn unreachable_constraint_raises() {
        // y~ has energy inside range(P) that Psi x can never cancel
        let p = Basis::standard(3, &[0]).unwrap();
        let y = array![2.0, 0.0, 0.0];
        let err = solve_modcs(&p, y.view(), &[], 1.0, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SolverDidNotConverge { .. }));
    }
}
