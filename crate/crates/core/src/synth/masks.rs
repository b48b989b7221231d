//! Missing-entry masks and sparse outliers.
//!
//! Bounded-fraction generation works one mini-batch at a time: every row has
//! a quota of entries it may contribute within the batch, and each column
//! draws its index set uniformly, retrying when a row would exceed its quota.
//! After 100 rejected draws the column falls back to a deterministic repair
//! that takes the rows with the most remaining quota.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskMode {
    /// Each entry is observed independently with probability `rho`.
    Bernoulli { rho: f64 },
    /// Per-column and per-row (within each mini-batch) missing fractions.
    Bounded { col_frac: f64, row_frac: f64 },
}

/// Sorted missing indices of every column.
pub fn gen_masks(n: usize, d: usize, alpha: usize, mode: MaskMode, seed: u64) -> Result<Vec<Vec<usize>>> {
    match mode {
        MaskMode::Bernoulli { rho } => {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::InvalidParameter(format!("rho = {rho} must lie in (0, 1]")));
            }
            Ok((0..d)
                .map(|t| {
                    let mut s = rng::stream(seed, "mask", t as u64);
                    (0..n).filter(|_| s.random::<f64>() >= rho).collect()
                })
                .collect())
        }
        MaskMode::Bounded { col_frac, row_frac } => {
            let per_col = fraction_count(col_frac, n)?;
            let per_row = fraction_count(row_frac, alpha)?;
            let empty = vec![Vec::new(); d];
            bounded_sets(n, d, alpha, per_col, per_row, &empty, seed, "mask")
        }
    }
}

fn fraction_count(frac: f64, of: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::InvalidParameter(format!("fraction {frac} outside [0, 1]")));
    }
    Ok((frac * of as f64 + 1e-9).floor() as usize)
}

/// For each column draw `per_col` indices avoiding `exclude[t]`, with at most
/// `per_row` hits per row inside each batch of `alpha` columns.
#[allow(clippy::too_many_arguments)]
#[allow(clippy::needless_range_loop)]
fn bounded_sets(
    n: usize,
    d: usize,
    alpha: usize,
    per_col: usize,
    per_row: usize,
    exclude: &[Vec<usize>],
    seed: u64,
    label: &str,
) -> Result<Vec<Vec<usize>>> {
    if alpha == 0 {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    let batch_cols = alpha.min(d.max(1));
    if per_col > 0 && per_col * batch_cols > per_row * n {
        return Err(Error::InfeasibleFractions(format!(
            "{per_col} entries per column over {batch_cols} columns exceed {per_row} per row over {n} rows"
        )));
    }
    let mut out = Vec::with_capacity(d);
    let mut used = vec![0usize; n];
    for t in 0..d {
        if t % alpha == 0 {
            used.iter_mut().for_each(|u| *u = 0);
        }
        if per_col == 0 {
            out.push(Vec::new());
            continue;
        }
        let excluded = &exclude[t];
        let allowed = |i: usize, used: &[usize]| used[i] < per_row && excluded.binary_search(&i).is_err();
        let mut stream = rng::stream(seed, label, t as u64);
        let mut chosen = None;
        for _ in 0..MAX_ATTEMPTS {
            let mut draw: Vec<usize> = sample(&mut stream, n, per_col).into_vec();
            if draw.iter().all(|&i| allowed(i, &used))
                && still_feasible(&used, &draw, per_row, per_col, alpha - 1 - t % alpha)
            {
                draw.sort_unstable();
                chosen = Some(draw);
                break;
            }
        }
        let set = match chosen {
            Some(s) => s,
            None => {
                let mut candidates: Vec<usize> = (0..n).filter(|&i| allowed(i, &used)).collect();
                if candidates.len() < per_col {
                    return Err(Error::InfeasibleFractions(format!(
                        "column {t}: only {} admissible rows for {per_col} entries",
                        candidates.len()
                    )));
                }
                candidates.sort_by_key(|&i| (used[i], i));
                let mut s = candidates[..per_col].to_vec();
                s.sort_unstable();
                s
            }
        };
        for &i in &set {
            used[i] += 1;
        }
        out.push(set);
    }
    Ok(out)
}

/// Whether `remaining` more columns of `per_col` distinct rows can still be
/// placed once `draw` is taken: rows can absorb at most one entry per column,
/// so capacity is `sum_i min(quota_i, remaining)`.
fn still_feasible(used: &[usize], draw: &[usize], per_row: usize, per_col: usize, remaining: usize) -> bool {
    if remaining == 0 {
        return true;
    }
    let mut capacity = 0;
    for (i, &u) in used.iter().enumerate() {
        let taken = u + usize::from(draw.contains(&i));
        capacity += per_row.saturating_sub(taken).min(remaining);
    }
    capacity >= remaining * per_col
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    pub col_frac: f64,
    pub row_frac: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Leave the first mini-batch outlier-free.
    #[serde(default)]
    pub first_batch_clean: bool,
}

/// Outlier support (sorted) and values of one column.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutlierColumn {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

/// Sparse outliers disjoint from `masks`. Magnitudes are uniform on
/// `[s_min, s_max]` with random signs; the first outlier of every batch is set
/// to magnitude exactly `s_min` so the configured minimum is attained.
pub fn gen_outliers(
    n: usize,
    alpha: usize,
    cfg: &OutlierConfig,
    masks: &[Vec<usize>],
    seed: u64,
) -> Result<Vec<OutlierColumn>> {
    if !(cfg.s_min > 0.0 && cfg.s_max >= cfg.s_min) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < s_min <= s_max, got {} and {}",
            cfg.s_min, cfg.s_max
        )));
    }
    let d = masks.len();
    let per_col = fraction_count(cfg.col_frac, n)?;
    let per_row = fraction_count(cfg.row_frac, alpha)?;
    let supports = bounded_sets(n, d, alpha, per_col, per_row, masks, seed, "outlier-support")?;
    let mut out = Vec::with_capacity(d);
    let mut first_in_batch = true;
    for (t, support) in supports.into_iter().enumerate() {
        if t % alpha == 0 {
            first_in_batch = true;
        }
        if cfg.first_batch_clean && t < alpha {
            out.push(OutlierColumn::default());
            continue;
        }
        let mut s = rng::stream(seed, "outlier-value", t as u64);
        let values = support
            .iter()
            .map(|_| {
                let sign = if s.random::<bool>() { 1.0 } else { -1.0 };
                let mag = if first_in_batch {
                    first_in_batch = false;
                    cfg.s_min
                } else {
                    rng::uniform(&mut s, cfg.s_min, cfg.s_max)
                };
                sign * mag
            })
            .collect();
        out.push(OutlierColumn { support, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_one_masks_nothing() {
        let m = gen_masks(20, 10, 5, MaskMode::Bernoulli { rho: 1.0 }, 0).unwrap();
        assert!(m.iter().all(|c| c.is_empty()));
    }

    #[test]
    fn bounded_masks_respect_quotas() {
        let (n, d, alpha) = (50, 40, 20);
        let m = gen_masks(n, d, alpha, MaskMode::Bounded { col_frac: 0.2, row_frac: 0.25 }, 3).unwrap();
        for c in &m {
            assert_eq!(c.len(), 10);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
        for batch in m.chunks(alpha) {
            let mut counts = vec![0; n];
            batch.iter().flatten().for_each(|&i| counts[i] += 1);
            assert!(counts.iter().all(|&c| c <= 5));
        }
    }

    #[test]
    fn tight_quota_forces_repair_and_stays_valid() {
        // 10 columns x 5 entries = 50 = 10 rows x 5: every row exactly full
        let m = gen_masks(10, 10, 10, MaskMode::Bounded { col_frac: 0.5, row_frac: 0.5 }, 1).unwrap();
        let mut counts = [0; 10];
        m.iter().flatten().for_each(|&i| counts[i] += 1);
        assert!(counts.iter().all(|&c| c == 5));
    }

    #[test]
    fn infeasible_fractions_rejected() {
        let r = gen_masks(10, 10, 10, MaskMode::Bounded { col_frac: 0.5, row_frac: 0.1 }, 1);
        assert!(matches!(r, Err(Error::InfeasibleFractions(_))));
    }

    #[test]
    fn outliers_avoid_masks_and_hit_s_min() {
        let n = 40;
        let masks = gen_masks(n, 20, 10, MaskMode::Bernoulli { rho: 0.8 }, 5).unwrap();
        let cfg = OutlierConfig { col_frac: 0.1, row_frac: 0.5, s_min: 2.0, s_max: 5.0, first_batch_clean: false };
        let out = gen_outliers(n, 10, &cfg, &masks, 6).unwrap();
        let mut min_mag = f64::INFINITY;
        for (col, mask) in out.iter().zip(&masks) {
            assert_eq!(col.support.len(), 4);
            assert!(col.support.iter().all(|i| mask.binary_search(i).is_err()));
            for v in &col.values {
                assert!(v.abs() >= 2.0 && v.abs() <= 5.0);
                min_mag = min_mag.min(v.abs());
            }
        }
        assert_eq!(min_mag, 2.0);
    }

    #[test]
    fn clean_first_batch() {
        let masks = vec![Vec::new(); 20];
        let cfg = OutlierConfig { col_frac: 0.1, row_frac: 1.0, s_min: 1.0, s_max: 1.0, first_batch_clean: true };
        let out = gen_outliers(30, 10, &cfg, &masks, 0).unwrap();
        assert!(out[..10].iter().all(|c| c.support.is_empty()));
        assert!(out[10..].iter().all(|c| c.support.len() == 3));
    }
}
