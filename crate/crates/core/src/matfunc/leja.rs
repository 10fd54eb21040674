//! Leja points by maximization over a fixed candidate grid.

use std::sync::Mutex;

use super::SpectralInterval;
use crate::error::{Error, Result};

/// Size of the uniform candidate grid on `[-2, 2]`. Odd, so 0 is a candidate.
pub const LEJA_CANDIDATES: usize = 100_001;

struct LejaCache {
    nodes: Vec<f64>,
    /// `Σ_j ln|g_i - x_j|` over the nodes found so far.
    log_prod: Vec<f64>,
}

static CACHE: Mutex<Option<LejaCache>> = Mutex::new(None);

fn candidate(i: usize) -> f64 {
    -2.0 + 4.0 * i as f64 / (LEJA_CANDIDATES - 1) as f64
}

/// First `count` Leja points of `[-2, 2]` starting at `x₀ = 2`. Each further point
/// maximizes `Π_j |x - x_j|` over the candidate grid, ties going to the smallest
/// candidate.
pub fn canonical_leja(count: usize) -> Result<Vec<f64>> {
    if count > LEJA_CANDIDATES {
        return Err(Error::invalid(format!(
            "{count} Leja points requested, candidate grid has {LEJA_CANDIDATES}"
        )));
    }
    let mut guard = CACHE.lock().unwrap_or_else(|p| p.into_inner());
    let cache = guard.get_or_insert_with(|| LejaCache {
        nodes: Vec::new(),
        log_prod: vec![0.0; LEJA_CANDIDATES],
    });
    while cache.nodes.len() < count {
        let next = if cache.nodes.is_empty() {
            2.0
        } else {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (i, &v) in cache.log_prod.iter().enumerate() {
                if v > best_val {
                    best_val = v;
                    best = i;
                }
            }
            candidate(best)
        };
        for (i, lp) in cache.log_prod.iter_mut().enumerate() {
            *lp += (candidate(i) - next).abs().ln();
        }
        cache.nodes.push(next);
    }
    Ok(cache.nodes[..count].to_vec())
}

/// Leja points of `interval`: canonical points mapped by `x = c + γξ`. A degenerate
/// interval yields its single point.
pub fn leja_points(interval: &SpectralInterval, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("at least one Leja point is needed"));
    }
    if interval.is_degenerate() {
        return Ok(vec![interval.a]);
    }
    let (c, g) = (interval.center(), interval.gamma());
    Ok(canonical_leja(count)?.into_iter().map(|xi| c + g * xi).collect())
}
