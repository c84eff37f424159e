//! Split-and-merge grouping of a non-increasing eigenvalue list into
//! contiguous clusters with small within-cluster spread and large gaps
//! between clusters.

use serde::{Deserialize, Serialize};

use super::{Result, TrackerError};

/// A contiguous partition with its quality metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub sizes: Vec<usize>,
    /// `λ_max / λ_min` within each cluster.
    pub g_tilde: Vec<f64>,
    /// `λ_max` of the next cluster over `λ_min` of this one; 0 for the last.
    pub h_tilde: Vec<f64>,
}

impl Clustering {
    pub fn from_sizes(lambdas: &[f64], sizes: &[usize]) -> Result<Clustering> {
        check_spectrum(lambdas)?;
        if sizes.iter().sum::<usize>() != lambdas.len() || sizes.contains(&0) {
            return Err(TrackerError::InvalidArgument(format!(
                "cluster sizes {sizes:?} do not partition {} eigenvalues",
                lambdas.len()
            )));
        }
        let mut bounds = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            bounds.push((start, start + s));
            start += s;
        }
        Ok(metrics(lambdas, &bounds))
    }

    pub fn g_max(&self) -> f64 {
        self.g_tilde.iter().copied().fold(0.0, f64::max)
    }

    pub fn h_max(&self) -> f64 {
        self.h_tilde.iter().copied().fold(0.0, f64::max)
    }

    pub fn c_min(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

fn check_spectrum(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(TrackerError::InvalidArgument("no eigenvalues to cluster".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(TrackerError::InvalidArgument("eigenvalues must be positive and finite".into()));
    }
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(TrackerError::InvalidArgument("eigenvalues must be non-increasing".into()));
    }
    Ok(())
}

fn spread(lambdas: &[f64], (a, b): (usize, usize)) -> f64 {
    lambdas[a] / lambdas[b - 1]
}

fn metrics(lambdas: &[f64], bounds: &[(usize, usize)]) -> Clustering {
    let sizes = bounds.iter().map(|(a, b)| b - a).collect();
    let g_tilde = bounds.iter().map(|&c| spread(lambdas, c)).collect();
    let h_tilde = bounds
        .iter()
        .enumerate()
        .map(|(i, &(_, b))| match bounds.get(i + 1) {
            Some(&(next, _)) => lambdas[next] / lambdas[b - 1],
            None => 0.0,
        })
        .collect();
    Clustering { sizes, g_tilde, h_tilde }
}

fn h_max_of(lambdas: &[f64], bounds: &[(usize, usize)]) -> f64 {
    bounds
        .windows(2)
        .map(|w| lambdas[w[1].0] / lambdas[w[0].1 - 1])
        .fold(0.0, f64::max)
}

/// Split-and-merge clustering.
///
/// `split_steps` rounds of splitting each non-flat cluster at the cut that
/// minimizes the larger spread of its halves, followed by greedy merges of
/// neighbours. A merge is taken when it strictly lowers the worst gap ratio
/// and the merged spread stays within `g_cap`.
pub fn cluster_eigenvalues(lambdas: &[f64], split_steps: usize, g_cap: f64) -> Result<Clustering> {
    check_spectrum(lambdas)?;
    if !(g_cap >= 1.0) {
        return Err(TrackerError::InvalidArgument(format!("spread cap must be at least 1, got {g_cap}")));
    }
    let mut bounds = vec![(0, lambdas.len())];
    for _ in 0..split_steps {
        let mut next = Vec::with_capacity(bounds.len() * 2);
        for &(a, b) in &bounds {
            if b - a < 2 || spread(lambdas, (a, b)) <= 1.0 {
                next.push((a, b));
                continue;
            }
            let cut = (a + 1..b)
                .min_by(|&x, &y| {
                    let gx = spread(lambdas, (a, x)).max(spread(lambdas, (x, b)));
                    let gy = spread(lambdas, (a, y)).max(spread(lambdas, (y, b)));
                    gx.total_cmp(&gy)
                })
                .unwrap();
            next.push((a, cut));
            next.push((cut, b));
        }
        if next.len() == bounds.len() {
            break;
        }
        bounds = next;
    }

    loop {
        let current = h_max_of(lambdas, &bounds);
        let mut best: Option<(f64, usize)> = None;
        for i in 0..bounds.len().saturating_sub(1) {
            let merged = (bounds[i].0, bounds[i + 1].1);
            if spread(lambdas, merged) > g_cap {
                continue;
            }
            let mut trial = bounds.clone();
            trial.splice(i..i + 2, [merged]);
            let h = h_max_of(lambdas, &trial);
            if h < current && best.is_none_or(|(bh, _)| h < bh) {
                best = Some((h, i));
            }
        }
        match best {
            Some((_, i)) => {
                let merged = (bounds[i].0, bounds[i + 1].1);
                bounds.splice(i..i + 2, [merged]);
            }
            None => break,
        }
    }
    Ok(metrics(lambdas, &bounds))
}
