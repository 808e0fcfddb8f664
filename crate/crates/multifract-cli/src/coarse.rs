//! Coarse-grained spectrum: exhaustive histogram of local exponents.
//!
//! At depth `n` every cylinder `I` has exponent `α(I) = −log₂ μ(I) / n`.
//! Binning all `2^n` cylinders by exponent and normalising the counts as
//! `log₂ N_n(bin) / n` gives a finite-depth stand-in for the level-set
//! spectrum: a large-deviation argument caps each bin value by the Legendre
//! transform of the scaling curve at the bin's exponent, up to binning
//! resolution. The CLI cross-checks that cap on every shipped config.
//!
//! The bin range is chosen from the measure itself: the extremal exponents
//! at depth `n` are attained by the all-min and all-max digit paths, so
//! `[α_min, α_max]` is computed exactly from per-level weight extremes and
//! padded by one part in 10⁶ to keep the boundary cylinders inside.

use multifract::measure::{enumerate_cylinders_with_cap, WeightSequence};
use multifract::Result;
use serde::{Deserialize, Serialize};

/// Histogram of depth-`n` cylinders by local exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseSpectrum {
    pub depth: u32,
    /// `bins + 1` ascending edges; bin `i` is `[edges[i], edges[i+1])`,
    /// except the last bin which is closed.
    pub edges: Vec<f64>,
    /// Cylinders per bin; sums to `2^depth`.
    pub counts: Vec<u64>,
    /// `log₂(count) / depth` per bin; `-inf` marks an empty bin.
    pub normalized: Vec<f64>,
}

impl CoarseSpectrum {
    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bin all `2^depth` cylinders of `seq` by local exponent.
///
/// Exponents land in `[α_min, α_max]` computed from the per-level extremes,
/// so the auto-ranged histogram never clips; a degenerate range (uniform
/// measure) widens to `±1/depth` around the single exponent.
pub fn coarse_spectrum(
    seq: &WeightSequence,
    depth: u32,
    bins: usize,
    cap: u32,
) -> Result<CoarseSpectrum> {
    assert!(bins > 0, "bin count must be positive");
    let n = depth as f64;

    // Exact exponent range from per-level extremes.
    let (mut lo_sum, mut hi_sum) = (0.0f64, 0.0f64);
    for (j, w) in seq.weights().enumerate() {
        if j as u32 >= depth {
            break;
        }
        let a = -w.value().log2();
        let b = -w.complement().log2();
        lo_sum += a.min(b);
        hi_sum += a.max(b);
    }
    let (mut lo, mut hi) = (lo_sum / n, hi_sum / n);
    if hi - lo < 1e-12 {
        lo -= 1.0 / n;
        hi += 1.0 / n;
    }
    let pad = (hi - lo) * 1e-6;
    lo -= pad;
    hi += pad;

    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for (_path, mass) in enumerate_cylinders_with_cap(seq, depth, cap)? {
        let alpha = -mass.log2() / n;
        let idx = (((alpha - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }

    let normalized = counts
        .iter()
        .map(|&c| {
            if c == 0 {
                f64::NEG_INFINITY
            } else {
                (c as f64).log2() / n
            }
        })
        .collect();
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();

    Ok(CoarseSpectrum {
        depth,
        edges,
        counts,
        normalized,
    })
}
