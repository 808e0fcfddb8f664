//! Weight sequences, dyadic cylinders, and measure evaluation.
//!
//! A measure here is determined by its weight sequence `(p_n)_{n≥1}`,
//! `p_n ∈ (0,1)`: the cylinder `[ε_1 … ε_n]` has mass
//! `∏_j p_j^{1-ε_j}(1-p_j)^{ε_j}`. The digit convention is fixed once and
//! for all: **digit `0` at level `j` carries weight `p_j`, digit `1` carries
//! `1-p_j`**. Depths and positions are 1-based.
//!
//! Weight sequences come in six shapes, from the trivial to the synthetic:
//!
//! * [`WeightSequence::Constant`] — the classical binomial measure;
//! * [`WeightSequence::Explicit`] — a finite prefix, extended past its end
//!   by repeating the final weight (so every position has a weight);
//! * [`WeightSequence::Periodic`] — a finite list cycled forever;
//! * [`WeightSequence::Quota`] — a lazy interleaving that realises a convex
//!   combination `Σ λ_i τ(p_i, ·)` of branch curves: position by position it
//!   emits the component whose realised share lags its quota `λ_i` the most,
//!   keeping every prefix count within one of `λ_i n`;
//! * [`WeightSequence::Blocks`] — finitely many sub-sequences spliced along
//!   a block-length schedule, sub-sequence `i` active on blocks
//!   `k ≡ i (mod m)` and resuming its own internal position across blocks;
//! * [`WeightSequence::Diagonal`] — a stage list spliced depth-aligned:
//!   block `k` copies stage `min(k, M)`'s weights *at the same absolute
//!   depths*, the shape taken by diagonal limits of a sequence of
//!   constructions.
//!
//! All sequences are conceptually infinite; [`WeightSequence::weights`]
//! returns an infinite iterator and is the intended access path for deep
//! scans. [`WeightSequence::weight_at`] is provided for point queries but
//! replays the sequence for the scheduled variants (cost `O(n)`).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Exhaustive cylinder enumeration refuses to go deeper than this unless an
/// explicit cap is supplied (`2^22` cylinders ≈ 4M rows is already hefty).
pub const DEFAULT_ENUMERATION_CAP: u32 = 22;

/// Tolerance on "these coefficients sum to 1" checks.
pub const COEFFICIENT_SUM_TOLERANCE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Weight
// ---------------------------------------------------------------------------

/// A branching weight, strictly inside `(0,1)`.
///
/// `1/2` is allowed (it makes the level uniform); `0` and `1` are not, since
/// they collapse cylinders to null sets and break every logarithm downstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Weight(f64);

impl Weight {
    /// Validate and wrap a weight.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Weight(value))
        } else {
            Err(Error::InvalidWeight { value })
        }
    }

    /// The numeric value, guaranteed to lie in `(0,1)`.
    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// The complementary weight `1 - p` (weight of digit `1`).
    #[inline]
    pub fn complement(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for Weight {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Weight::new(value)
    }
}

impl From<Weight> for f64 {
    fn from(w: Weight) -> f64 {
        w.0
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Validate a whole slice of weights at once.
fn validate_weights(values: &[f64]) -> Result<Vec<Weight>> {
    values.iter().map(|&v| Weight::new(v)).collect()
}

// ---------------------------------------------------------------------------
// CylinderPath
// ---------------------------------------------------------------------------

/// A finite binary word addressing a dyadic cylinder.
///
/// The empty word addresses the whole space. Bit `j` (1-based) is the digit
/// `ε_j`; rendered as a string the word reads left to right, so `"01"` is
/// the cylinder `[0,1]` of depth 2 (the dyadic interval `[1/4, 1/2)`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CylinderPath {
    bits: Vec<bool>,
}

impl CylinderPath {
    /// The whole space (depth 0).
    pub fn root() -> Self {
        CylinderPath { bits: Vec::new() }
    }

    /// Build from digits; anything nonzero counts as digit 1.
    pub fn from_digits(digits: &[u8]) -> Self {
        CylinderPath {
            bits: digits.iter().map(|&d| d != 0).collect(),
        }
    }

    /// Build from raw bits.
    pub fn from_bits(bits: Vec<bool>) -> Self {
        CylinderPath { bits }
    }

    /// Depth of the cylinder (number of digits).
    #[inline]
    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    /// True if this is the whole space.
    #[inline]
    pub fn is_root(&self) -> bool {
        self.bits.is_empty()
    }

    /// The digits as booleans (`false` = digit 0).
    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Child obtained by appending one digit.
    pub fn child(&self, digit_one: bool) -> Self {
        let mut bits = self.bits.clone();
        bits.push(digit_one);
        CylinderPath { bits }
    }

    /// Number of `1` digits (handy for sampling statistics).
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

// Renders the word as "0101…"; the empty word renders as the empty string.
impl fmt::Display for CylinderPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for CylinderPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => {
                    return Err(Error::InvalidParameter {
                        detail: format!("cylinder word may only contain 0/1, got {c:?}"),
                    })
                }
            }
        }
        Ok(CylinderPath { bits })
    }
}

// ---------------------------------------------------------------------------
// Block rules
// ---------------------------------------------------------------------------

/// A schedule of block lengths `ℓ_1, ℓ_2, …` used by the spliced variants.
///
/// The limit theory wants blocks that grow *superexponentially*: the ratio
/// `ℓ_{k+1} / (ℓ_1 + … + ℓ_k)` should be non-decreasing (so late blocks
/// swamp everything before them). [`BlockRule::is_superexponential`] probes
/// that property; the geometric rule fails it (its ratio decreases towards
/// `g-1`) and is kept as an explicitly weak, shallow-depth demo schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlockRule {
    /// `ℓ_k = ⌈growth^(k²)⌉` — the default; comfortably superexponential.
    Squared { growth: f64 },
    /// `ℓ_k = ⌈growth^k⌉` — demo schedule for shallow experiments; its
    /// ratio test *fails* (divergence holds only weakly).
    Geometric { growth: f64 },
    /// `ℓ_1 = first`, then `ℓ_{k+1} = factor · (ℓ_1 + … + ℓ_k)`; constant
    /// ratio, the lightest schedule that still passes the ratio test.
    Ratio { first: u64, factor: u64 },
    /// Explicit lengths; past the end the final length repeats forever
    /// (useful for truncated scenarios probed only to a finite depth).
    Lengths { lengths: Vec<u64> },
}

impl BlockRule {
    /// The default rule `ℓ_k = ⌈2^(k²)⌉`.
    pub fn default_squared() -> Self {
        BlockRule::Squared { growth: 2.0 }
    }

    /// Validate parameters (growth factors above 1, no empty blocks).
    pub fn validate(&self) -> Result<()> {
        match self {
            BlockRule::Squared { growth } | BlockRule::Geometric { growth } => {
                if !(growth.is_finite() && *growth > 1.0) {
                    return Err(Error::InvalidParameter {
                        detail: format!("block growth must be a finite number > 1, got {growth}"),
                    });
                }
            }
            BlockRule::Ratio { first, factor } => {
                if *first == 0 {
                    return Err(Error::EmptyBlock { index: 1 });
                }
                if *factor == 0 {
                    return Err(Error::InvalidParameter {
                        detail: "ratio rule needs factor >= 1".to_string(),
                    });
                }
            }
            BlockRule::Lengths { lengths } => {
                if lengths.is_empty() {
                    return Err(Error::Empty {
                        what: "block length list",
                    });
                }
                if let Some(i) = lengths.iter().position(|&l| l == 0) {
                    return Err(Error::EmptyBlock { index: i + 1 });
                }
            }
        }
        Ok(())
    }

    /// Length of block `k` (1-based). Saturates at `u64::MAX` once the rule
    /// overflows; no realisable depth gets anywhere near that.
    pub fn length(&self, k: u64) -> u64 {
        debug_assert!(k >= 1);
        match self {
            BlockRule::Squared { growth } => {
                let e = (k as f64) * (k as f64);
                saturating_pow_ceil(*growth, e)
            }
            BlockRule::Geometric { growth } => saturating_pow_ceil(*growth, k as f64),
            BlockRule::Ratio { first, factor } => {
                // ℓ_1 = first; totals multiply by (1+factor) each block, so
                // ℓ_k = first·factor·(1+factor)^(k-2) for k ≥ 2.
                if k == 1 {
                    *first
                } else {
                    let base = (*first as u128).saturating_mul(*factor as u128);
                    let grown = (1u128 + *factor as u128)
                        .checked_pow((k - 2).min(u32::MAX as u64) as u32)
                        .map(|g| base.saturating_mul(g))
                        .unwrap_or(u128::MAX);
                    grown.min(u64::MAX as u128) as u64
                }
            }
            BlockRule::Lengths { lengths } => {
                let idx = ((k - 1) as usize).min(lengths.len() - 1);
                lengths[idx]
            }
        }
    }

    /// Cumulative depths `L_k = ℓ_1 + … + ℓ_k` for all `L_k ≤ max_depth`.
    pub fn block_ends(&self, max_depth: u64) -> Vec<u64> {
        let mut ends = Vec::new();
        let mut total: u64 = 0;
        let mut k = 1u64;
        loop {
            let len = self.length(k);
            total = total.saturating_add(len);
            if total > max_depth {
                break;
            }
            ends.push(total);
            if total == u64::MAX {
                break;
            }
            k += 1;
        }
        ends
    }

    /// Probe whether `ℓ_{k+1} / L_k` is non-decreasing over the first
    /// `probe` blocks (exact integer cross-multiplication, no rounding).
    pub fn is_superexponential(&self, probe: u64) -> bool {
        let mut total: u128 = self.length(1) as u128;
        let mut prev_num: u128 = self.length(2) as u128; // ℓ_{k+1}
        let mut prev_den: u128 = total; // L_k
        for k in 2..=probe.max(2) {
            total += self.length(k) as u128;
            let num = self.length(k + 1) as u128;
            let den = total;
            if num >= u64::MAX as u128 || den >= u64::MAX as u128 {
                // A saturated length caps the computed ratios at nonsense
                // values; the true lengths out here dwarf every realisable
                // depth, so growth up to this point settles the question.
                break;
            }
            // require ℓ_{k+1}/L_k ≥ previous ratio: num/den ≥ prev_num/prev_den
            if num.saturating_mul(prev_den) < prev_num.saturating_mul(den) {
                return false;
            }
            prev_num = num;
            prev_den = den;
        }
        true
    }
}

/// `⌈base^exponent⌉` as a `u64`, saturating.
fn saturating_pow_ceil(base: f64, exponent: f64) -> u64 {
    let v = base.powf(exponent).ceil();
    if v >= u64::MAX as f64 {
        u64::MAX
    } else if v < 1.0 {
        1
    } else {
        v as u64
    }
}

// ---------------------------------------------------------------------------
// WeightSequence
// ---------------------------------------------------------------------------

/// One convex component of a [`WeightSequence::Quota`] interleaving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotaComponent {
    /// Asymptotic share of positions, in `(0,1]`; shares sum to 1.
    pub lambda: f64,
    /// The weight emitted at this component's positions.
    pub p: Weight,
}

/// An infinite weight sequence `(p_n)`, `p_n ∈ (0,1)`.
///
/// See the [module docs](self) for the catalogue of variants and the digit
/// convention. Construct through the checked constructors; a deserialized
/// value should be passed through [`WeightSequence::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightSequence {
    /// `p_n = p` for all `n`.
    Constant { p: Weight },
    /// Listed weights; past the end the final weight repeats forever.
    Explicit { weights: Vec<Weight> },
    /// Listed weights cycled forever.
    Periodic { weights: Vec<Weight> },
    /// Deficit-driven interleaving honouring per-component quotas; every
    /// prefix of length `n` contains component `i` either `⌊λ_i n⌋` or
    /// `⌈λ_i n⌉` times (largest-remainder-style fairness, realised
    /// greedily so the sequence can be emitted lazily).
    Quota { components: Vec<QuotaComponent> },
    /// Sub-sequences spliced along a block schedule; part `i` (0-based) is
    /// active on blocks `k ≡ i+1 (mod m)` and keeps its own running
    /// position across its blocks.
    Blocks {
        parts: Vec<WeightSequence>,
        rule: BlockRule,
    },
    /// Stages spliced depth-aligned: on block `k` the sequence copies stage
    /// `min(k, M)` *at the same absolute depths*; stage `M` owns every block
    /// from `M` on.
    Diagonal {
        stages: Vec<WeightSequence>,
        rule: BlockRule,
    },
}

impl WeightSequence {
    /// Constant sequence.
    pub fn constant(p: f64) -> Result<Self> {
        Ok(WeightSequence::Constant { p: Weight::new(p)? })
    }

    /// Finite list, extended by repeating its last entry.
    pub fn explicit(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty {
                what: "explicit weight list",
            });
        }
        Ok(WeightSequence::Explicit {
            weights: validate_weights(&weights)?,
        })
    }

    /// Finite list cycled forever.
    pub fn periodic(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty {
                what: "periodic weight list",
            });
        }
        Ok(WeightSequence::Periodic {
            weights: validate_weights(&weights)?,
        })
    }

    /// Quota interleaving of `(lambda, p)` components.
    pub fn quota(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty {
                what: "quota component list",
            });
        }
        let mut out = Vec::with_capacity(components.len());
        let mut sum = 0.0;
        for &(lambda, p) in &components {
            if !(lambda.is_finite() && lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::InvalidCoefficient { value: lambda });
            }
            sum += lambda;
            out.push(QuotaComponent {
                lambda,
                p: Weight::new(p)?,
            });
        }
        if (sum - 1.0).abs() > COEFFICIENT_SUM_TOLERANCE {
            return Err(Error::CoefficientSum {
                sum,
                tolerance: COEFFICIENT_SUM_TOLERANCE,
            });
        }
        Ok(WeightSequence::Quota { components: out })
    }

    /// Block splice of `parts` along `rule`.
    pub fn blocks(parts: Vec<WeightSequence>, rule: BlockRule) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Empty {
                what: "block part list",
            });
        }
        rule.validate()?;
        for p in &parts {
            p.validate()?;
        }
        Ok(WeightSequence::Blocks { parts, rule })
    }

    /// Depth-aligned stage splice along `rule`.
    pub fn diagonal(stages: Vec<WeightSequence>, rule: BlockRule) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Empty {
                what: "diagonal stage list",
            });
        }
        rule.validate()?;
        for s in &stages {
            s.validate()?;
        }
        Ok(WeightSequence::Diagonal { stages, rule })
    }

    /// Re-check every structural invariant (useful after deserializing).
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSequence::Constant { .. } => Ok(()),
            WeightSequence::Explicit { weights } | WeightSequence::Periodic { weights } => {
                if weights.is_empty() {
                    Err(Error::Empty {
                        what: "weight list",
                    })
                } else {
                    Ok(())
                }
            }
            WeightSequence::Quota { components } => {
                if components.is_empty() {
                    return Err(Error::Empty {
                        what: "quota component list",
                    });
                }
                let mut sum = 0.0;
                for c in components {
                    if !(c.lambda.is_finite() && c.lambda > 0.0 && c.lambda <= 1.0) {
                        return Err(Error::InvalidCoefficient { value: c.lambda });
                    }
                    sum += c.lambda;
                }
                if (sum - 1.0).abs() > COEFFICIENT_SUM_TOLERANCE {
                    return Err(Error::CoefficientSum {
                        sum,
                        tolerance: COEFFICIENT_SUM_TOLERANCE,
                    });
                }
                Ok(())
            }
            WeightSequence::Blocks { parts, rule } => {
                if parts.is_empty() {
                    return Err(Error::Empty {
                        what: "block part list",
                    });
                }
                rule.validate()?;
                parts.iter().try_for_each(|p| p.validate())
            }
            WeightSequence::Diagonal { stages, rule } => {
                if stages.is_empty() {
                    return Err(Error::Empty {
                        what: "diagonal stage list",
                    });
                }
                rule.validate()?;
                stages.iter().try_for_each(|s| s.validate())
            }
        }
    }

    /// The weight at 1-based position `n`.
    ///
    /// `O(1)` for constant/explicit/periodic, `O(n)` replay for the
    /// scheduled variants — deep scans should use [`Self::weights`].
    pub fn weight_at(&self, n: u64) -> Weight {
        debug_assert!(n >= 1, "positions are 1-based");
        match self {
            WeightSequence::Constant { p } => *p,
            WeightSequence::Explicit { weights } => {
                let idx = ((n - 1) as usize).min(weights.len() - 1);
                weights[idx]
            }
            WeightSequence::Periodic { weights } => {
                weights[((n - 1) % weights.len() as u64) as usize]
            }
            _ => self
                .weights()
                .nth((n - 1) as usize)
                .expect("weight iterator is infinite"),
        }
    }

    /// Infinite iterator over `p_1, p_2, …`.
    pub fn weights(&self) -> Weights<'_> {
        Weights {
            state: WeightsState::new(self),
        }
    }

    /// The set of distinct weight values this sequence can ever emit, if it
    /// is small (at most [`PALETTE_LIMIT`] values); `None` means "large or
    /// unbounded, don't bother caching per-value computations".
    pub fn palette(&self) -> Option<Vec<f64>> {
        let mut set: BTreeSet<u64> = BTreeSet::new();
        if self.collect_palette(&mut set) {
            Some(set.into_iter().map(f64::from_bits).collect())
        } else {
            None
        }
    }

    fn collect_palette(&self, set: &mut BTreeSet<u64>) -> bool {
        let push = |w: &Weight, set: &mut BTreeSet<u64>| {
            set.insert(w.value().to_bits());
            set.len() <= PALETTE_LIMIT
        };
        match self {
            WeightSequence::Constant { p } => push(p, set),
            WeightSequence::Explicit { weights } | WeightSequence::Periodic { weights } => {
                weights.iter().all(|w| push(w, set))
            }
            WeightSequence::Quota { components } => {
                components.iter().all(|c| push(&c.p, set))
            }
            WeightSequence::Blocks { parts, .. } => {
                parts.iter().all(|p| p.collect_palette(set))
            }
            WeightSequence::Diagonal { stages, .. } => {
                stages.iter().all(|s| s.collect_palette(set))
            }
        }
    }
}

/// Above this many distinct values, [`WeightSequence::palette`] gives up.
pub const PALETTE_LIMIT: usize = 64;

// ---------------------------------------------------------------------------
// The weight iterator
// ---------------------------------------------------------------------------

/// Infinite iterator over a sequence's weights (`next` never returns `None`).
pub struct Weights<'a> {
    state: WeightsState<'a>,
}

enum WeightsState<'a> {
    Constant {
        p: Weight,
    },
    Explicit {
        weights: &'a [Weight],
        idx: usize,
    },
    Periodic {
        weights: &'a [Weight],
        idx: usize,
    },
    Quota {
        components: &'a [QuotaComponent],
        counts: Vec<u64>,
        emitted: u64,
    },
    Blocks {
        parts: Vec<Weights<'a>>,
        rule: &'a BlockRule,
        block: u64,
        remaining: u64,
    },
    Diagonal {
        stages: Vec<Weights<'a>>,
        consumed: Vec<u64>,
        rule: &'a BlockRule,
        block: u64,
        remaining: u64,
        depth: u64,
    },
}

impl<'a> WeightsState<'a> {
    fn new(seq: &'a WeightSequence) -> Self {
        match seq {
            WeightSequence::Constant { p } => WeightsState::Constant { p: *p },
            WeightSequence::Explicit { weights } => WeightsState::Explicit { weights, idx: 0 },
            WeightSequence::Periodic { weights } => WeightsState::Periodic { weights, idx: 0 },
            WeightSequence::Quota { components } => WeightsState::Quota {
                components,
                counts: vec![0; components.len()],
                emitted: 0,
            },
            WeightSequence::Blocks { parts, rule } => WeightsState::Blocks {
                parts: parts.iter().map(|p| p.weights()).collect(),
                rule,
                block: 0,
                remaining: 0,
            },
            WeightSequence::Diagonal { stages, rule } => WeightsState::Diagonal {
                consumed: vec![0; stages.len()],
                stages: stages.iter().map(|s| s.weights()).collect(),
                rule,
                block: 0,
                remaining: 0,
                depth: 0,
            },
        }
    }
}

impl<'a> Iterator for Weights<'a> {
    type Item = Weight;

    fn next(&mut self) -> Option<Weight> {
        Some(match &mut self.state {
            WeightsState::Constant { p } => *p,
            WeightsState::Explicit { weights, idx } => {
                let w = weights[(*idx).min(weights.len() - 1)];
                *idx = idx.saturating_add(1);
                w
            }
            WeightsState::Periodic { weights, idx } => {
                let w = weights[*idx];
                *idx = (*idx + 1) % weights.len();
                w
            }
            WeightsState::Quota {
                components,
                counts,
                emitted,
            } => {
                *emitted += 1;
                let n = *emitted as f64;
                // Emit the component whose realised count lags its quota
                // λ_i·n the most; ties go to the smallest index. This keeps
                // every deficit in (-1, 1), so prefix counts stay within one
                // of the ideal share.
                let mut best = 0usize;
                let mut best_deficit = f64::NEG_INFINITY;
                for (i, c) in components.iter().enumerate() {
                    let deficit = c.lambda * n - counts[i] as f64;
                    if deficit > best_deficit {
                        best_deficit = deficit;
                        best = i;
                    }
                }
                counts[best] += 1;
                components[best].p
            }
            WeightsState::Blocks {
                parts,
                rule,
                block,
                remaining,
            } => {
                if *remaining == 0 {
                    *block += 1;
                    *remaining = rule.length(*block);
                }
                *remaining -= 1;
                let part = ((*block - 1) % parts.len() as u64) as usize;
                parts[part].next().expect("part iterator is infinite")
            }
            WeightsState::Diagonal {
                stages,
                consumed,
                rule,
                block,
                remaining,
                depth,
            } => {
                if *remaining == 0 {
                    *block += 1;
                    *remaining = rule.length(*block);
                }
                *remaining -= 1;
                *depth += 1;
                let stage = (*block).min(stages.len() as u64) as usize - 1;
                // Depth alignment: fast-forward this stage to the current
                // absolute depth before reading its weight. Each stage is
                // advanced at most once per depth overall, so a full scan to
                // depth N costs O(N) amortised.
                while consumed[stage] + 1 < *depth {
                    stages[stage].next();
                    consumed[stage] += 1;
                }
                consumed[stage] += 1;
                stages[stage].next().expect("stage iterator is infinite")
            }
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (usize::MAX, None)
    }
}

// ---------------------------------------------------------------------------
// Measure evaluation
// ---------------------------------------------------------------------------

/// Mass of the cylinder addressed by `path`.
///
/// Computed as the running product of per-level factors, so it agrees
/// *bitwise* with `cylinder_measure(parent) * factor`. The root has mass 1.
/// For paths deeper than ≈1000 levels the product can underflow `f64`; use
/// [`log2_cylinder_measure`] for anything deep.
pub fn cylinder_measure(seq: &WeightSequence, path: &CylinderPath) -> f64 {
    let mut mass = 1.0f64;
    for (w, &bit) in seq.weights().zip(path.bits()) {
        mass *= if bit { w.complement() } else { w.value() };
    }
    mass
}

/// `log₂ μ(I)` accumulated factor by factor — stable at any depth.
pub fn log2_cylinder_measure(seq: &WeightSequence, path: &CylinderPath) -> f64 {
    let mut acc = 0.0f64;
    for (w, &bit) in seq.weights().zip(path.bits()) {
        let f = if bit { w.complement() } else { w.value() };
        acc += f.log2();
    }
    acc
}

/// Coarse local exponent `-log₂ μ(I) / n` of a depth-`n` cylinder.
///
/// Errors on the root cylinder (no depth to normalise by).
pub fn local_exponent(seq: &WeightSequence, path: &CylinderPath) -> Result<f64> {
    if path.is_root() {
        return Err(Error::EmptyPath);
    }
    Ok(-log2_cylinder_measure(seq, path) / path.depth() as f64)
}

/// Iterator over all `2^n` depth-`n` cylinders with their masses, in
/// lexicographic word order (`00…0` first).
#[derive(Debug)]
pub struct CylinderEnumeration {
    depth: u32,
    weights: Vec<f64>,
    complements: Vec<f64>,
    next_index: u64,
    end: u64,
}

impl Iterator for CylinderEnumeration {
    type Item = (CylinderPath, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index >= self.end {
            return None;
        }
        let idx = self.next_index;
        self.next_index += 1;
        let n = self.depth as usize;
        let mut bits = Vec::with_capacity(n);
        let mut mass = 1.0f64;
        for j in 0..n {
            // Bit j of the word is bit (n-1-j) of the index, so that the
            // word order is lexicographic.
            let bit = (idx >> (n - 1 - j)) & 1 == 1;
            bits.push(bit);
            mass *= if bit { self.complements[j] } else { self.weights[j] };
        }
        Some((CylinderPath::from_bits(bits), mass))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = (self.end - self.next_index) as usize;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for CylinderEnumeration {}

/// Enumerate the full level `F_n` under the default depth cap.
pub fn enumerate_cylinders(seq: &WeightSequence, depth: u32) -> Result<CylinderEnumeration> {
    enumerate_cylinders_with_cap(seq, depth, DEFAULT_ENUMERATION_CAP)
}

/// Enumerate the full level `F_n` under an explicit depth cap.
///
/// Depth 0 yields exactly the root cylinder with mass 1.
pub fn enumerate_cylinders_with_cap(
    seq: &WeightSequence,
    depth: u32,
    cap: u32,
) -> Result<CylinderEnumeration> {
    if depth > cap {
        return Err(Error::DepthBudget {
            requested: depth,
            cap,
        });
    }
    let levels: Vec<Weight> = seq.weights().take(depth as usize).collect();
    Ok(CylinderEnumeration {
        depth,
        weights: levels.iter().map(|w| w.value()).collect(),
        complements: levels.iter().map(|w| w.complement()).collect(),
        next_index: 0,
        end: 1u64 << depth,
    })
}

/// Draw a depth-`n` path from the measure: digit `ε_j = 0` with probability
/// `p_j`, independently across levels. Fully determined by `seed`.
pub fn sample_path(seq: &WeightSequence, depth: u64, seed: u64) -> CylinderPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_path_with(seq, depth, &mut rng)
}

/// Like [`sample_path`] but drawing from a caller-owned generator, for bulk
/// sampling without re-seeding.
pub fn sample_path_with<R: Rng>(seq: &WeightSequence, depth: u64, rng: &mut R) -> CylinderPath {
    let mut bits = Vec::with_capacity(depth as usize);
    for w in seq.weights().take(depth as usize) {
        let u: f64 = rng.gen();
        bits.push(u >= w.value()); // digit 1 iff the draw misses [0, p_j)
    }
    CylinderPath::from_bits(bits)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
