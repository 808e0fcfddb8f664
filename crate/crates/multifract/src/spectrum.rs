//! Moment-scaling curves `τ_n(q)` and their limit analysis.
//!
//! For a weight sequence `(p_j)` and the level family `F_n` of depth-`n`
//! cylinders, the finite-depth scaling curve is
//!
//! ```text
//! τ_n(q) = (1/(n log 2)) · log Σ_{I ∈ F_n} μ(I)^q .
//! ```
//!
//! Because the measure is a product, the sum factorises level by level and
//! the curve collapses to an average of analytic single-level branches:
//!
//! ```text
//! τ_n(q) = (1/n) Σ_{j=1}^n τ(p_j, q),    τ(p, q) = log₂(p^q + (1-p)^q).
//! ```
//!
//! [`tau_n`] and everything built on it use the averaging form (the
//! brute-force cylinder sum is kept in the test suite as an independent
//! oracle). Every evaluation of `τ(p,·)` goes through an exponent-shifted
//! form `m + log(1 + e^(a-b))` so large `|q|` neither overflows nor loses
//! the leading term; this matters from roughly `|q| > 50` onward and is
//! harmless below.
//!
//! Limits: `τ(q) = limsup_n τ_n(q)` (and the liminf companion) exist but are
//! not computable from finitely many depths, so the estimators here report
//! *tail extrema over an explicit depth schedule* — the extreme values of
//! `τ_n(q)` over the tail of the supplied depths, together with where they
//! were attained. Callers choose schedules that resolve the oscillation they
//! are hunting (block ends for spliced sequences).

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::measure::{Weight, WeightSequence, COEFFICIENT_SUM_TOLERANCE};
use crate::Result;

use std::f64::consts::LN_2;

/// Default one-sided step for difference quotients of limsup estimates.
pub const DEFAULT_EPS_Q: f64 = 1e-3;

/// Default fraction of a depth schedule treated as its "tail".
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

/// Default moment grid for Legendre transforms: `[-20, 20]` step `1e-2`.
pub const DEFAULT_LEGENDRE_Q_MIN: f64 = -20.0;
pub const DEFAULT_LEGENDRE_Q_MAX: f64 = 20.0;
pub const DEFAULT_LEGENDRE_Q_STEP: f64 = 1e-2;

// ---------------------------------------------------------------------------
// Single-level branch curves
// ---------------------------------------------------------------------------

/// Split a weight into its canonically ordered pair `(lo, hi)`,
/// `lo = min(p, 1-p)`. All branch formulas are symmetric under `p ↔ 1-p`;
/// evaluating through the sorted pair makes that symmetry exact whenever
/// `p` and `1-p` are both exactly representable.
#[inline]
fn ordered_pair(p: Weight) -> (f64, f64) {
    let v = p.value();
    let c = 1.0 - v;
    if v <= c {
        (v, c)
    } else {
        (c, v)
    }
}

/// The analytic branch `τ(p, q) = log₂(p^q + (1-p)^q)`.
///
/// Exact at the anchors: `τ(p, 0) = 1` and `τ(p, 1) = 0` for every `p`.
pub fn tau_single(p: Weight, q: f64) -> f64 {
    if q == 0.0 {
        return 1.0;
    }
    if q == 1.0 {
        return 0.0;
    }
    let (lo, hi) = ordered_pair(p);
    let a = q * lo.ln();
    let b = q * hi.ln();
    let (max, min) = if a >= b { (a, b) } else { (b, a) };
    (max + (min - max).exp().ln_1p()) / LN_2
}

/// First derivative `∂τ/∂q = (p^q ln p + (1-p)^q ln(1-p)) / ((p^q+(1-p)^q) ln 2)`.
///
/// At `q = 1` this is `-h(p)`, minus the binary entropy.
pub fn tau_single_d1(p: Weight, q: f64) -> f64 {
    let (lo, hi) = ordered_pair(p);
    let la = lo.ln();
    let lb = hi.ln();
    let a = q * la;
    let b = q * lb;
    let m = a.max(b);
    let u = (a - m).exp();
    let v = (b - m).exp();
    (u * la + v * lb) / ((u + v) * LN_2)
}

/// Second derivative
/// `∂²τ/∂q² = p^q (1-p)^q (ln p - ln(1-p))² / ((p^q+(1-p)^q)² ln 2)`.
///
/// Non-negative everywhere (each branch is convex), zero only at `p = 1/2`.
/// For `q ≥ q₀` it is dominated by `[4p(1-p)]^{q₀} · (log₂(p/(1-p)))²`,
/// with room to spare.
pub fn tau_single_d2(p: Weight, q: f64) -> f64 {
    let (lo, hi) = ordered_pair(p);
    let la = lo.ln();
    let lb = hi.ln();
    let a = q * la;
    let b = q * lb;
    let m = a.max(b);
    let u = (a - m).exp();
    let v = (b - m).exp();
    let s = u + v;
    let d = la - lb;
    (u * v / (s * s)) * d * d / LN_2
}

/// Binary entropy `h(p) = -p log₂ p - (1-p) log₂(1-p)`; equals
/// `-∂τ/∂q (p, 1)`.
pub fn binary_entropy(p: Weight) -> f64 {
    let (lo, hi) = ordered_pair(p);
    -(lo * lo.log2() + hi * hi.log2())
}

// ---------------------------------------------------------------------------
// TauCurve: finite convex combinations of branches
// ---------------------------------------------------------------------------

/// One component of a [`TauCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveComponent {
    /// Convex coefficient in `(0,1]`.
    pub lambda: f64,
    /// Branch parameter.
    pub p: Weight,
}

/// A convex combination `q ↦ Σ λ_i τ(p_i, q)` of analytic branches.
///
/// These are exactly the scaling curves realisable by quota-interleaved
/// weight sequences, and the building blocks the synthesis machinery
/// combines into suprema. Components keep their construction order (the
/// splitting step treats the first two as the active pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCurve {
    components: Vec<CurveComponent>,
}

impl TauCurve {
    /// Build from `(lambda, p)` pairs; coefficients must be in `(0,1]` and
    /// sum to 1 within `1e-12`.
    pub fn new(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty {
                what: "curve component list",
            });
        }
        let mut out = Vec::with_capacity(components.len());
        let mut sum = 0.0;
        for &(lambda, p) in &components {
            if !(lambda.is_finite() && lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::InvalidCoefficient { value: lambda });
            }
            sum += lambda;
            out.push(CurveComponent {
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
        Ok(TauCurve { components: out })
    }

    /// Build from already-validated components (rescaling paths); still
    /// checks the sum.
    pub fn from_components(components: Vec<CurveComponent>) -> Result<Self> {
        let pairs = components
            .iter()
            .map(|c| (c.lambda, c.p.value()))
            .collect();
        TauCurve::new(pairs)
    }

    /// The single branch `τ(p, ·)`.
    pub fn single(p: f64) -> Result<Self> {
        TauCurve::new(vec![(1.0, p)])
    }

    /// Component view, in construction order.
    pub fn components(&self) -> &[CurveComponent] {
        &self.components
    }

    /// Curve value `Σ λ_i τ(p_i, q)`. Exactly 0 at `q = 1`; equals `Σ λ_i`
    /// (1 within the coefficient tolerance) at `q = 0`.
    pub fn value(&self, q: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.lambda * tau_single(c.p, q))
            .sum()
    }

    /// Slope `Σ λ_i ∂τ/∂q (p_i, q)`.
    pub fn slope(&self, q: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.lambda * tau_single_d1(c.p, q))
            .sum()
    }

    /// Curvature `Σ λ_i ∂²τ/∂q² (p_i, q)`; non-negative.
    pub fn curvature(&self, q: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.lambda * tau_single_d2(c.p, q))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Depth schedules and tails
// ---------------------------------------------------------------------------

/// A strictly increasing, non-empty list of depths at which estimators
/// snapshot `τ_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthSchedule(Vec<u64>);

impl DepthSchedule {
    /// Validate and wrap. Depths must start at 1 or later and strictly
    /// increase.
    pub fn new(depths: Vec<u64>) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::Empty {
                what: "depth schedule",
            });
        }
        if depths[0] == 0 {
            return Err(Error::UnsortedSchedule { index: 0 });
        }
        for i in 1..depths.len() {
            if depths[i] <= depths[i - 1] {
                return Err(Error::UnsortedSchedule { index: i });
            }
        }
        Ok(DepthSchedule(depths))
    }

    /// `count` depths growing geometrically from `first` by `factor`
    /// (rounded up, forced strictly increasing).
    pub fn geometric(first: u64, factor: f64, count: usize) -> Result<Self> {
        if first == 0 || count == 0 || !(factor.is_finite() && factor > 1.0) {
            return Err(Error::InvalidParameter {
                detail: format!(
                    "geometric schedule needs first ≥ 1, count ≥ 1, factor > 1 \
                     (got first={first}, factor={factor}, count={count})"
                ),
            });
        }
        let mut depths = Vec::with_capacity(count);
        let mut d = first;
        for _ in 0..count {
            depths.push(d);
            let next = ((d as f64) * factor).ceil() as u64;
            d = next.max(d + 1);
        }
        DepthSchedule::new(depths)
    }

    /// The cumulative block ends of `rule` up to `max_depth`, with
    /// `max_depth` itself appended when it is not already a block end.
    pub fn block_ends(rule: &crate::measure::BlockRule, max_depth: u64) -> Result<Self> {
        let mut ends = rule.block_ends(max_depth);
        if ends.last() != Some(&max_depth) && max_depth >= 1 {
            ends.push(max_depth);
        }
        DepthSchedule::new(ends)
    }

    /// The scheduled depths.
    pub fn depths(&self) -> &[u64] {
        &self.0
    }

    /// Largest depth.
    pub fn max_depth(&self) -> u64 {
        *self.0.last().expect("schedule is non-empty")
    }

    /// Number of scheduled depths.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Never true — schedules are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index where the tail begins: the final `max(1, ⌈fraction·len⌉)`
    /// entries form the tail.
    pub fn tail_start(&self, fraction: f64) -> usize {
        let f = fraction.clamp(0.0, 1.0);
        let count = ((self.len() as f64 * f).ceil() as usize).clamp(1, self.len());
        self.len() - count
    }
}

/// A value/depth pair marking where an extremum was attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalPoint {
    pub value: f64,
    pub depth: u64,
}

/// Tail extrema of a depth-indexed quantity over a schedule: the finite-depth
/// stand-in for its limsup/liminf. `max` estimates the limsup, `min` the
/// liminf; ties resolve to the shallowest attaining depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailExtrema {
    /// The moment (or other abscissa) this extremum belongs to.
    pub q: f64,
    /// Liminf estimate: smallest tail value and where it occurred.
    pub min: ExtremalPoint,
    /// Limsup estimate: largest tail value and where it occurred.
    pub max: ExtremalPoint,
    /// Index into `schedule` where the tail begins.
    pub tail_start: usize,
    /// The schedule the extrema were taken over (echoed for reproducibility).
    pub schedule: Vec<u64>,
}

fn tail_extrema(q: f64, schedule: &DepthSchedule, values: &[f64], fraction: f64) -> TailExtrema {
    debug_assert_eq!(schedule.len(), values.len());
    let start = schedule.tail_start(fraction);
    let mut min = ExtremalPoint {
        value: f64::INFINITY,
        depth: 0,
    };
    let mut max = ExtremalPoint {
        value: f64::NEG_INFINITY,
        depth: 0,
    };
    for (i, &v) in values.iter().enumerate().skip(start) {
        let depth = schedule.depths()[i];
        if v < min.value {
            min = ExtremalPoint { value: v, depth };
        }
        if v > max.value {
            max = ExtremalPoint { value: v, depth };
        }
    }
    TailExtrema {
        q,
        min,
        max,
        tail_start: start,
        schedule: schedule.depths().to_vec(),
    }
}

// ---------------------------------------------------------------------------
// The sweep engine
// ---------------------------------------------------------------------------

/// Per-level lookup tables over a sequence's palette: when the set of
/// distinct weights is small, `τ(p,q)` and its slope are computed once per
/// `(palette value, q)` and deep scans reduce to table adds.
struct PaletteTables {
    bits: Vec<u64>,
    /// `tau[q_idx][palette_idx]`
    tau: Vec<Vec<f64>>,
    /// `d1[q_idx][palette_idx]`, present when slopes were requested
    d1: Option<Vec<Vec<f64>>>,
}

impl PaletteTables {
    fn build(palette: &[f64], qs: &[f64], want_slopes: bool) -> Self {
        let mut bits: Vec<u64> = palette.iter().map(|p| p.to_bits()).collect();
        bits.sort_unstable();
        let weights: Vec<Weight> = bits
            .iter()
            .map(|&b| Weight::new(f64::from_bits(b)).expect("palette values are valid weights"))
            .collect();
        let tau = qs
            .iter()
            .map(|&q| weights.iter().map(|&w| tau_single(w, q)).collect())
            .collect();
        let d1 = want_slopes.then(|| {
            qs.iter()
                .map(|&q| weights.iter().map(|&w| tau_single_d1(w, q)).collect())
                .collect()
        });
        PaletteTables { bits, tau, d1 }
    }

    #[inline]
    fn index_of(&self, w: Weight) -> usize {
        self.bits
            .binary_search(&w.value().to_bits())
            .expect("weight emitted outside its declared palette")
    }
}

/// `τ_n(q)` (and optionally `τ_n'(q)`) snapshotted at every scheduled depth.
struct Sweep {
    /// `tau[depth_idx][q_idx]`
    tau: Vec<Vec<f64>>,
    /// `d1[depth_idx][q_idx]` when slopes were requested
    d1: Option<Vec<Vec<f64>>>,
}

/// One pass over the weight sequence, accumulating `Σ_j τ(p_j, q)` (and the
/// slope sum) per `q`, snapshotting at each scheduled depth. Summation order
/// is fixed (by depth), so results are bitwise reproducible.
fn sweep(
    seq: &WeightSequence,
    qs: &[f64],
    schedule: &DepthSchedule,
    want_slopes: bool,
) -> Sweep {
    let tables = seq
        .palette()
        .map(|palette| PaletteTables::build(&palette, qs, want_slopes));
    let mut tau_sum = vec![0.0f64; qs.len()];
    let mut d1_sum = vec![0.0f64; qs.len()];
    let mut tau_rows = Vec::with_capacity(schedule.len());
    let mut d1_rows = want_slopes.then(|| Vec::with_capacity(schedule.len()));

    let mut next = 0usize;
    let mut weights = seq.weights();
    let mut depth: u64 = 0;
    while next < schedule.len() {
        let w = weights.next().expect("weight iterator is infinite");
        depth += 1;
        match &tables {
            Some(t) => {
                let idx = t.index_of(w);
                for (qi, sum) in tau_sum.iter_mut().enumerate() {
                    *sum += t.tau[qi][idx];
                }
                if want_slopes {
                    if let Some(d1) = &t.d1 {
                        for (qi, sum) in d1_sum.iter_mut().enumerate() {
                            *sum += d1[qi][idx];
                        }
                    }
                }
            }
            None => {
                for (qi, &q) in qs.iter().enumerate() {
                    tau_sum[qi] += tau_single(w, q);
                    if want_slopes {
                        d1_sum[qi] += tau_single_d1(w, q);
                    }
                }
            }
        }
        if depth == schedule.depths()[next] {
            let n = depth as f64;
            tau_rows.push(tau_sum.iter().map(|s| s / n).collect::<Vec<_>>());
            if let Some(rows) = &mut d1_rows {
                rows.push(d1_sum.iter().map(|s| s / n).collect::<Vec<_>>());
            }
            next += 1;
        }
    }
    Sweep {
        tau: tau_rows,
        d1: d1_rows,
    }
}

// ---------------------------------------------------------------------------
// τ_n and its limit estimators
// ---------------------------------------------------------------------------

/// `τ_n(q)` at a single depth, by averaging the analytic branches.
pub fn tau_n(seq: &WeightSequence, q: f64, depth: u64) -> Result<f64> {
    let schedule = DepthSchedule::new(vec![depth])?;
    Ok(sweep(seq, &[q], &schedule, false).tau[0][0])
}

/// `τ_n(q)` over a whole `q`-grid and depth schedule, with running extrema.
///
/// Invariants baked into the arithmetic: `τ_n(1) = 0` and `τ_n(0) = 1`
/// exactly, at every depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTau {
    pub q_grid: Vec<f64>,
    pub depths: Vec<u64>,
    /// `values[depth_idx][q_idx]`
    pub values: Vec<Vec<f64>>,
    /// Per-`q` maximum of `τ_n(q)` over the scheduled depths.
    pub max_over_depths: Vec<f64>,
    /// Per-`q` minimum over the scheduled depths.
    pub min_over_depths: Vec<f64>,
}

impl EmpiricalTau {
    /// Sweep the sequence once across all `(q, depth)` pairs.
    pub fn compute(
        seq: &WeightSequence,
        q_grid: Vec<f64>,
        schedule: &DepthSchedule,
    ) -> Result<Self> {
        validate_grid(&q_grid)?;
        let sw = sweep(seq, &q_grid, schedule, false);
        let mut max_over = vec![f64::NEG_INFINITY; q_grid.len()];
        let mut min_over = vec![f64::INFINITY; q_grid.len()];
        for row in &sw.tau {
            for (qi, &v) in row.iter().enumerate() {
                max_over[qi] = max_over[qi].max(v);
                min_over[qi] = min_over[qi].min(v);
            }
        }
        Ok(EmpiricalTau {
            q_grid,
            depths: schedule.depths().to_vec(),
            values: sw.tau,
            max_over_depths: max_over,
            min_over_depths: min_over,
        })
    }
}

/// Limsup/liminf estimates of `τ_n(q)` as tail extrema over `schedule`.
pub fn tau_limits(
    seq: &WeightSequence,
    q: f64,
    schedule: &DepthSchedule,
    tail_fraction: f64,
) -> Result<TailExtrema> {
    Ok(tau_limits_grid(seq, &[q], schedule, tail_fraction)?.remove(0))
}

/// [`tau_limits`] for a whole grid in one sequence pass.
pub fn tau_limits_grid(
    seq: &WeightSequence,
    qs: &[f64],
    schedule: &DepthSchedule,
    tail_fraction: f64,
) -> Result<Vec<TailExtrema>> {
    validate_grid(qs)?;
    let sw = sweep(seq, qs, schedule, false);
    Ok(qs
        .iter()
        .enumerate()
        .map(|(qi, &q)| {
            let col: Vec<f64> = sw.tau.iter().map(|row| row[qi]).collect();
            tail_extrema(q, schedule, &col, tail_fraction)
        })
        .collect())
}

/// Entropy dimension estimates: tail extrema of `-τ_n'(1) = (1/n) Σ h(p_j)`.
///
/// The `min` field estimates the lower (dimension) value, `max` the upper
/// (packing) one; they coincide exactly when the entropy averages converge.
pub fn entropy_dimension(
    seq: &WeightSequence,
    schedule: &DepthSchedule,
    tail_fraction: f64,
) -> Result<TailExtrema> {
    // -τ_n'(1) is the running average of binary entropies; accumulate it
    // directly (the d1 route agrees to rounding and is covered by tests).
    let mut sum = 0.0f64;
    let mut values = Vec::with_capacity(schedule.len());
    let mut next = 0usize;
    let mut depth = 0u64;
    let mut weights = seq.weights();
    while next < schedule.len() {
        let w = weights.next().expect("weight iterator is infinite");
        depth += 1;
        sum += binary_entropy(w);
        if depth == schedule.depths()[next] {
            values.push(sum / depth as f64);
            next += 1;
        }
    }
    Ok(tail_extrema(1.0, schedule, &values, tail_fraction))
}

/// Tail extrema of the dimension functional `g_n(q) = -q·τ_n'(q) + τ_n(q)`.
///
/// The `min` field (its liminf estimate) lower-bounds the Hausdorff
/// dimension of the level set picked out by `q`; at `q = 1` the functional
/// reduces to the entropy average, at `q = 0` it is identically 1.
pub fn dimension_lower_bound(
    seq: &WeightSequence,
    q: f64,
    schedule: &DepthSchedule,
    tail_fraction: f64,
) -> Result<TailExtrema> {
    let sw = sweep(seq, &[q], schedule, true);
    let slopes = sw.d1.as_ref().expect("slopes were requested");
    let values: Vec<f64> = sw
        .tau
        .iter()
        .zip(slopes)
        .map(|(t, s)| -q * s[0] + t[0])
        .collect();
    Ok(tail_extrema(q, schedule, &values, tail_fraction))
}

// ---------------------------------------------------------------------------
// Subsequence derivative brackets
// ---------------------------------------------------------------------------

/// Options for [`subsequence_derivative_bracket`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketOptions {
    /// One-sided step for the limsup difference quotients.
    pub eps_q: f64,
    /// Fraction of the schedule forming the tail.
    pub tail_fraction: f64,
    /// A depth counts as (nearly) limsup-attaining when its `τ_n(q)` is
    /// within this of the tail maximum.
    pub near_tolerance: f64,
    /// Slack before an excursion outside the bracket is flagged.
    pub violation_tolerance: f64,
}

impl Default for BracketOptions {
    fn default() -> Self {
        BracketOptions {
            eps_q: DEFAULT_EPS_Q,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            near_tolerance: 1e-3,
            violation_tolerance: 1e-6,
        }
    }
}

/// Result of bracketing `τ_{n_k}'(q)` along limsup-attaining depths.
///
/// With `τ` the limsup curve, the one-sided slopes `τ'(q±)` sandwich every
/// accumulation point of `τ_{n_k}'(q)` along depth subsequences `n_k`
/// realising the limsup at `q`. The estimator replaces `τ'(q±)` by outward
/// difference quotients of the tail-maximum curve (convexity makes those
/// quotients conservative brackets) and reports the realised slope range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBracket {
    pub q: f64,
    pub eps_q: f64,
    /// Tail maximum of `τ_n(q)` — the limsup estimate at the centre.
    pub limsup_at_q: f64,
    /// Difference quotient estimating `τ'(q⁻)` (lower bracket edge).
    pub left_slope: f64,
    /// Difference quotient estimating `τ'(q⁺)` (upper bracket edge).
    pub right_slope: f64,
    /// Depths whose `τ_n(q)` is within `near_tolerance` of the limsup.
    pub near_depths: Vec<u64>,
    /// Smallest `τ_n'(q)` over the near depths, with its depth.
    pub slope_min: ExtremalPoint,
    /// Largest `τ_n'(q)` over the near depths, with its depth.
    pub slope_max: ExtremalPoint,
    /// Set when the realised slopes leave `[left_slope, right_slope]` by
    /// more than the violation tolerance.
    pub violation: Option<String>,
}

/// Bracket the derivatives `τ_{n_k}'(q)` along near-limsup depths between
/// one-sided difference quotients of the limsup estimate.
pub fn subsequence_derivative_bracket(
    seq: &WeightSequence,
    q: f64,
    schedule: &DepthSchedule,
    opts: &BracketOptions,
) -> Result<DerivativeBracket> {
    if !(opts.eps_q.is_finite() && opts.eps_q > 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("eps_q must be positive, got {}", opts.eps_q),
        });
    }
    let qs = [q - opts.eps_q, q, q + opts.eps_q];
    let sw = sweep(seq, &qs, schedule, true);
    let slopes = sw.d1.as_ref().expect("slopes were requested");

    let start = schedule.tail_start(opts.tail_fraction);
    let mut sup = [f64::NEG_INFINITY; 3];
    for row in sw.tau.iter().skip(start) {
        for (i, s) in sup.iter_mut().enumerate() {
            *s = s.max(row[i]);
        }
    }
    let left_slope = (sup[1] - sup[0]) / opts.eps_q;
    let right_slope = (sup[2] - sup[1]) / opts.eps_q;

    let mut near_depths = Vec::new();
    let mut slope_min = ExtremalPoint {
        value: f64::INFINITY,
        depth: 0,
    };
    let mut slope_max = ExtremalPoint {
        value: f64::NEG_INFINITY,
        depth: 0,
    };
    for (i, row) in sw.tau.iter().enumerate().skip(start) {
        if row[1] >= sup[1] - opts.near_tolerance {
            let depth = schedule.depths()[i];
            near_depths.push(depth);
            let s = slopes[i][1];
            if s < slope_min.value {
                slope_min = ExtremalPoint { value: s, depth };
            }
            if s > slope_max.value {
                slope_max = ExtremalPoint { value: s, depth };
            }
        }
    }

    let mut violation = None;
    if slope_min.value < left_slope - opts.violation_tolerance {
        violation = Some(format!(
            "slope {} at depth {} undershoots the left bracket {}",
            slope_min.value, slope_min.depth, left_slope
        ));
    } else if slope_max.value > right_slope + opts.violation_tolerance {
        violation = Some(format!(
            "slope {} at depth {} overshoots the right bracket {}",
            slope_max.value, slope_max.depth, right_slope
        ));
    }

    Ok(DerivativeBracket {
        q,
        eps_q: opts.eps_q,
        limsup_at_q: sup[1],
        left_slope,
        right_slope,
        near_depths,
        slope_min,
        slope_max,
        violation,
    })
}

// ---------------------------------------------------------------------------
// Legendre transform
// ---------------------------------------------------------------------------

/// One point of the Legendre transform `τ*(α) = inf_q (αq + τ(q))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendrePoint {
    pub alpha: f64,
    /// The grid minimum of `αq + τ(q)`.
    pub value: f64,
    /// Where the minimum was attained.
    pub argmin_q: f64,
    /// True when the argmin sits on the first or last grid point — the true
    /// infimum may lie outside the grid, treat `value` as an upper bound.
    pub at_boundary: bool,
}

/// Legendre-transform tabulated `(q, τ(q))` pairs at one `α`.
///
/// `pairs` must be sorted strictly increasing in `q`. Ties in the objective
/// resolve to the smallest `q`.
pub fn legendre_point(pairs: &[(f64, f64)], alpha: f64) -> Result<LegendrePoint> {
    if pairs.is_empty() {
        return Err(Error::Empty {
            what: "tau value table",
        });
    }
    for i in 1..pairs.len() {
        if pairs[i].0 <= pairs[i - 1].0 {
            return Err(Error::UnsortedGrid { index: i });
        }
    }
    let mut best = f64::INFINITY;
    let mut best_idx = 0usize;
    for (i, &(q, tau)) in pairs.iter().enumerate() {
        let v = alpha * q + tau;
        if v < best {
            best = v;
            best_idx = i;
        }
    }
    Ok(LegendrePoint {
        alpha,
        value: best,
        argmin_q: pairs[best_idx].0,
        at_boundary: best_idx == 0 || best_idx == pairs.len() - 1,
    })
}

/// [`legendre_point`] over a grid of `α` values.
pub fn legendre_spectrum(pairs: &[(f64, f64)], alphas: &[f64]) -> Result<Vec<LegendrePoint>> {
    alphas
        .iter()
        .map(|&a| legendre_point(pairs, a))
        .collect()
}

// ---------------------------------------------------------------------------
// Grid helpers
// ---------------------------------------------------------------------------

/// Inclusive arithmetic grid `min, min+step, …` up to `max` (within a half
/// step of slack so `max` lands on the grid despite rounding).
pub fn q_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || step <= 0.0 || max < min {
        return Err(Error::InvalidParameter {
            detail: format!("bad grid spec: min={min}, max={max}, step={step}"),
        });
    }
    let count = ((max - min) / step).round() as usize;
    let mut grid = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let v = min + step * i as f64;
        if v > max + step * 1e-9 {
            break;
        }
        grid.push(v);
    }
    if grid.is_empty() {
        grid.push(min);
    }
    Ok(grid)
}

fn validate_grid(qs: &[f64]) -> Result<()> {
    if qs.is_empty() {
        return Err(Error::Empty { what: "q grid" });
    }
    for i in 1..qs.len() {
        if qs[i] <= qs[i - 1] {
            return Err(Error::UnsortedGrid { index: i });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::BlockRule;

    fn w(p: f64) -> Weight {
        Weight::new(p).unwrap()
    }

    #[test]
    fn tau_single_anchor_values_are_exact() {
        for p in [0.1, 0.3, 0.5, 0.77, 0.999] {
            assert_eq!(tau_single(w(p), 0.0), 1.0, "τ(p,0) = 1 exactly");
            assert_eq!(tau_single(w(p), 1.0), 0.0, "τ(p,1) = 0 exactly");
        }
    }

    #[test]
    fn tau_single_uniform_weight_is_affine() {
        // τ(1/2, q) = 1 - q: both powers coincide, the log-sum collapses.
        for q in [-7.5, -1.0, 0.25, 0.5, 2.0, 13.0] {
            assert!(
                (tau_single(w(0.5), q) - (1.0 - q)).abs() < 1e-13,
                "q = {q}"
            );
        }
    }

    #[test]
    fn tau_single_matches_direct_evaluation_at_moderate_q() {
        // Independent route: naive log₂(p^q + (1-p)^q), fine for small |q|.
        for &p in &[0.05f64, 0.3, 0.42, 0.5, 0.61, 0.93] {
            for &q in &[-3.0, -0.7, 0.4, 2.0, 5.5] {
                let naive = (p.powf(q) + (1.0 - p).powf(q)).log2();
                assert!(
                    (tau_single(w(p), q) - naive).abs() < 1e-12,
                    "p={p}, q={q}"
                );
            }
        }
    }

    #[test]
    fn tau_single_frozen_value() {
        // τ(0.3, 2) = log₂(0.09 + 0.49) = log₂ 0.58 ≈ -0.785875
        let got = tau_single(w(0.3), 2.0);
        assert!((got - (0.58f64).log2()).abs() < 1e-14);
        assert!((got - -0.785875).abs() < 1e-6);
    }

    #[test]
    fn tau_single_survives_extreme_moments() {
        // Exponent shifting keeps the leading branch; the slope per unit q
        // approaches log₂ of the dominating weight on each side.
        let t_pos = tau_single(w(0.3), 300.0);
        assert!(t_pos.is_finite());
        assert!((t_pos / 300.0 - (0.7f64).log2()).abs() < 1e-2);
        let t_neg = tau_single(w(0.3), -300.0);
        assert!(t_neg.is_finite());
        assert!((t_neg / -300.0 - (0.3f64).log2()).abs() < 1e-2);
        // And a magnitude where the naive form would overflow outright:
        assert!(tau_single(w(0.01), 2000.0).is_finite());
        assert!(tau_single(w(0.01), -2000.0).is_finite());
    }

    #[test]
    fn tau_single_is_symmetric_in_the_weight_pair() {
        // Exact complements (dyadics): bitwise equality.
        for &p in &[0.25, 0.125, 0.375, 0.046875] {
            for &q in &[-4.0, -0.3, 0.6, 2.0, 17.0] {
                assert_eq!(tau_single(w(p), q), tau_single(w(1.0 - p), q));
                assert_eq!(tau_single_d1(w(p), q), tau_single_d1(w(1.0 - p), q));
                assert_eq!(tau_single_d2(w(p), q), tau_single_d2(w(1.0 - p), q));
            }
        }
        // Generic complements: 1-p itself rounds, so allow an ulp or two.
        for &p in &[0.3, 0.07, 0.441] {
            for &q in &[-2.0, 0.8, 3.0] {
                let d = (tau_single(w(p), q) - tau_single(w(1.0 - p), q)).abs();
                assert!(d <= 4e-15 * tau_single(w(p), q).abs().max(1.0), "p={p} q={q}");
            }
        }
    }

    #[test]
    fn slope_matches_central_differences() {
        let h = 1e-5;
        for &p in &[0.1, 0.3, 0.45, 0.82] {
            for &q in &[-2.0, 0.0, 0.5, 1.0, 2.5, 6.0] {
                let fd = (tau_single(w(p), q + h) - tau_single(w(p), q - h)) / (2.0 * h);
                let an = tau_single_d1(w(p), q);
                assert!((fd - an).abs() < 1e-8, "p={p}, q={q}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn curvature_matches_central_differences_of_slope() {
        let h = 1e-5;
        for &p in &[0.1, 0.3, 0.45, 0.82] {
            for &q in &[-2.0, 0.0, 0.5, 1.0, 2.5, 6.0] {
                let fd = (tau_single_d1(w(p), q + h) - tau_single_d1(w(p), q - h)) / (2.0 * h);
                let an = tau_single_d2(w(p), q);
                assert!((fd - an).abs() < 1e-6, "p={p}, q={q}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn slope_at_one_is_minus_entropy() {
        let expect = -0.8812908992306927; // -h(0.3), frozen
        assert!((tau_single_d1(w(0.3), 1.0) - expect).abs() < 1e-12);
        assert!((binary_entropy(w(0.3)) - 0.8812908992306927).abs() < 1e-12);
        assert!((binary_entropy(w(0.4)) - 0.9709505944546686).abs() < 1e-12);
        assert!((binary_entropy(w(0.5)) - 1.0).abs() < 1e-15);
        // spec-level precision anchors
        assert!((binary_entropy(w(0.3)) - 0.881291).abs() < 1e-6);
        assert!((binary_entropy(w(0.4)) - 0.970951).abs() < 1e-6);
    }

    #[test]
    fn curvature_is_nonnegative_and_vanishes_at_half() {
        for &q in &[-5.0, -0.5, 0.0, 1.0, 3.0, 20.0] {
            assert_eq!(tau_single_d2(w(0.5), q), 0.0);
            for &p in &[0.01, 0.2, 0.49, 0.77] {
                assert!(tau_single_d2(w(p), q) >= 0.0, "p={p}, q={q}");
            }
        }
    }

    #[test]
    fn curvature_bound_spot_checks() {
        // d2(p,q) ≤ [4p(1-p)]^{q0} (log₂(p/(1-p)))² for q ≥ q0 ≥ 0.
        for &q0 in &[0.5, 1.0, 2.0] {
            for &p in &[0.05f64, 0.3, 0.45] {
                let l2 = (p / (1.0 - p)).log2();
                let bound = (4.0 * p * (1.0 - p)).powf(q0) * l2 * l2;
                let mut q = q0;
                while q <= 40.0 {
                    assert!(
                        tau_single_d2(w(p), q) <= bound * (1.0 + 1e-12),
                        "p={p}, q0={q0}, q={q}"
                    );
                    q += 0.5;
                }
            }
        }
    }

    #[test]
    fn curve_values_and_anchors() {
        let curve = TauCurve::new(vec![(0.5, 0.3), (0.5, 0.4)]).unwrap();
        assert_eq!(curve.value(1.0), 0.0, "Σ λ_i · 0 is exactly 0");
        assert!((curve.value(0.0) - 1.0).abs() < 1e-12);
        let expect = 0.5 * tau_single(w(0.3), 2.0) + 0.5 * tau_single(w(0.4), 2.0);
        assert_eq!(curve.value(2.0), expect);
        let se = 0.5 * tau_single_d1(w(0.3), 2.0) + 0.5 * tau_single_d1(w(0.4), 2.0);
        assert_eq!(curve.slope(2.0), se);
        assert!(curve.curvature(2.0) > 0.0);
    }

    #[test]
    fn curve_validation() {
        assert!(TauCurve::new(vec![]).is_err());
        assert!(TauCurve::new(vec![(0.6, 0.3), (0.6, 0.4)]).is_err()); // sums to 1.2
        assert!(TauCurve::new(vec![(1.0, 0.0)]).is_err()); // bad weight
        assert!(TauCurve::single(0.3).is_ok());
    }

    #[test]
    fn tau_n_constant_collapses_to_the_branch() {
        let seq = WeightSequence::constant(0.3).unwrap();
        for &(q, n) in &[(2.0, 1u64), (2.0, 17), (-1.5, 100), (0.5, 1000)] {
            let got = tau_n(&seq, q, n).unwrap();
            assert!(
                (got - tau_single(w(0.3), q)).abs() < 1e-13,
                "q={q}, n={n}"
            );
        }
    }

    #[test]
    fn tau_n_periodic_average() {
        // Period [0.2, 0.4] at even depth: exactly the midpoint of branches.
        let seq = WeightSequence::periodic(vec![0.2, 0.4]).unwrap();
        let got = tau_n(&seq, 3.0, 10).unwrap();
        let expect = 0.5 * (tau_single(w(0.2), 3.0) + tau_single(w(0.4), 3.0));
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn empirical_tau_exact_anchor_columns() {
        let seq = WeightSequence::periodic(vec![0.21, 0.78, 0.4]).unwrap();
        let schedule = DepthSchedule::new(vec![1, 5, 25, 125]).unwrap();
        let emp =
            EmpiricalTau::compute(&seq, vec![-1.0, 0.0, 1.0, 2.0], &schedule).unwrap();
        for row in &emp.values {
            assert_eq!(row[1], 1.0, "τ_n(0) = 1 exactly");
            assert_eq!(row[2], 0.0, "τ_n(1) = 0 exactly");
        }
        for (qi, _) in emp.q_grid.iter().enumerate() {
            assert!(emp.max_over_depths[qi] >= emp.min_over_depths[qi]);
        }
    }

    #[test]
    fn alternating_blocks_match_the_mixture_formula() {
        // With N_n levels of weight p among n, τ_n = (N_n/n)τ(p,·) +
        // (1-N_n/n)τ(p̃,·). Blocks of lengths 2, 4, 8 cycling two constants.
        let seq = WeightSequence::blocks(
            vec![
                WeightSequence::constant(0.3).unwrap(),
                WeightSequence::constant(0.4).unwrap(),
            ],
            BlockRule::Lengths {
                lengths: vec![2, 4, 8],
            },
        )
        .unwrap();
        let q = 2.0;
        // depth 10: blocks 1 (2 levels of 0.3), 2 (4 of 0.4), then 4 of the
        // 8-block owned by 0.3 again → N_10 = 6.
        let got = tau_n(&seq, q, 10).unwrap();
        let frac = 6.0 / 10.0;
        let expect = frac * tau_single(w(0.3), q) + (1.0 - frac) * tau_single(w(0.4), q);
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn tau_limits_constant_sequence_degenerates() {
        let seq = WeightSequence::constant(0.42).unwrap();
        let schedule = DepthSchedule::geometric(4, 2.0, 10).unwrap();
        let lim = tau_limits(&seq, 1.7, &schedule, 0.5).unwrap();
        let expect = tau_single(w(0.42), 1.7);
        assert!((lim.max.value - expect).abs() < 1e-13);
        assert!((lim.min.value - expect).abs() < 1e-13);
        assert!(lim.max.value >= lim.min.value);
    }

    #[test]
    fn tau_limits_alternating_blocks_bracket_the_branches() {
        // Swinging blocks: at a block end the average is dominated by the
        // part that owned the block, so tail extrema approach the two branch
        // values from inside.
        let lengths = vec![3, 36, 960, 99_000];
        let seq = WeightSequence::blocks(
            vec![
                WeightSequence::constant(0.3).unwrap(),
                WeightSequence::constant(0.4).unwrap(),
            ],
            BlockRule::Lengths {
                lengths: lengths.clone(),
            },
        )
        .unwrap();
        let rule = BlockRule::Lengths { lengths };
        let schedule = DepthSchedule::block_ends(&rule, 100_000).unwrap();
        let q = 2.0;
        let lim = tau_limits(&seq, q, &schedule, 0.6).unwrap();
        let hi = tau_single(w(0.3), q); // larger branch value at q=2
        let lo = tau_single(w(0.4), q);
        assert!((lim.max.value - hi).abs() < 5e-2, "limsup {}", lim.max.value);
        assert!((lim.min.value - lo).abs() < 5e-2, "liminf {}", lim.min.value);
        // the estimates sit inside the true bracket
        assert!(lim.max.value <= hi + 1e-12);
        assert!(lim.min.value >= lo - 1e-12);
    }

    #[test]
    fn entropy_dimension_constant_weight() {
        let seq = WeightSequence::constant(0.3).unwrap();
        let schedule = DepthSchedule::geometric(10, 2.0, 8).unwrap();
        let e = entropy_dimension(&seq, &schedule, 0.5).unwrap();
        assert!((e.min.value - 0.8812908992306927).abs() < 1e-12);
        assert!((e.max.value - 0.8812908992306927).abs() < 1e-12);
    }

    #[test]
    fn dimension_functional_anchors() {
        let seq = WeightSequence::periodic(vec![0.3, 0.6, 0.11]).unwrap();
        let schedule = DepthSchedule::geometric(9, 2.0, 7).unwrap();
        // q = 0: τ_n(0) = 1 and the -q·τ_n' term vanishes identically.
        let at0 = dimension_lower_bound(&seq, 0.0, &schedule, 0.5).unwrap();
        assert_eq!(at0.min.value, 1.0);
        assert_eq!(at0.max.value, 1.0);
        // q = 1: the functional collapses to the entropy average.
        let at1 = dimension_lower_bound(&seq, 1.0, &schedule, 0.5).unwrap();
        let ent = entropy_dimension(&seq, &schedule, 0.5).unwrap();
        assert!((at1.min.value - ent.min.value).abs() < 1e-12);
        assert!((at1.max.value - ent.max.value).abs() < 1e-12);
    }

    #[test]
    fn bracket_on_constant_sequence_is_tight_and_quiet() {
        let seq = WeightSequence::constant(0.3).unwrap();
        let schedule = DepthSchedule::geometric(16, 2.0, 8).unwrap();
        let b = subsequence_derivative_bracket(&seq, 2.0, &schedule, &BracketOptions::default())
            .unwrap();
        let d1 = tau_single_d1(w(0.3), 2.0);
        // quotients straddle the analytic slope by O(ε·curvature)
        assert!((b.left_slope - d1).abs() < 1e-3);
        assert!((b.right_slope - d1).abs() < 1e-3);
        assert!(b.left_slope <= d1 + 1e-12 && d1 <= b.right_slope + 1e-12);
        assert!((b.slope_min.value - d1).abs() < 1e-12);
        assert!((b.slope_max.value - d1).abs() < 1e-12);
        assert!(b.violation.is_none());
        assert!(!b.near_depths.is_empty());
    }

    #[test]
    fn legendre_flat_curve() {
        // τ(q) = 1 - q (uniform measure): at α = 1 the objective is
        // constant 1; every grid point minimises, the reported argmin is the
        // grid edge and flagged as such.
        let grid = q_grid(-5.0, 5.0, 0.1).unwrap();
        let pairs: Vec<(f64, f64)> = grid.iter().map(|&q| (q, 1.0 - q)).collect();
        let lp = legendre_point(&pairs, 1.0).unwrap();
        assert!((lp.value - 1.0).abs() < 1e-12);
        assert!(lp.at_boundary);
    }

    #[test]
    fn legendre_binomial_closed_form() {
        // For the 0.3-binomial branch the infimum at α = -τ'(p, 2) is
        // attained at q = 2 with value 2α + τ(2).
        let grid = q_grid(-20.0, 20.0, 1e-2).unwrap();
        let pairs: Vec<(f64, f64)> =
            grid.iter().map(|&q| (q, tau_single(w(0.3), q))).collect();
        let alpha = -tau_single_d1(w(0.3), 2.0);
        let lp = legendre_point(&pairs, alpha).unwrap();
        let exact = alpha * 2.0 + tau_single(w(0.3), 2.0);
        assert!((lp.value - exact).abs() < 1e-5);
        assert!((lp.argmin_q - 2.0).abs() < 1.1e-2);
        assert!(!lp.at_boundary);
        // the worked numbers: α ≈ 0.704255, τ*(α) ≈ 0.622635
        assert!((alpha - 0.704255).abs() < 1e-5);
        assert!((lp.value - 0.622635).abs() < 1e-5);
    }

    #[test]
    fn legendre_flags_grid_edges() {
        let grid = q_grid(-5.0, 5.0, 0.1).unwrap();
        let pairs: Vec<(f64, f64)> =
            grid.iter().map(|&q| (q, tau_single(w(0.3), q))).collect();
        // α far above every attainable slope magnitude pushes the argmin to
        // the grid edge.
        let lp = legendre_point(&pairs, 1.9).unwrap();
        assert!(lp.at_boundary);
    }

    #[test]
    fn legendre_concavity_on_a_grid() {
        // τ* is concave in α: midpoint value at least the chord average.
        let grid = q_grid(-20.0, 20.0, 1e-2).unwrap();
        let pairs: Vec<(f64, f64)> =
            grid.iter().map(|&q| (q, tau_single(w(0.3), q))).collect();
        let alphas = q_grid(0.55, 1.7, 0.05).unwrap();
        let pts = legendre_spectrum(&pairs, &alphas).unwrap();
        for win in pts.windows(3) {
            let chord = 0.5 * (win[0].value + win[2].value);
            assert!(
                win[1].value >= chord - 1e-9,
                "concavity violated near α = {}",
                win[1].alpha
            );
        }
    }

    #[test]
    fn schedules_validate_and_tail() {
        assert!(DepthSchedule::new(vec![]).is_err());
        assert!(DepthSchedule::new(vec![0, 2]).is_err());
        assert!(DepthSchedule::new(vec![3, 3]).is_err());
        assert!(DepthSchedule::new(vec![3, 2]).is_err());
        let s = DepthSchedule::new(vec![1, 2, 4, 8, 16, 32, 64, 128]).unwrap();
        assert_eq!(s.tail_start(0.5), 4);
        assert_eq!(s.tail_start(1.0), 0);
        assert_eq!(s.tail_start(0.0), 7); // at least one point
        let g = DepthSchedule::geometric(5, 1.5, 4).unwrap();
        assert_eq!(g.depths(), &[5, 8, 12, 18]);
    }

    #[test]
    fn q_grid_spans_inclusively() {
        let g = q_grid(-1.0, 1.0, 0.5).unwrap();
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(q_grid(1.0, -1.0, 0.5).is_err());
        assert!(q_grid(0.0, 1.0, 0.0).is_err());
        let fine = q_grid(-20.0, 20.0, 1e-2).unwrap();
        assert_eq!(fine.len(), 4001);
        assert!((fine.last().unwrap() - 20.0).abs() < 1e-9);
    }
}
