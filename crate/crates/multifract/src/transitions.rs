//! Synthesis of scaling curves with prescribed non-differentiability points.
//!
//! A convex combination `τ = Σ λ_i τ(p_i, ·)` of analytic branches is smooth.
//! But the pointwise maximum of several such combinations has a corner — a
//! jump in the one-sided derivatives — wherever the identity of the maximal
//! curve changes, and such a maximum is itself the scaling curve of a
//! concrete coin-tossing measure obtained by splicing the realising
//! sequences along sufficiently fast-growing blocks. The machinery here
//! builds those maxima to order:
//!
//! 1. **Curve surgery.** Given a combination and two moments
//!    `1 < q_a < q_b`, [`split_combination`] produces a *different*
//!    combination agreeing with the original exactly at `q_a` and `q_b`,
//!    with distinct slopes there and no other coincidence on `(1, ∞)`. The
//!    key ingredients are a monotone three-branch difference ratio
//!    ([`ratio_is_decreasing`]), a matching branch parameter found by
//!    bisection ([`find_matching_p`]), and a 3×3 interpolation system solved
//!    in closed form ([`solve_interpolation_system`]) whose solution is
//!    provably a convex weight vector.
//! 2. **Realisation.** [`realize_curve`] turns a combination into an
//!    explicit weight sequence whose `τ_n` converges at rate `O(k/n)`;
//!    [`realize_sup`] splices several sequences along superexponential
//!    blocks so the limsup curve becomes the maximum of the parts.
//! 3. **Induction.** [`build_dense_transitions`] iterates the surgery
//!    against the running maximum at a nested family of target pairs,
//!    producing corners at every target; the realised measure splices the
//!    partial constructions diagonally so every finite depth sees a
//!    finite-stage approximation.
//!
//! The induction normally lands in the benign branch (the new curve exceeds
//! the old maximum strictly *inside* the target pair). The reversed branch —
//! expected never to occur in practice, but handled — would bury the
//! previous pair of corners; it is repaired by pulling the new combination
//! toward the curve it split (shrinking the free parameter `p5` toward its
//! anchor) until the overshoot is confined, then relocating the buried
//! corners to the actual crossing points, subject to strict proximity
//! bounds on both the locations and the derivative gaps. Every stage ends
//! with an independent corner audit of the new maximum; any mismatch fails
//! the stage rather than shipping a wrong construction.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::measure::{BlockRule, Weight, WeightSequence};
use crate::spectrum::{q_grid, tau_single, TauCurve};
use crate::Result;

/// Slope comparisons closer than this are refused as ambiguous rather than
/// guessed.
pub const CASE_SLOPE_TOLERANCE: f64 = 1e-8;

/// Matched curve values must agree at least this well.
pub const MATCH_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Root residual demanded of the branch-matching bisection.
pub const ROOT_RESIDUAL_TOLERANCE: f64 = 1e-12;

/// Corners with derivative gaps below this are treated as tangential noise.
pub const KINK_MIN_GAP: f64 = 1e-10;

/// Default position of the free parameter `p5` between the split
/// combination's second branch and 1/2.
pub const DEFAULT_P5_FRACTION: f64 = 0.6;

// ---------------------------------------------------------------------------
// SupTau: pointwise maxima of combinations
// ---------------------------------------------------------------------------

/// The pointwise maximum of finitely many [`TauCurve`]s.
///
/// Inherits the exact anchors (value 1 at `q = 0`, 0 at `q = 1`) from its
/// members. Maxima of convex curves are convex; corners sit where the
/// attaining curve changes, and there the one-sided derivatives are the
/// extreme member slopes over the attaining set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupTau {
    curves: Vec<TauCurve>,
}

/// Value ties below this count as joint attainment when picking the active
/// curve.
const ACTIVE_TIE_TOLERANCE: f64 = 1e-12;

impl SupTau {
    pub fn new(curves: Vec<TauCurve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Empty { what: "curve list" });
        }
        Ok(SupTau { curves })
    }

    pub fn curves(&self) -> &[TauCurve] {
        &self.curves
    }

    /// `max_i τ_i(q)`.
    pub fn value(&self, q: f64) -> f64 {
        self.curves
            .iter()
            .map(|c| c.value(q))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest index attaining the maximum at `q` (within an absolute tie
    /// tolerance, so near-coincident curves resolve deterministically).
    pub fn active_index(&self, q: f64) -> usize {
        let values: Vec<f64> = self.curves.iter().map(|c| c.value(q)).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        values
            .iter()
            .position(|&v| v >= max - ACTIVE_TIE_TOLERANCE)
            .expect("maximum is attained")
    }

    /// All indices attaining the maximum at `q` within `tol`.
    pub fn active_set(&self, q: f64, tol: f64) -> Vec<usize> {
        let values: Vec<f64> = self.curves.iter().map(|c| c.value(q)).collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= max - tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// Left derivative of the maximum: the smallest member slope over the
    /// attaining set.
    pub fn left_slope(&self, q: f64) -> f64 {
        self.active_set(q, ACTIVE_TIE_TOLERANCE)
            .iter()
            .map(|&i| self.curves[i].slope(q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Right derivative: the largest member slope over the attaining set.
    pub fn right_slope(&self, q: f64) -> f64 {
        self.active_set(q, ACTIVE_TIE_TOLERANCE)
            .iter()
            .map(|&i| self.curves[i].slope(q))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Derivative jump `right − left` at `q` (0 away from corners).
    pub fn slope_gap(&self, q: f64) -> f64 {
        self.right_slope(q) - self.left_slope(q)
    }
}

// ---------------------------------------------------------------------------
// Kink detection
// ---------------------------------------------------------------------------

/// A located corner of a [`SupTau`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kink {
    /// Corner location.
    pub q: f64,
    /// Slope of the curve active to the left, evaluated at `q`.
    pub left_slope: f64,
    /// Slope of the curve active to the right.
    pub right_slope: f64,
    /// `right_slope − left_slope`, strictly positive for every reported kink.
    pub gap: f64,
    /// Index of the curve owning the left side.
    pub left_curve: usize,
    /// Index of the curve owning the right side.
    pub right_curve: usize,
}

/// Ordered list of corners found on a scan grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub kinks: Vec<Kink>,
}

/// Tunables for [`detect_kinks`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkOptions {
    /// Bisection stops when the bracket is narrower than this.
    pub bisect_tol: f64,
    /// Ownership changes with derivative jump below this are dropped as
    /// tangential.
    pub min_gap: f64,
}

impl Default for KinkOptions {
    fn default() -> Self {
        KinkOptions {
            bisect_tol: 1e-12,
            min_gap: KINK_MIN_GAP,
        }
    }
}

/// Scan a sorted grid for changes of the attaining curve and refine each
/// change to a corner by bisecting the difference of the two owners.
///
/// Slopes are reported from the owners' analytic derivatives, never from
/// finite differences. If the attaining index changes more than once inside
/// a single grid cell (detected by probing the cell midpoint), the grid
/// cannot localise the corners and the scan fails with the offending cell.
pub fn detect_kinks(
    sup: &SupTau,
    qs: &[f64],
    opts: &KinkOptions,
) -> Result<TransitionReport> {
    if qs.len() < 3 {
        return Err(Error::Empty {
            what: "kink scan grid (need ≥ 3 points)",
        });
    }
    for i in 1..qs.len() {
        if qs[i] <= qs[i - 1] {
            return Err(Error::UnsortedGrid { index: i });
        }
    }
    // Two owners are interchangeable at q when their values coincide within
    // the tie tolerance; that keeps near-identical curves from flickering.
    let same = |i: usize, j: usize, q: f64| -> bool {
        i == j || (sup.curves[i].value(q) - sup.curves[j].value(q)).abs() <= ACTIVE_TIE_TOLERANCE
    };
    let mut kinks = Vec::new();
    let owners: Vec<usize> = qs.iter().map(|&q| sup.active_index(q)).collect();
    for i in 0..qs.len() - 1 {
        let (lo, hi) = (qs[i], qs[i + 1]);
        let (a, b) = (owners[i], owners[i + 1]);
        let mid = 0.5 * (lo + hi);
        let m = sup.active_index(mid);
        if same(a, b, hi) && same(a, b, lo) {
            // no net change across the cell; the midpoint must agree
            if !same(m, a, mid) {
                return Err(Error::GridTooCoarse { lo, hi });
            }
            continue;
        }
        // net ownership change: the midpoint must side with one endpoint,
        // otherwise the cell hides at least two crossings
        let (bra, ket) = if same(m, a, mid) {
            (mid, hi)
        } else if same(m, b, mid) {
            (lo, mid)
        } else {
            return Err(Error::GridTooCoarse { lo, hi });
        };
        let h = |q: f64| sup.curves[b].value(q) - sup.curves[a].value(q);
        let h_bra = h(bra);
        let h_ket = h(ket);
        let q_star = if h_bra == 0.0 {
            bra
        } else if h_ket == 0.0 {
            ket
        } else if h_bra * h_ket > 0.0 {
            // The crossing hugs an endpoint inside the tie tolerance (the
            // endpoint owner was resolved by the tie rule); snap to the
            // endpoint where the curves are closest.
            if h_bra.abs() <= h_ket.abs() {
                bra
            } else {
                ket
            }
        } else {
            bisect_root(&h, bra, ket, opts.bisect_tol)
        };
        let left_slope = sup.curves[a].slope(q_star);
        let right_slope = sup.curves[b].slope(q_star);
        let gap = right_slope - left_slope;
        if gap >= opts.min_gap {
            kinks.push(Kink {
                q: q_star,
                left_slope,
                right_slope,
                gap,
                left_curve: a,
                right_curve: b,
            });
        }
    }
    Ok(TransitionReport { kinks })
}

/// Bisect a continuous `h` with `h(lo)` and `h(hi)` of opposite (weak) signs
/// down to a bracket of width `tol`; returns the midpoint of the final
/// bracket.
fn bisect_root(h: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut h_lo = h(lo);
    if h_lo == 0.0 {
        return lo;
    }
    if h(hi) == 0.0 {
        return hi;
    }
    let lo_neg = h_lo < 0.0;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let h_mid = h(mid);
        if h_mid == 0.0 {
            return mid;
        }
        if (h_mid < 0.0) == lo_neg {
            lo = mid;
            h_lo = h_mid;
        } else {
            hi = mid;
        }
    }
    let _ = h_lo;
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Monotone ratio and single crossing
// ---------------------------------------------------------------------------

/// Evaluations of the three-branch difference ratio
/// `(τ(p1,·) − τ(p2,·)) / (τ(p2,·) − τ(p3,·))` on a grid, with any adjacent
/// non-decrease recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub qs: Vec<f64>,
    pub values: Vec<f64>,
    /// `(index, increase)` wherever `values[i+1] > values[i] + 1e-12`.
    pub violations: Vec<(usize, f64)>,
}

impl RatioReport {
    pub fn is_decreasing(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that the difference ratio of three ordered branches is decreasing
/// on a grid in `(1, ∞)` — the monotonicity underlying uniqueness of curve
/// crossings. `p1 < p2 < p3` must lie in `(0, 1/2)`; the denominator is
/// then strictly positive for `q > 1`.
pub fn ratio_is_decreasing(p1: f64, p2: f64, p3: f64, qs: &[f64]) -> Result<RatioReport> {
    if !(0.0 < p1 && p1 < p2 && p2 < p3 && p3 < 0.5) {
        return Err(Error::InvalidParameter {
            detail: format!("need 0 < p1 < p2 < p3 < 1/2, got ({p1}, {p2}, {p3})"),
        });
    }
    if qs.is_empty() {
        return Err(Error::Empty { what: "ratio grid" });
    }
    for (i, &q) in qs.iter().enumerate() {
        if q <= 1.0 {
            return Err(Error::InvalidParameter {
                detail: format!("ratio grid must lie in (1, ∞), got {q}"),
            });
        }
        if i > 0 && q <= qs[i - 1] {
            return Err(Error::UnsortedGrid { index: i });
        }
    }
    let (w1, w2, w3) = (Weight::new(p1)?, Weight::new(p2)?, Weight::new(p3)?);
    let mut values = Vec::with_capacity(qs.len());
    for &q in qs {
        let num = tau_single(w1, q) - tau_single(w2, q);
        let den = tau_single(w2, q) - tau_single(w3, q);
        if den.abs() < 1e-14 {
            return Err(Error::InvalidParameter {
                detail: format!("ratio denominator vanished at q = {q}"),
            });
        }
        values.push(num / den);
    }
    let violations = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] + 1e-12)
        .map(|(i, w)| (i, w[1] - w[0]))
        .collect();
    Ok(RatioReport {
        qs: qs.to_vec(),
        values,
        violations,
    })
}

/// How a two-component combination relates to a single branch on `(1, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CrossingClassification {
    /// The curves never meet on the scanned range.
    NoCrossing,
    /// They meet exactly once; the combination is above before `q0` and
    /// below after.
    SingleCrossing { q0: f64, residual: f64 },
}

/// Classify the relation of a two-component combination to the branch
/// `τ(p0, ·)` on a grid in `(1, ∞)`: either they never meet, or they meet
/// exactly once (located by bisection). More than one sign change
/// contradicts the monotone-ratio property and is reported as an error.
pub fn single_crossing(
    curve: &TauCurve,
    p0: f64,
    qs: &[f64],
) -> Result<CrossingClassification> {
    if curve.components().len() != 2 {
        return Err(Error::InvalidParameter {
            detail: format!(
                "crossing classification needs a two-component curve, got {}",
                curve.components().len()
            ),
        });
    }
    let w0 = Weight::new(p0)?;
    if qs.len() < 2 {
        return Err(Error::Empty {
            what: "crossing grid (need ≥ 2 points)",
        });
    }
    for (i, &q) in qs.iter().enumerate() {
        if q <= 1.0 {
            return Err(Error::InvalidParameter {
                detail: format!("crossing grid must lie in (1, ∞), got {q}"),
            });
        }
        if i > 0 && q <= qs[i - 1] {
            return Err(Error::UnsortedGrid { index: i });
        }
    }
    let h = |q: f64| curve.value(q) - tau_single(w0, q);
    let signs: Vec<f64> = qs.iter().map(|&q| h(q)).collect();
    let mut crossing: Option<(f64, f64)> = None;
    for i in 0..qs.len() - 1 {
        let change = signs[i] == 0.0 || signs[i] * signs[i + 1] < 0.0;
        if change {
            if crossing.is_some() {
                return Err(Error::UnexpectedCrossing {
                    q: 0.5 * (qs[i] + qs[i + 1]),
                });
            }
            crossing = Some((qs[i], qs[i + 1]));
        }
    }
    match crossing {
        None => Ok(CrossingClassification::NoCrossing),
        Some((lo, hi)) => {
            let q0 = bisect_root(&h, lo, hi, 1e-13);
            Ok(CrossingClassification::SingleCrossing {
                q0,
                residual: h(q0).abs(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Branch matching and the interpolation system
// ---------------------------------------------------------------------------

/// Find the branch parameter `p4` strictly between the curve's first two
/// component parameters with `τ(p4, q1) = curve(q1)`, by bisection.
///
/// `p ↦ τ(p, q1)` is strictly *decreasing* on `(0, 1/2)` for `q1 > 1`
/// (larger `p` spreads the two digit weights less, lowering the moment sum),
/// so the matching parameter is unique; a single-component curve is its own
/// match.
pub fn find_matching_p(curve: &TauCurve, q1: f64) -> Result<Weight> {
    if !(q1.is_finite() && q1 > 1.0) {
        return Err(Error::InvalidParameter {
            detail: format!("branch matching needs q1 > 1, got {q1}"),
        });
    }
    let comps = curve.components();
    if comps.len() == 1 {
        return Ok(comps[0].p);
    }
    let (mut lo, mut hi) = (comps[0].p.value(), comps[1].p.value());
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let target = curve.value(q1);
    let g = |p: f64| tau_single(Weight::new(p).expect("bracket stays in (0,1)"), q1) - target;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo == 0.0 {
        return Weight::new(lo);
    }
    if g_hi == 0.0 {
        return Weight::new(hi);
    }
    if (g_lo < 0.0) == (g_hi < 0.0) {
        return Err(Error::NoSignChange {
            what: "branch matching in p",
            lo,
            hi,
        });
    }
    let lo_neg = g_lo < 0.0;
    let mut best = 0.5 * (lo + hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        best = mid;
        let g_mid = g(mid);
        if g_mid.abs() < 0.25 * ROOT_RESIDUAL_TOLERANCE {
            break;
        }
        if (g_mid < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON * hi {
            break;
        }
    }
    let residual = g(best).abs();
    if residual > ROOT_RESIDUAL_TOLERANCE {
        return Err(Error::ResidualTooLarge {
            what: "branch matching in p",
            residual,
            tolerance: ROOT_RESIDUAL_TOLERANCE,
        });
    }
    Weight::new(best)
}

/// A solved three-branch interpolation: coefficients, conditioning
/// diagnostics, and the assembled curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSolution {
    /// `(λ3, λ4, λ5)` attached to the branches at `p1, p4, p5`.
    pub lambdas: [f64; 3],
    /// Determinant of the reduced 2×2 system (conditioning witness).
    pub determinant: f64,
    /// Largest absolute row residual of the full 3×3 system.
    pub max_residual: f64,
    /// The combination `λ3 τ(p1,·) + λ4 τ(p4,·) + λ5 τ(p5,·)`.
    pub curve: TauCurve,
}

/// Solve the two-point interpolation system
///
/// ```text
/// λ3 τ(p1,qi) + λ4 τ(p4,qi) + λ5 τ(p5,qi) = target_i   (i = 1, 2)
/// λ3 + λ4 + λ5 = 1
/// ```
///
/// by eliminating the normalisation row (Cramer on the reduced 2×2). The
/// solution must be strictly positive — a sign failure is reported, never
/// silently accepted — and is returned with its residuals and determinant.
pub fn solve_interpolation_system(
    p1: f64,
    p4: f64,
    p5: f64,
    q1: f64,
    q2: f64,
    target1: f64,
    target2: f64,
) -> Result<SystemSolution> {
    if !(0.0 < p1 && p1 < p4 && p4 < p5 && p5 < 0.5) {
        return Err(Error::InvalidParameter {
            detail: format!("need 0 < p1 < p4 < p5 < 1/2, got ({p1}, {p4}, {p5})"),
        });
    }
    if !(1.0 < q1 && q1 < q2) {
        return Err(Error::InvalidParameter {
            detail: format!("need 1 < q1 < q2, got ({q1}, {q2})"),
        });
    }
    let (w1, w4, w5) = (Weight::new(p1)?, Weight::new(p4)?, Weight::new(p5)?);
    let t = |w: Weight, q: f64| tau_single(w, q);
    // Substitute λ5 = 1 − λ3 − λ4 into the two interpolation rows:
    let a = t(w1, q1) - t(w5, q1);
    let b = t(w4, q1) - t(w5, q1);
    let c = t(w1, q2) - t(w5, q2);
    let d = t(w4, q2) - t(w5, q2);
    let r1 = target1 - t(w5, q1);
    let r2 = target2 - t(w5, q2);
    let det = a * d - b * c;
    let scale = (a * d).abs().max((b * c).abs()).max(1e-30);
    if det.abs() < 1e-12 * scale {
        return Err(Error::SingularSystem { determinant: det });
    }
    let l3 = (r1 * d - b * r2) / det;
    let l4 = (a * r2 - r1 * c) / det;
    let l5 = 1.0 - l3 - l4;
    if !(l3 > 0.0 && l4 > 0.0 && l5 > 0.0) {
        return Err(Error::NonPositiveSolution {
            l1: l3,
            l2: l4,
            l3: l5,
        });
    }
    let res1 = (l3 * t(w1, q1) + l4 * t(w4, q1) + l5 * t(w5, q1) - target1).abs();
    let res2 = (l3 * t(w1, q2) + l4 * t(w4, q2) + l5 * t(w5, q2) - target2).abs();
    let res3 = (l3 + l4 + l5 - 1.0).abs();
    let max_residual = res1.max(res2).max(res3);
    if max_residual > MATCH_RESIDUAL_TOLERANCE {
        return Err(Error::ResidualTooLarge {
            what: "interpolation system",
            residual: max_residual,
            tolerance: MATCH_RESIDUAL_TOLERANCE,
        });
    }
    let curve = TauCurve::new(vec![(l3, p1), (l4, p4), (l5, p5)])?;
    Ok(SystemSolution {
        lambdas: [l3, l4, l5],
        determinant: det,
        max_residual,
        curve,
    })
}

// ---------------------------------------------------------------------------
// Combination splitting
// ---------------------------------------------------------------------------

/// Tunables for [`split_combination`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Free branch parameter; `None` places it `p5_fraction` of the way from
    /// the split pair's larger parameter to 1/2.
    pub p5: Option<f64>,
    /// Fraction used when `p5` is `None`.
    pub p5_fraction: f64,
    /// Number of cells in the off-target coincidence scan.
    pub verify_points: usize,
    /// Upper end of the scan; `None` means `1.5·q2`.
    pub q_max: Option<f64>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            p5: None,
            p5_fraction: DEFAULT_P5_FRACTION,
            verify_points: 400,
            q_max: None,
        }
    }
}

/// A successful split: the replacement curve plus its construction
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    /// The new combination: three branches replacing the first two
    /// components, followed by the untouched tail.
    pub curve: TauCurve,
    pub p4: f64,
    pub p5: f64,
    /// Reduced-system coefficients before rescaling by the pair mass.
    pub lambdas: [f64; 3],
    pub determinant: f64,
    /// `|new − old|` at the two matched moments.
    pub residuals: (f64, f64),
    /// Signed `new′ − old′` at the two matched moments.
    pub slope_gaps: (f64, f64),
}

/// Replace the first two components of a combination by three branches so
/// the curve value is preserved exactly at `q1` and `q2`, the slopes there
/// change, and no new coincidence appears elsewhere on `(1, ∞)`.
///
/// The first two components are rescaled to a probability pair, the
/// matching parameter `p4` and free parameter `p5` are placed between and
/// beyond them, the interpolation system is solved against the rescaled
/// subcurve, and the solution is scaled back and rejoined with the
/// untouched tail. Equality, slope separation and off-target separation are
/// all verified before the outcome is returned.
pub fn split_combination(
    curve: &TauCurve,
    q1: f64,
    q2: f64,
    opts: &SplitOptions,
) -> Result<SplitOutcome> {
    let comps = curve.components();
    if comps.len() < 2 {
        return Err(Error::InvalidParameter {
            detail: "splitting needs a combination with at least two components".into(),
        });
    }
    if !(1.0 < q1 && q1 < q2) {
        return Err(Error::InvalidParameter {
            detail: format!("need 1 < q1 < q2, got ({q1}, {q2})"),
        });
    }
    let (pa, pb) = (comps[0].p.value(), comps[1].p.value());
    if !(pa < pb && pb < 0.5) {
        return Err(Error::InvalidParameter {
            detail: format!(
                "the leading pair must satisfy p_a < p_b < 1/2, got ({pa}, {pb})"
            ),
        });
    }
    let (la, lb) = (comps[0].lambda, comps[1].lambda);
    let pair_mass = la + lb;
    let sub = TauCurve::new(vec![(la / pair_mass, pa), (lb / pair_mass, pb)])?;

    let p4 = find_matching_p(&sub, q1)?.value();
    let p5 = match opts.p5 {
        Some(v) => {
            if !(pb < v && v < 0.5) {
                return Err(Error::InvalidParameter {
                    detail: format!("p5 = {v} must lie in ({pb}, 1/2)"),
                });
            }
            v
        }
        None => pb + opts.p5_fraction * (0.5 - pb),
    };
    let sol = solve_interpolation_system(pa, p4, p5, q1, q2, sub.value(q1), sub.value(q2))?;

    let mut new_comps: Vec<(f64, f64)> = vec![
        (pair_mass * sol.lambdas[0], pa),
        (pair_mass * sol.lambdas[1], p4),
        (pair_mass * sol.lambdas[2], p5),
    ];
    for c in &comps[2..] {
        new_comps.push((c.lambda, c.p.value()));
    }
    let new_curve = TauCurve::new(new_comps)?;

    // equality at the matched moments
    let res1 = (new_curve.value(q1) - curve.value(q1)).abs();
    let res2 = (new_curve.value(q2) - curve.value(q2)).abs();
    let worst = res1.max(res2);
    if worst > MATCH_RESIDUAL_TOLERANCE {
        return Err(Error::ResidualTooLarge {
            what: "split equality at the matched moments",
            residual: worst,
            tolerance: MATCH_RESIDUAL_TOLERANCE,
        });
    }
    // genuine slope separation
    let gap1 = new_curve.slope(q1) - curve.slope(q1);
    let gap2 = new_curve.slope(q2) - curve.slope(q2);
    for (q, gap) in [(q1, gap1), (q2, gap2)] {
        if gap.abs() < CASE_SLOPE_TOLERANCE {
            return Err(Error::SlopeGapTooSmall {
                q,
                gap: gap.abs(),
                threshold: CASE_SLOPE_TOLERANCE,
            });
        }
    }
    // no coincidence away from the matched moments
    let scan_lo = 1.0 + 0.02 * (q1 - 1.0);
    let scan_hi = opts.q_max.unwrap_or(1.5 * q2);
    let n = opts.verify_points.max(16);
    let step = (scan_hi - scan_lo) / n as f64;
    let radius = (2.5 * step).max(1e-3);
    let mut prev_q = scan_lo;
    let mut prev_h = new_curve.value(prev_q) - curve.value(prev_q);
    for i in 1..=n {
        let q = scan_lo + step * i as f64;
        let h = new_curve.value(q) - curve.value(q);
        let sign_change = prev_h == 0.0 || prev_h * h < 0.0;
        if sign_change {
            let cell_mid = 0.5 * (prev_q + q);
            let near_target =
                (cell_mid - q1).abs() <= radius || (cell_mid - q2).abs() <= radius;
            if !near_target {
                return Err(Error::UnexpectedCrossing { q: cell_mid });
            }
        }
        prev_q = q;
        prev_h = h;
    }

    Ok(SplitOutcome {
        curve: new_curve,
        p4,
        p5,
        lambdas: sol.lambdas,
        determinant: sol.determinant,
        residuals: (res1, res2),
        slope_gaps: (gap1, gap2),
    })
}

// ---------------------------------------------------------------------------
// Realization
// ---------------------------------------------------------------------------

/// Realise a combination as an explicit weight sequence of length
/// `horizon`: component `p_i` occupies a deterministic interleaved set of
/// positions with every length-`n` prefix holding `⌊λ_i n⌋` or `⌈λ_i n⌉` of
/// them, so `|τ_n − curve|` decays like `(components − 1)/n` uniformly on
/// compact moment ranges. A single-component curve realises as a constant
/// sequence.
pub fn realize_curve(curve: &TauCurve, horizon: usize) -> Result<WeightSequence> {
    let comps = curve.components();
    if horizon < comps.len() {
        return Err(Error::InvalidParameter {
            detail: format!(
                "horizon {horizon} is shorter than the component count {}",
                comps.len()
            ),
        });
    }
    if comps.len() == 1 {
        return WeightSequence::constant(comps[0].p.value());
    }
    let quota = quota_sequence(curve)?;
    let weights: Vec<f64> = quota
        .weights()
        .take(horizon)
        .map(|w| w.value())
        .collect();
    WeightSequence::explicit(weights)
}

/// The lazy (unbounded) quota realisation of a combination.
pub fn quota_sequence(curve: &TauCurve) -> Result<WeightSequence> {
    WeightSequence::quota(
        curve
            .components()
            .iter()
            .map(|c| (c.lambda, c.p.value()))
            .collect(),
    )
}

/// Splice several weight sequences along a block rule so that, when the
/// rule grows superexponentially, the limsup scaling curve of the result is
/// the pointwise maximum of the parts' curves. Part `i` is active on blocks
/// `k ≡ i (mod m)` and keeps its own running position across its blocks.
///
/// The maximum-of-curves guarantee needs block growth fast enough that each
/// block end is dominated by its own block ([`BlockRule::is_superexponential`]
/// classifies this); the splice itself is well-defined for any valid rule.
pub fn realize_sup(parts: Vec<WeightSequence>, rule: BlockRule) -> Result<WeightSequence> {
    if parts.len() < 2 {
        return Err(Error::InvalidParameter {
            detail: "a supremum splice needs at least two sequences".into(),
        });
    }
    WeightSequence::blocks(parts, rule)
}

// ---------------------------------------------------------------------------
// The staged construction
// ---------------------------------------------------------------------------

/// Inputs for [`build_dense_transitions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    /// Nested moment targets `[a_2, b_2, a_3, b_3, …]`, one pair per split
    /// stage: each pair strictly inside its predecessor, all above 1.
    pub targets: Vec<f64>,
    /// Number of curves to build (stage 1 is the seed pair; each later
    /// stage adds one split). Requires `targets.len() == 2·(stages − 1)`.
    pub stages: usize,
    /// Seed branch parameters (defaults 0.2 and 0.4).
    #[serde(default = "default_p_low")]
    pub p_low: f64,
    #[serde(default = "default_p_high")]
    pub p_high: f64,
    /// Placement fraction for the free parameter at each split.
    #[serde(default = "default_p5_fraction")]
    pub p5_fraction: f64,
    /// How many times the free parameter may be pulled toward its anchor
    /// while repairing a reversed stage.
    #[serde(default = "default_shrink_budget")]
    pub shrink_budget: u32,
    /// Hard ceiling on `stages`.
    #[serde(default = "default_max_stages")]
    pub max_stages: usize,
}

fn default_p_low() -> f64 {
    0.2
}
fn default_p_high() -> f64 {
    0.4
}
fn default_p5_fraction() -> f64 {
    DEFAULT_P5_FRACTION
}
fn default_shrink_budget() -> u32 {
    40
}
fn default_max_stages() -> usize {
    8
}

impl ConstructionParams {
    /// Targets plus seed defaults.
    pub fn new(targets: Vec<f64>, stages: usize) -> Self {
        ConstructionParams {
            targets,
            stages,
            p_low: default_p_low(),
            p_high: default_p_high(),
            p5_fraction: default_p5_fraction(),
            shrink_budget: default_shrink_budget(),
            max_stages: default_max_stages(),
        }
    }
}

/// What one split stage did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Stage number (2-based: stage `k` built curve `k`).
    pub stage: usize,
    /// 1 when the new curve exceeds the running maximum inside its target
    /// pair; 2 when reversed.
    pub case: u8,
    /// The target pair the stage split at.
    pub targets: (f64, f64),
    /// Index of the curve that owned the maximum there.
    pub owner: usize,
    pub p4: f64,
    pub p5: f64,
    /// Times the free parameter was pulled inward before acceptance.
    pub shrinks: u32,
    pub lambdas: [f64; 3],
    pub determinant: f64,
    /// Equality residuals at the two targets.
    pub match_residuals: (f64, f64),
    /// Signed slope differences (new − owner) at the two targets.
    pub slope_gaps: (f64, f64),
    /// Set when a reversed stage relocated the previous pair of corners.
    pub adjusted: Option<AdjustedPair>,
}

/// Record of corners moved by a reversed-stage repair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedPair {
    /// Which stage's target pair moved.
    pub stage: usize,
    pub old: (f64, f64),
    pub new: (f64, f64),
    /// Derivative gaps at the old corners (before) and new corners (after).
    pub old_gaps: (f64, f64),
    pub new_gaps: (f64, f64),
}

/// Complete, serialisable record of a staged construction: inputs, every
/// curve, every stage decision, and the realised splice components. A saved
/// state can be extended with further target pairs without rebuilding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionState {
    pub params: ConstructionParams,
    pub rule: BlockRule,
    /// Targets as supplied.
    pub original_targets: Vec<f64>,
    /// Current targets (reversed-stage repairs may have moved some).
    pub targets: Vec<f64>,
    /// Curves 1..=M in construction order.
    pub curves: Vec<TauCurve>,
    pub stages: Vec<StageRecord>,
    /// Realised partial splices: entry `k` interleaves the first `k+1`
    /// curve realisations along the block rule.
    pub realized: Vec<WeightSequence>,
}

impl ConstructionState {
    /// The running maximum of all constructed curves.
    pub fn sup(&self) -> SupTau {
        SupTau::new(self.curves.clone()).expect("state holds at least one curve")
    }

    pub fn stage_count(&self) -> usize {
        self.curves.len()
    }

    /// Current corner locations, sorted.
    pub fn kink_targets(&self) -> Vec<f64> {
        let mut ts = self.targets.clone();
        ts.sort_by(|x, y| x.partial_cmp(y).expect("targets are finite"));
        ts
    }

    /// The quota realisations `μ_1..μ_M` of the individual curves.
    pub fn component_measures(&self) -> Result<Vec<WeightSequence>> {
        self.curves.iter().map(quota_sequence).collect()
    }

    /// The diagonal splice: block `k` carries the depth-aligned weights of
    /// the `min(k, M)`-stage partial splice, so every finite depth sees a
    /// finite-stage approximation and the limsup curve is the full maximum.
    pub fn diagonal(&self) -> Result<WeightSequence> {
        WeightSequence::diagonal(self.realized.clone(), self.rule.clone())
    }
}

/// Validate the nesting `1 < a_2 < a_3 < … < b_3 < b_2` of target pairs.
fn validate_nesting(targets: &[f64]) -> Result<()> {
    if targets.len() % 2 != 0 {
        return Err(Error::TargetNesting {
            detail: format!("odd number of targets ({})", targets.len()),
        });
    }
    let pairs: Vec<(f64, f64)> = targets.chunks(2).map(|c| (c[0], c[1])).collect();
    for (j, &(a, b)) in pairs.iter().enumerate() {
        if !(a.is_finite() && b.is_finite() && a > 1.0 && a < b) {
            return Err(Error::TargetNesting {
                detail: format!("pair {} = ({a}, {b}) must satisfy 1 < a < b", j + 2),
            });
        }
        if j > 0 {
            let (pa, pb) = pairs[j - 1];
            if !(a > pa && b < pb) {
                return Err(Error::TargetNesting {
                    detail: format!(
                        "pair {} = ({a}, {b}) must nest strictly inside ({pa}, {pb})",
                        j + 2
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Run the staged construction: seed with the two-branch combination, then
/// for each target pair split the curve owning the running maximum there
/// and audit the corners of the new maximum. Returns the full state; any
/// ambiguity or audit failure is an error, never a silent repair.
pub fn build_dense_transitions(
    params: &ConstructionParams,
    rule: &BlockRule,
) -> Result<ConstructionState> {
    if params.stages == 0 {
        return Err(Error::InvalidParameter {
            detail: "the construction needs at least one stage".into(),
        });
    }
    if params.stages > params.max_stages {
        return Err(Error::InvalidParameter {
            detail: format!(
                "stages = {} exceeds the stage ceiling {}",
                params.stages, params.max_stages
            ),
        });
    }
    if params.targets.len() != 2 * (params.stages - 1) {
        return Err(Error::TargetNesting {
            detail: format!(
                "{} stages need {} targets, got {}",
                params.stages,
                2 * (params.stages - 1),
                params.targets.len()
            ),
        });
    }
    if !(0.0 < params.p_low && params.p_low < params.p_high && params.p_high < 0.5) {
        return Err(Error::InvalidParameter {
            detail: format!(
                "seed parameters must satisfy 0 < p_low < p_high < 1/2, got ({}, {})",
                params.p_low, params.p_high
            ),
        });
    }
    validate_nesting(&params.targets)?;
    rule.validate()?;

    let seed = TauCurve::new(vec![(0.5, params.p_low), (0.5, params.p_high)])?;
    let mut state = ConstructionState {
        params: params.clone(),
        rule: rule.clone(),
        original_targets: params.targets.clone(),
        targets: params.targets.clone(),
        curves: vec![seed],
        stages: Vec::new(),
        realized: Vec::new(),
    };
    run_stages(&mut state, 2)?;
    build_realizations(&mut state)?;
    Ok(state)
}

/// Extend a finished construction with further nested target pairs,
/// continuing the induction from the existing curves.
pub fn extend_construction(
    mut state: ConstructionState,
    extra_targets: &[f64],
) -> Result<ConstructionState> {
    if extra_targets.is_empty() || extra_targets.len() % 2 != 0 {
        return Err(Error::TargetNesting {
            detail: format!(
                "extension needs a positive even number of targets, got {}",
                extra_targets.len()
            ),
        });
    }
    let new_stages = state.curves.len() + extra_targets.len() / 2;
    if new_stages > state.params.max_stages {
        return Err(Error::InvalidParameter {
            detail: format!(
                "extension to {} stages exceeds the stage ceiling {}",
                new_stages, state.params.max_stages
            ),
        });
    }
    let mut combined = state.targets.clone();
    combined.extend_from_slice(extra_targets);
    validate_nesting(&combined)?;

    let from = state.curves.len() + 1;
    state.targets = combined;
    state.original_targets.extend_from_slice(extra_targets);
    state.params.targets = state.original_targets.clone();
    state.params.stages = new_stages;
    run_stages(&mut state, from)?;
    build_realizations(&mut state)?;
    Ok(state)
}

fn build_realizations(state: &mut ConstructionState) -> Result<()> {
    let measures = state.component_measures()?;
    let mut realized = Vec::with_capacity(measures.len());
    for k in 1..=measures.len() {
        if k == 1 {
            realized.push(measures[0].clone());
        } else {
            realized.push(WeightSequence::blocks(
                measures[..k].to_vec(),
                state.rule.clone(),
            )?);
        }
    }
    state.realized = realized;
    Ok(())
}

fn run_stages(state: &mut ConstructionState, from: usize) -> Result<()> {
    for k in from..=state.params.stages {
        let (curve, record) = advance_stage(state, k)?;
        state.curves.push(curve);
        state.stages.push(record);
        audit_corners(state, k)?;
    }
    Ok(())
}

/// Build curve `k` by splitting the owner of the running maximum at target
/// pair `k`, classifying the overshoot direction and repairing a reversed
/// stage if needed.
fn advance_stage(state: &mut ConstructionState, k: usize) -> Result<(TauCurve, StageRecord)> {
    let idx = 2 * (k - 2);
    let (a, b) = (state.targets[idx], state.targets[idx + 1]);
    let sup = state.sup();
    let mid = 0.5 * (a + b);
    let owner = sup.active_index(mid);
    let owner_curve = sup.curves()[owner].clone();
    for q in [a, b] {
        let drift = (sup.value(q) - owner_curve.value(q)).abs();
        if drift > MATCH_RESIDUAL_TOLERANCE {
            return Err(Error::StageFailure {
                stage: k,
                reason: format!(
                    "the curve owning the maximum at the pair midpoint does not own it \
                     at q = {q} (drift {drift:e}); the targets are not strictly inside \
                     the owner's region"
                ),
            });
        }
    }

    let anchor = owner_curve.components()[1].p.value();
    let mut p5 = anchor + state.params.p5_fraction * (0.5 - anchor);
    let mut shrinks = 0u32;
    loop {
        let opts = SplitOptions {
            p5: Some(p5),
            ..SplitOptions::default()
        };
        let outcome = split_combination(&owner_curve, a, b, &opts)?;
        // Overshoot direction, read from the slope differences at the
        // targets (equal values there make the signs decisive).
        let (d_a, d_b) = outcome.slope_gaps;
        for (q, d) in [(a, d_a), (b, d_b)] {
            if d.abs() < CASE_SLOPE_TOLERANCE {
                return Err(Error::AmbiguousCase {
                    stage: k,
                    q,
                    value: d,
                });
            }
        }
        let mid_sign = outcome.curve.value(mid) - sup.value(mid);
        let case = if d_a > 0.0 && d_b < 0.0 {
            1u8
        } else if d_a < 0.0 && d_b > 0.0 {
            2u8
        } else {
            return Err(Error::AmbiguousCase {
                stage: k,
                q: a,
                value: d_a,
            });
        };
        // cross-check the slope classification against the midpoint sign
        if (case == 1 && mid_sign <= 0.0) || (case == 2 && mid_sign >= 0.0) {
            return Err(Error::AmbiguousCase {
                stage: k,
                q: mid,
                value: mid_sign,
            });
        }

        let mut record = StageRecord {
            stage: k,
            case,
            targets: (a, b),
            owner,
            p4: outcome.p4,
            p5: outcome.p5,
            shrinks,
            lambdas: outcome.lambdas,
            determinant: outcome.determinant,
            match_residuals: outcome.residuals,
            slope_gaps: outcome.slope_gaps,
            adjusted: None,
        };

        if case == 1 || k == 2 {
            // Benign: inside overshoot leaves all previous corners intact —
            // and a reversed first split has no previous corners to bury.
            return Ok((outcome.curve, record));
        }

        // Reversed stage with existing corners: the new curve exceeds the
        // maximum just outside its pair and would bury the previous corners.
        match repair_reversed_stage(state, k, &sup, &outcome, a, b) {
            Ok(adjusted) => {
                let pidx = 2 * (k - 3);
                state.targets[pidx] = adjusted.new.0;
                state.targets[pidx + 1] = adjusted.new.1;
                record.adjusted = Some(adjusted);
                return Ok((outcome.curve, record));
            }
            Err(reason) => {
                shrinks += 1;
                if shrinks > state.params.shrink_budget {
                    return Err(Error::StageFailure {
                        stage: k,
                        reason: format!(
                            "reversed-stage repair failed after {shrinks} pulls of the \
                             free parameter: {reason}"
                        ),
                    });
                }
                let gap = p5 - anchor;
                if gap < 1e-12 {
                    return Err(Error::StageFailure {
                        stage: k,
                        reason: format!(
                            "free parameter degenerated to its anchor while repairing: \
                             {reason}"
                        ),
                    });
                }
                p5 = anchor + 0.5 * gap;
            }
        }
    }
}

/// Attempt to confine a reversed stage and relocate the buried corners.
/// Returns the relocation on success, or a human-readable reason to shrink
/// the free parameter and retry.
fn repair_reversed_stage(
    state: &ConstructionState,
    k: usize,
    sup: &SupTau,
    outcome: &SplitOutcome,
    a: f64,
    b: f64,
) -> std::result::Result<AdjustedPair, String> {
    let pidx = 2 * (k - 3);
    let (pa, pb) = (state.targets[pidx], state.targets[pidx + 1]);
    let h = |q: f64| outcome.curve.value(q) - sup.value(q);

    // Confinement guards: midway toward the next corner out on each side
    // (the domain edge stands in at the outermost pair), the new curve must
    // already be below the maximum.
    let outer_left = if k >= 4 { state.targets[2 * (k - 4)] } else { 1.0 };
    let m_l = 0.5 * (pa + outer_left);
    if h(m_l) >= 0.0 {
        return Err(format!(
            "overshoot reaches the left guard at q = {m_l} (pull the free parameter \
             closer to its anchor)"
        ));
    }
    let m_r = if k >= 4 {
        let outer_right = state.targets[2 * (k - 4) + 1];
        let m = 0.5 * (pb + outer_right);
        if h(m) >= 0.0 {
            return Err(format!("overshoot reaches the right guard at q = {m}"));
        }
        m
    } else {
        // outermost pair: march outward until the new curve drops below
        let mut offset = b - a;
        let mut g = pb + offset;
        let mut found = false;
        for _ in 0..48 {
            if h(g) < 0.0 {
                found = true;
                break;
            }
            offset *= 2.0;
            g = pb + offset;
        }
        if !found {
            return Err("the new curve never drops below the maximum to the right".into());
        }
        g
    };

    // The new curve is above the maximum strictly between the old pair and
    // the current pair on each side; probe there for the bracketing sign.
    let t_l = 0.5 * (pa + a);
    let t_r = 0.5 * (b + pb);
    if h(t_l) <= 0.0 || h(t_r) <= 0.0 {
        return Err(format!(
            "expected overshoot between the pairs is absent (h({t_l}) = {}, h({t_r}) = {})",
            h(t_l),
            h(t_r)
        ));
    }
    let q_left = bisect_root(&|q| h(q), m_l, t_l, 1e-10);
    let q_right = bisect_root(&|q| h(q), t_r, m_r, 1e-10);

    // Proximity bounds tighten geometrically with the stage.
    let factor = 0.5f64.powi(k as i32 - 1);
    let defined = &state.targets[..2 * (k - 1)];
    let mut min_gap = f64::INFINITY;
    for i in 0..defined.len() {
        for j in i + 1..defined.len() {
            min_gap = min_gap.min((defined[i] - defined[j]).abs());
        }
    }
    let location_bound = factor * min_gap;
    if (q_left - pa).abs() >= location_bound || (q_right - pb).abs() >= location_bound {
        return Err(format!(
            "relocated corners ({q_left}, {q_right}) drift more than {location_bound} \
             from ({pa}, {pb})"
        ));
    }

    // Derivative gaps must survive the move.
    let old_gap_l = sup.slope_gap(pa);
    let old_gap_r = sup.slope_gap(pb);
    let mut with_new = sup.curves().to_vec();
    with_new.push(outcome.curve.clone());
    let sup_new = SupTau::new(with_new).expect("non-empty curve list");
    let new_gap_l = sup_new.slope_gap(q_left);
    let new_gap_r = sup_new.slope_gap(q_right);
    for (old, new) in [(old_gap_l, new_gap_l), (old_gap_r, new_gap_r)] {
        if (old - new).abs() >= factor * old {
            return Err(format!(
                "corner gap drifted from {old} to {new}, beyond the {factor} relative bound"
            ));
        }
    }

    // The moved pair must still nest between its neighbours.
    let mut candidate = state.targets.clone();
    candidate[pidx] = q_left;
    candidate[pidx + 1] = q_right;
    if let Err(e) = validate_nesting(&candidate) {
        return Err(format!("relocated targets break the nesting: {e}"));
    }

    Ok(AdjustedPair {
        stage: k - 1,
        old: (pa, pb),
        new: (q_left, q_right),
        old_gaps: (old_gap_l, old_gap_r),
        new_gaps: (new_gap_l, new_gap_r),
    })
}

/// Independent audit after each stage: scan the new maximum and require its
/// corners to be exactly the targets of the pairs built so far, each with a
/// healthy gap.
fn audit_corners(state: &ConstructionState, k: usize) -> Result<()> {
    let mut expected: Vec<f64> = state.targets[..2 * (k - 1)].to_vec();
    expected.sort_by(|x, y| x.partial_cmp(y).expect("targets are finite"));
    let t_min = expected[0];
    let t_max = *expected.last().expect("at least one pair");
    let mut min_adjacent = f64::INFINITY;
    for w in expected.windows(2) {
        min_adjacent = min_adjacent.min(w[1] - w[0]);
    }
    let lo = 1.0 + 0.25 * (t_min - 1.0);
    let hi = t_max + (t_max - 1.0).max(0.5);
    let step = (min_adjacent / 7.0).clamp(1e-5, 0.05);
    let grid = q_grid(lo, hi, step)?;
    let report = detect_kinks(&state.sup(), &grid, &KinkOptions::default())?;
    if report.kinks.len() != expected.len() {
        return Err(Error::StageFailure {
            stage: k,
            reason: format!(
                "corner audit found {} corners where {} were expected (at {:?})",
                report.kinks.len(),
                expected.len(),
                report.kinks.iter().map(|kk| kk.q).collect::<Vec<_>>()
            ),
        });
    }
    for (kink, &want) in report.kinks.iter().zip(expected.iter()) {
        if (kink.q - want).abs() > 1e-6 {
            return Err(Error::StageFailure {
                stage: k,
                reason: format!(
                    "corner at {} drifted from its target {want} beyond 1e-6",
                    kink.q
                ),
            });
        }
        if kink.gap < KINK_MIN_GAP {
            return Err(Error::StageFailure {
                stage: k,
                reason: format!("corner at {} has a degenerate gap {:e}", kink.q, kink.gap),
            });
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
    use crate::measure::Weight;
    use crate::spectrum::{binary_entropy, tau_n, DepthSchedule, EmpiricalTau};

    fn w(p: f64) -> Weight {
        Weight::new(p).unwrap()
    }

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        q_grid(lo, hi, step).unwrap()
    }

    // ---- monotone ratio ----

    #[test]
    fn ratio_decreases_on_fine_grids() {
        let r = ratio_is_decreasing(0.1, 0.2, 0.3, &grid(1.01, 6.0, 0.01)).unwrap();
        assert!(r.is_decreasing(), "violations: {:?}", r.violations);
        // strictly decreasing, not merely non-increasing
        for win in r.values.windows(2) {
            assert!(win[1] < win[0]);
        }
    }

    #[test]
    fn ratio_drops_from_head_to_tail() {
        let r = ratio_is_decreasing(0.2, 0.3, 0.4, &grid(1.01, 6.0, 0.2)).unwrap();
        assert!(r.values.first().unwrap() > r.values.last().unwrap());
    }

    #[test]
    fn ratio_handles_degenerate_grid_and_bad_input() {
        let r = ratio_is_decreasing(0.1, 0.2, 0.3, &[2.0]).unwrap();
        assert!(r.is_decreasing());
        assert!(ratio_is_decreasing(0.3, 0.2, 0.1, &[2.0]).is_err());
        assert!(ratio_is_decreasing(0.1, 0.2, 0.3, &[0.5, 2.0]).is_err());
    }

    // ---- single crossing ----

    #[test]
    fn crossing_classification() {
        let curve = TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap();
        let qs = grid(1.1, 6.0, 0.05);
        // the combination's own branch parameter: dominance, never equality
        assert_eq!(
            single_crossing(&curve, 0.2, &qs).unwrap(),
            CrossingClassification::NoCrossing
        );
        // parameters outside the component bracket cannot cross
        assert_eq!(
            single_crossing(&curve, 0.45, &qs).unwrap(),
            CrossingClassification::NoCrossing
        );
        assert_eq!(
            single_crossing(&curve, 0.1, &qs).unwrap(),
            CrossingClassification::NoCrossing
        );
        // a parameter strictly inside crosses exactly once
        match single_crossing(&curve, 0.3, &qs).unwrap() {
            CrossingClassification::SingleCrossing { q0, residual } => {
                assert!(q0 > 1.1 && q0 < 6.0, "q0 = {q0}");
                assert!(residual < 1e-10, "residual = {residual}");
                // combination above before, below after
                let h = |q: f64| curve.value(q) - tau_single(w(0.3), q);
                assert!(h(0.5 * (1.0 + q0)) > 0.0);
                assert!(h(q0 + 1.0) < 0.0);
            }
            other => panic!("expected a single crossing, got {other:?}"),
        }
    }

    // ---- branch matching ----

    #[test]
    fn matching_single_component_is_identity() {
        let curve = TauCurve::single(0.3).unwrap();
        assert_eq!(find_matching_p(&curve, 1.5).unwrap().value(), 0.3);
    }

    #[test]
    fn matching_parameter_lands_inside_with_tiny_residual() {
        let curve = TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap();
        let p4 = find_matching_p(&curve, 1.5).unwrap().value();
        assert!(p4 > 0.2 && p4 < 0.4, "p4 = {p4}");
        let residual = (tau_single(w(p4), 1.5) - curve.value(1.5)).abs();
        assert!(residual < 1e-12, "residual = {residual}");
    }

    #[test]
    fn branch_value_is_strictly_decreasing_in_p() {
        // the monotonicity that makes the matching parameter unique
        for &q in &[1.5, 3.0] {
            let mut prev = f64::INFINITY;
            let mut p = 0.05;
            while p < 0.5 {
                let v = tau_single(w(p), q);
                assert!(v < prev, "τ({p}, {q}) did not decrease");
                prev = v;
                p += 0.05;
            }
        }
    }

    // ---- interpolation system ----

    fn spec_example_split() -> (TauCurve, SystemSolution) {
        let curve = TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap();
        let p4 = find_matching_p(&curve, 1.5).unwrap().value();
        let sol = solve_interpolation_system(
            0.2,
            p4,
            0.45,
            1.5,
            3.0,
            curve.value(1.5),
            curve.value(3.0),
        )
        .unwrap();
        (curve, sol)
    }

    #[test]
    fn interpolation_solution_is_positive_and_interpolates() {
        let (curve, sol) = spec_example_split();
        let [l3, l4, l5] = sol.lambdas;
        assert!(l3 > 0.0 && l4 > 0.0 && l5 > 0.0, "{:?}", sol.lambdas);
        assert!((l3 + l4 + l5 - 1.0).abs() < 1e-12);
        assert!(sol.max_residual < 1e-10);
        assert!(sol.determinant.abs() > 1e-12);
        for q in [1.5, 3.0] {
            assert!((sol.curve.value(q) - curve.value(q)).abs() < 1e-10);
        }
        // perturbing any coefficient breaks a residual: the system is
        // genuinely determined
        let bump = 1e-6;
        let perturbed = TauCurve::new(vec![
            (l3 + bump, 0.2),
            (sol.curve.components()[1].lambda, sol.curve.components()[1].p.value()),
            (l5 - bump, sol.curve.components()[2].p.value()),
        ])
        .unwrap();
        let res = (perturbed.value(1.5) - curve.value(1.5)).abs();
        assert!(res > 1e-9, "perturbation went unnoticed: {res}");
    }

    #[test]
    fn interpolation_rejects_bad_domains() {
        assert!(solve_interpolation_system(0.4, 0.3, 0.45, 1.5, 3.0, -0.1, -0.4).is_err());
        assert!(solve_interpolation_system(0.2, 0.3, 0.45, 3.0, 1.5, -0.1, -0.4).is_err());
    }

    #[test]
    fn solutions_collapse_as_the_free_parameter_approaches_its_anchor() {
        // p5 ↓ p2: the solved triple converges to (λ1, 0, λ2), so the split
        // curve converges to the original.
        let curve = TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap();
        let p4 = find_matching_p(&curve, 1.5).unwrap().value();
        let mut prev_dev = f64::INFINITY;
        for k in 2..=6 {
            let p5 = 0.4 + 10f64.powi(-k);
            let sol = solve_interpolation_system(
                0.2,
                p4,
                p5,
                1.5,
                3.0,
                curve.value(1.5),
                curve.value(3.0),
            )
            .unwrap();
            let dev = (sol.lambdas[0] - 0.5)
                .abs()
                .max(sol.lambdas[1].abs())
                .max((sol.lambdas[2] - 0.5).abs());
            assert!(dev < prev_dev, "deviation failed to shrink at k = {k}");
            prev_dev = dev;
        }
        assert!(prev_dev < 1e-3, "final deviation {prev_dev}");
    }

    // ---- splitting ----

    #[test]
    fn split_preserves_values_and_separates_slopes() {
        let curve = TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap();
        let opts = SplitOptions {
            p5: Some(0.45),
            ..SplitOptions::default()
        };
        let out = split_combination(&curve, 1.5, 3.0, &opts).unwrap();
        assert!(out.residuals.0 < 1e-10 && out.residuals.1 < 1e-10);
        assert!(out.slope_gaps.0.abs() > 1e-8 && out.slope_gaps.1.abs() > 1e-8);
        assert!(out.p4 > 0.2 && out.p4 < 0.4);
        assert_eq!(out.p5, 0.45);
        // overshoot direction is coherent: above inside ⇔ slopes up-down
        let inside = out.curve.value(2.2) - curve.value(2.2);
        if out.slope_gaps.0 > 0.0 {
            assert!(inside > 0.0);
            assert!(out.slope_gaps.1 < 0.0);
        } else {
            assert!(inside < 0.0);
            assert!(out.slope_gaps.1 > 0.0);
        }
        // and strictly outside the pair the sign flips
        let before = out.curve.value(1.2) - curve.value(1.2);
        let after = out.curve.value(4.0) - curve.value(4.0);
        assert!(before * inside < 0.0);
        assert!(after * inside < 0.0);
    }

    #[test]
    fn split_keeps_the_tail_untouched() {
        let curve = TauCurve::new(vec![(0.3, 0.2), (0.3, 0.4), (0.25, 0.44), (0.15, 0.48)])
            .unwrap();
        let out = split_combination(&curve, 1.5, 3.0, &SplitOptions::default()).unwrap();
        let comps = out.curve.components();
        assert_eq!(comps.len(), 5);
        assert_eq!(comps[3].lambda, 0.25);
        assert_eq!(comps[3].p.value(), 0.44);
        assert_eq!(comps[4].lambda, 0.15);
        assert_eq!(comps[4].p.value(), 0.48);
        // the leading three re-weight the mass of the replaced pair
        let head: f64 = comps[..3].iter().map(|c| c.lambda).sum();
        assert!((head - 0.6).abs() < 1e-12);
        for q in [1.5, 3.0] {
            assert!((out.curve.value(q) - curve.value(q)).abs() < 1e-10);
        }
    }

    // ---- realization ----

    #[test]
    fn single_component_realizes_as_a_constant() {
        let curve = TauCurve::single(0.37).unwrap();
        let seq = realize_curve(&curve, 5).unwrap();
        assert_eq!(seq, WeightSequence::constant(0.37).unwrap());
    }

    #[test]
    fn even_split_realizes_exactly_at_even_depths() {
        let curve = TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap();
        let seq = realize_curve(&curve, 10).unwrap();
        let count_low = seq
            .weights()
            .take(10)
            .filter(|p| p.value() == 0.2)
            .count();
        assert_eq!(count_low, 5);
        for &q in &[-1.0, 0.5, 2.0, 3.5] {
            let got = tau_n(&seq, q, 10).unwrap();
            assert!((got - curve.value(q)).abs() < 1e-13, "q = {q}");
        }
    }

    #[test]
    fn thirds_quota_counts_and_exact_depth_nine() {
        let curve =
            TauCurve::new(vec![(1.0 / 3.0, 0.2), (2.0 / 3.0, 0.4)]).unwrap();
        let seq = realize_curve(&curve, 9).unwrap();
        let lows = seq.weights().take(9).filter(|p| p.value() == 0.2).count();
        assert_eq!(lows, 3);
        let got = tau_n(&seq, 2.0, 9).unwrap();
        assert!((got - curve.value(2.0)).abs() < 1e-13);
    }

    #[test]
    fn realization_error_shrinks_with_depth() {
        let curve = TauCurve::new(vec![(0.35, 0.2), (0.4, 0.3), (0.25, 0.45)]).unwrap();
        let seq = quota_sequence(&curve).unwrap();
        let qs = grid(-2.0, 4.0, 0.5);
        let envelope = |n: u64| {
            // k−1 overfull/deficit positions at worst, each contributing
            // at most the largest branch magnitude
            let max_tau: f64 = curve
                .components()
                .iter()
                .flat_map(|c| qs.iter().map(move |&q| tau_single(c.p, q).abs()))
                .fold(0.0, f64::max);
            (curve.components().len() as f64 - 1.0) * max_tau / n as f64
        };
        let mut prev_sup = f64::INFINITY;
        for &n in &[16u64, 64, 256, 1024] {
            let mut sup = 0.0f64;
            for &q in &qs {
                let err = (tau_n(&seq, q, n).unwrap() - curve.value(q)).abs();
                sup = sup.max(err);
            }
            assert!(sup <= envelope(n) * (1.0 + 1e-9), "n = {n}: {sup}");
            assert!(sup <= prev_sup, "error grew from {prev_sup} to {sup} at n = {n}");
            prev_sup = sup;
        }
    }

    #[test]
    fn sup_splice_of_identical_parts_is_transparent() {
        let part = WeightSequence::periodic(vec![0.2, 0.4]).unwrap();
        let spliced = realize_sup(
            vec![part.clone(), part.clone()],
            BlockRule::default_squared(),
        )
        .unwrap();
        for n in [1u64, 7, 32, 100] {
            assert_eq!(
                tau_n(&spliced, 2.0, n).unwrap(),
                tau_n(&part, 2.0, n).unwrap()
            );
        }
    }

    #[test]
    fn sup_splice_alternates_toward_both_branches() {
        let parts = vec![
            WeightSequence::constant(0.3).unwrap(),
            WeightSequence::constant(0.4).unwrap(),
        ];
        let spliced = realize_sup(parts, BlockRule::Geometric { growth: 4.0 }).unwrap();
        let q = 2.0;
        let t3 = tau_single(w(0.3), q);
        let t4 = tau_single(w(0.4), q);
        // block ends: 4, 20, 84, 340, 1364, 5460, 21844 — owners alternate
        let ends = [4u64, 20, 84, 340, 1364, 5460, 21844];
        for (i, &n) in ends.iter().enumerate() {
            let v = tau_n(&spliced, q, n).unwrap();
            let (own, other) = if i % 2 == 0 { (t3, t4) } else { (t4, t3) };
            assert!(
                (v - own).abs() < (v - other).abs(),
                "depth {n}: {v} not nearest its block owner"
            );
        }
        // the late evens/odds approach their owners within the residue of
        // the 1/4 contamination
        let v = tau_n(&spliced, q, 21844).unwrap();
        assert!((v - t3).abs() < 0.26 * (t4 - t3).abs() + 1e-6);
    }

    // ---- SupTau and kinks ----

    #[test]
    fn sup_of_branches_keeps_exact_anchors_and_is_midpoint_convex() {
        let sup = SupTau::new(vec![
            TauCurve::single(0.3).unwrap(),
            TauCurve::single(0.4).unwrap(),
        ])
        .unwrap();
        assert_eq!(sup.value(0.0), 1.0);
        assert_eq!(sup.value(1.0), 0.0);
        let qs = grid(-3.0, 5.0, 0.05);
        for win in qs.windows(3) {
            let chord = 0.5 * (sup.value(win[0]) + sup.value(win[2]));
            assert!(sup.value(win[1]) <= chord + 1e-12, "q = {}", win[1]);
        }
    }

    #[test]
    fn kinks_of_the_two_branch_sup_sit_at_zero_and_one() {
        let sup = SupTau::new(vec![
            TauCurve::single(0.3).unwrap(),
            TauCurve::single(0.4).unwrap(),
        ])
        .unwrap();
        let report =
            detect_kinks(&sup, &grid(-2.0, 3.0, 0.11), &KinkOptions::default()).unwrap();
        assert_eq!(report.kinks.len(), 2);
        let k0 = report.kinks[0];
        let k1 = report.kinks[1];
        assert!(k0.q.abs() < 1e-9, "first kink at {}", k0.q);
        assert!((k1.q - 1.0).abs() < 1e-9, "second kink at {}", k1.q);
        // at 0: the 0.3-branch owns the left, the 0.4-branch the right;
        // the jump is half the base-2 log of 8/7
        assert!((k0.gap - 0.09632253897119796).abs() < 1e-10);
        // at 1 the owners swap back; the jump is the entropy difference
        let want = binary_entropy(w(0.4)) - binary_entropy(w(0.3));
        assert!((k1.gap - want).abs() < 1e-10);
        assert!((k1.gap - 0.0896596952239759).abs() < 1e-10);
        assert!((k1.left_slope - -binary_entropy(w(0.4))).abs() < 1e-10);
        assert!((k1.right_slope - -binary_entropy(w(0.3))).abs() < 1e-10);
        // locations strictly increasing, gaps positive
        assert!(k0.q < k1.q && k0.gap > 0.0 && k1.gap > 0.0);
    }

    #[test]
    fn single_curve_sup_reports_no_kinks() {
        let sup = SupTau::new(vec![TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap()])
            .unwrap();
        let report =
            detect_kinks(&sup, &grid(1.1, 5.0, 0.1), &KinkOptions::default()).unwrap();
        assert!(report.kinks.is_empty());
    }

    #[test]
    fn coarse_grids_that_hide_two_crossings_are_refused() {
        // A split curve meets its original exactly at 1.5 and 3.0; a cell
        // spanning both crossings has the same owner at both ends but the
        // other owner at its midpoint.
        let base = TauCurve::new(vec![(0.5, 0.2), (0.5, 0.4)]).unwrap();
        let out = split_combination(
            &base,
            1.5,
            3.0,
            &SplitOptions {
                p5: Some(0.45),
                ..SplitOptions::default()
            },
        )
        .unwrap();
        let sup = SupTau::new(vec![base, out.curve]).unwrap();
        let coarse = vec![1.2, 3.8, 6.4];
        match detect_kinks(&sup, &coarse, &KinkOptions::default()) {
            Err(Error::GridTooCoarse { lo, hi }) => {
                assert!((lo - 1.2).abs() < 1e-12 && (hi - 3.8).abs() < 1e-12);
            }
            other => panic!("expected a too-coarse failure, got {other:?}"),
        }
        // a grid fine enough to separate them succeeds
        let fine = grid(1.1, 4.0, 0.2);
        let report = detect_kinks(&sup, &fine, &KinkOptions::default()).unwrap();
        assert_eq!(report.kinks.len(), 2);
        assert!((report.kinks[0].q - 1.5).abs() < 1e-9);
        assert!((report.kinks[1].q - 3.0).abs() < 1e-9);
    }

    // ---- the staged construction ----

    #[test]
    fn one_stage_build_is_a_bare_seed() {
        let params = ConstructionParams::new(vec![], 1);
        let state = build_dense_transitions(&params, &BlockRule::default_squared()).unwrap();
        assert_eq!(state.curves.len(), 1);
        assert!(state.stages.is_empty());
        assert_eq!(state.realized.len(), 1);
        let report = detect_kinks(
            &state.sup(),
            &grid(1.1, 5.0, 0.1),
            &KinkOptions::default(),
        )
        .unwrap();
        assert!(report.kinks.is_empty());
    }

    #[test]
    fn three_stage_build_places_four_corners() {
        let params = ConstructionParams::new(vec![1.5, 3.0, 1.9, 2.6], 3);
        let state = build_dense_transitions(&params, &BlockRule::default_squared()).unwrap();
        assert_eq!(state.curves.len(), 3);
        assert_eq!(state.stages.len(), 2);
        for rec in &state.stages {
            assert!(rec.case == 1 || rec.case == 2);
            assert!(rec.match_residuals.0 < 1e-10 && rec.match_residuals.1 < 1e-10);
            assert!(rec.slope_gaps.0.abs() > 1e-8 && rec.slope_gaps.1.abs() > 1e-8);
        }
        let report = detect_kinks(
            &state.sup(),
            &grid(1.05, 4.5, 0.02),
            &KinkOptions::default(),
        )
        .unwrap();
        assert_eq!(report.kinks.len(), 4);
        let expected = state.kink_targets();
        for (kink, want) in report.kinks.iter().zip(expected.iter()) {
            assert!(
                (kink.q - want).abs() < 1e-4,
                "kink {} vs target {want}",
                kink.q
            );
            assert!(kink.gap > 1e-8);
        }
    }

    #[test]
    fn rejects_malformed_target_families() {
        let rule = BlockRule::default_squared();
        // not nested
        let p = ConstructionParams::new(vec![1.9, 2.6, 1.5, 3.0], 3);
        assert!(build_dense_transitions(&p, &rule).is_err());
        // wrong count
        let p = ConstructionParams::new(vec![1.5, 3.0], 3);
        assert!(build_dense_transitions(&p, &rule).is_err());
        // below 1
        let p = ConstructionParams::new(vec![0.9, 3.0], 2);
        assert!(build_dense_transitions(&p, &rule).is_err());
        // stage ceiling
        let mut p = ConstructionParams::new(vec![1.5, 3.0], 2);
        p.max_stages = 1;
        assert!(build_dense_transitions(&p, &rule).is_err());
    }

    #[test]
    fn extension_reproduces_the_direct_build() {
        let rule = BlockRule::default_squared();
        let two = build_dense_transitions(&ConstructionParams::new(vec![1.5, 3.0], 2), &rule)
            .unwrap();
        let extended = extend_construction(two, &[1.9, 2.6]).unwrap();
        let direct = build_dense_transitions(
            &ConstructionParams::new(vec![1.5, 3.0, 1.9, 2.6], 3),
            &rule,
        )
        .unwrap();
        assert_eq!(extended.curves, direct.curves);
        assert_eq!(extended.targets, direct.targets);
        assert_eq!(extended.realized, direct.realized);
    }

    #[test]
    fn construction_state_round_trips_through_serde() {
        let params = ConstructionParams::new(vec![1.5, 3.0], 2);
        let state = build_dense_transitions(&params, &BlockRule::default_squared()).unwrap();
        let json = serde_json::to_string(&state).unwrap();
        let back: ConstructionState = serde_json::from_str(&json).unwrap();
        assert_eq!(state, back);
    }

    #[test]
    fn diagonal_realization_starts_with_the_seed_measure() {
        let params = ConstructionParams::new(vec![1.5, 3.0], 2);
        let rule = BlockRule::Lengths {
            lengths: vec![4, 16, 256],
        };
        let state = build_dense_transitions(&params, &rule).unwrap();
        let nu = state.diagonal().unwrap();
        assert!(nu.validate().is_ok());
        let mu1 = &state.realized[0];
        // the first block (depths 1..=4) replays the seed realisation
        for n in 1..=4u64 {
            assert_eq!(nu.weight_at(n), mu1.weight_at(n));
        }
    }

    #[test]
    fn diagonal_tau_tracks_the_sup_at_deep_block_ends() {
        // Moderate-depth version of the headline check: at a late block end
        // dominated by the final stage, the diagonal's τ_n is close to the
        // constructed maximum at moments owned by the final curve.
        let params = ConstructionParams::new(vec![1.5, 3.0], 2);
        let rule = BlockRule::Ratio {
            first: 16,
            factor: 24,
        };
        let state = build_dense_transitions(&params, &rule).unwrap();
        let nu = state.diagonal().unwrap();
        let ends = rule.block_ends(300_000);
        // ends: 16, 400, 10000, 250000 — alternating owners seed/split
        let q = 2.2; // strictly inside (1.5, 3.0): the split curve owns it
        let sup = state.sup();
        let at_split_end = tau_n(&nu, q, ends[3]).unwrap();
        assert!(
            (at_split_end - sup.value(q)).abs() < 2e-2,
            "τ at depth {} = {} vs sup {}",
            ends[3],
            at_split_end,
            sup.value(q)
        );
        // and the limsup estimate over block ends brackets between the two
        // curves' values
        // Every block-end value is a convex mix of the two curve values up
        // to the O(components/depth) quota noise (worst at the 400-deep
        // end: ~3e-3), so the extremes stay inside a padded bracket.
        let schedule = DepthSchedule::new(ends).unwrap();
        let emp = EmpiricalTau::compute(&nu, vec![q], &schedule).unwrap();
        let lo = state.curves[0].value(q).min(state.curves[1].value(q));
        let hi = state.curves[0].value(q).max(state.curves[1].value(q));
        assert!(emp.max_over_depths[0] <= hi + 1e-2);
        assert!(emp.min_over_depths[0] >= lo - 1e-2);
    }

    #[test]
    fn stage_records_have_coherent_seed_diagnostics() {
        let params = ConstructionParams::new(vec![1.5, 3.0], 2);
        let state = build_dense_transitions(&params, &BlockRule::default_squared()).unwrap();
        let rec = &state.stages[0];
        assert_eq!(rec.stage, 2);
        assert_eq!(rec.owner, 0);
        assert_eq!(rec.targets, (1.5, 3.0));
        assert!(rec.p4 > 0.2 && rec.p4 < 0.4);
        assert!(rec.p5 > 0.4 && rec.p5 < 0.5);
        let [l3, l4, l5] = rec.lambdas;
        assert!(l3 > 0.0 && l4 > 0.0 && l5 > 0.0);
        assert!((l3 + l4 + l5 - 1.0).abs() < 1e-12);
        assert!(rec.adjusted.is_none());
    }
}
