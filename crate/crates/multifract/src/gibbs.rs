//! Gibbs reweightings `ν = μ^q / Z` of coin-tossing measures.
//!
//! For a moment `q`, the Gibbs reweighting of the product measure `μ` with
//! weights `(p_j)` is the product measure `ν` whose level-`j` weight is
//!
//! ```text
//! p'_j = p_j^q / (p_j^q + (1-p_j)^q) = σ(q · logit(p_j)),
//! ```
//!
//! with `σ` the logistic function. On every depth-`n` cylinder this agrees
//! with the normalised power `μ(I)^q / Z_n`, `Z_n = Σ_{|J|=n} μ(J)^q`, so the
//! finite-level normalisations are globally consistent — that is what makes
//! the reweighting a measure rather than a sequence of unrelated
//! renormalisations, and [`verify_consistency`] checks it numerically from
//! first principles.
//!
//! The scaling curves compose: `τ_{ν,n}(s) = τ_{μ,n}(qs) - s·τ_{μ,n}(q)`
//! holds level by level (not merely in the limit), giving the exact identity
//! `dim ν_n = -q·τ_{μ,n}'(q) + τ_{μ,n}(q)` for the entropy dimension of the
//! reweighted measure — the bridge between moment analysis of `μ` and actual
//! dimensions of auxiliary measures.
//!
//! Working in logit space makes composition transparent: reweighting by `q`
//! then by `s` multiplies logits, so it equals the single reweighting by
//! `q·s`. The trivial cases are kept exact: `q = 1` returns the sequence
//! unchanged, `q = 0` flattens every weight to `1/2`.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::measure::{enumerate_cylinders_with_cap, Weight, WeightSequence};
use crate::spectrum::{binary_entropy, tau_n, tau_single_d1};
use crate::Result;

/// Largest representable weight below 1; the clamp target when the logistic
/// saturates.
const MAX_WEIGHT: f64 = 1.0 - f64::EPSILON / 2.0;

/// The reweighted single weight `σ(q · logit(p))`, computed by the
/// saturation-safe logistic and clamped into the open unit interval so the
/// result is always a valid weight. `q = 1` reproduces `p` bitwise.
pub fn gibbs_weight(p: Weight, q: f64) -> Weight {
    if q == 1.0 {
        return p;
    }
    let v = p.value();
    let t = q * (v.ln() - (1.0 - v).ln());
    let raw = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    let clamped = raw.clamp(f64::MIN_POSITIVE, MAX_WEIGHT);
    Weight::new(clamped).expect("clamped logistic output is a valid weight")
}

/// Reweight a whole sequence, preserving its structure: constants stay
/// constants, blocks keep their rule and part layout, quotas keep their
/// coefficients. Depth `j` of the result carries `σ(q·logit(p_j))`.
pub fn gibbs_reweight(seq: &WeightSequence, q: f64) -> WeightSequence {
    if q == 1.0 {
        return seq.clone();
    }
    map_weights(seq, &|p| gibbs_weight(p, q))
}

fn map_weights(seq: &WeightSequence, f: &dyn Fn(Weight) -> Weight) -> WeightSequence {
    use WeightSequence::*;
    match seq {
        Constant { p } => Constant { p: f(*p) },
        Explicit { weights } => Explicit {
            weights: weights.iter().map(|&p| f(p)).collect(),
        },
        Periodic { weights } => Periodic {
            weights: weights.iter().map(|&p| f(p)).collect(),
        },
        Quota { components } => Quota {
            components: components
                .iter()
                .map(|c| crate::measure::QuotaComponent {
                    lambda: c.lambda,
                    p: f(c.p),
                })
                .collect(),
        },
        Blocks { parts, rule } => Blocks {
            parts: parts.iter().map(|part| map_weights(part, f)).collect(),
            rule: rule.clone(),
        },
        Diagonal { stages, rule } => Diagonal {
            stages: stages.iter().map(|stage| map_weights(stage, f)).collect(),
            rule: rule.clone(),
        },
    }
}

/// Provenance record for a reweighting: the moment, the source sequence and
/// the derived one, ready for serialisation next to exported tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsParams {
    pub q: f64,
    pub source: WeightSequence,
    pub reweighted: WeightSequence,
}

impl GibbsParams {
    pub fn new(source: &WeightSequence, q: f64) -> Self {
        GibbsParams {
            q,
            source: source.clone(),
            reweighted: gibbs_reweight(source, q),
        }
    }
}

/// Numerical check that the reweighting really is the normalised power
/// measure, from first principles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub q: f64,
    pub depth: u32,
    /// Max over depth-`n` cylinders of `|ν(I) - ν(I·0) - ν(I·1)|` where each
    /// side is an independently normalised power `μ(·)^q / Z`.
    pub max_refinement_error: f64,
    pub worst_refinement_path: String,
    /// Max over depth-`n` cylinders of `|ν_prod(I) - μ(I)^q / Z_n|`, with
    /// `ν_prod` the product measure of the reweighted sequence.
    pub max_product_error: f64,
    pub worst_product_path: String,
    /// `|Σ_I ν_prod(I) - 1|` at depth `n`.
    pub total_mass_error: f64,
}

/// Verify, by exhaustive enumeration at depths `n` and `n+1`, that the
/// product-form reweighting agrees with the normalised `q`-th power of `μ`
/// and that the level-`n` and level-`n+1` normalisations refine one another.
///
/// `Z_n` and `Z_{n+1}` are summed independently — nothing is reused from the
/// product form, so agreement is evidence, not tautology.
pub fn verify_consistency(
    seq: &WeightSequence,
    q: f64,
    depth: u32,
    cap: u32,
) -> Result<ConsistencyReport> {
    if depth == 0 {
        return Err(Error::InvalidParameter {
            detail: "consistency check needs depth ≥ 1".into(),
        });
    }
    let coarse = enumerate_cylinders_with_cap(seq, depth, cap)?;
    let fine = enumerate_cylinders_with_cap(seq, depth + 1, cap)?;
    let coarse: Vec<(String, f64)> = coarse
        .map(|(path, m)| (path.to_string(), m))
        .collect();
    let fine_mass: Vec<f64> = fine.map(|(_, m)| m).collect();

    let z_n: f64 = coarse.iter().map(|(_, m)| m.powf(q)).sum();
    let z_n1: f64 = fine_mass.iter().map(|m| m.powf(q)).sum();

    let nu = gibbs_reweight(seq, q);
    let nu_mass: Vec<(String, f64)> = enumerate_cylinders_with_cap(&nu, depth, cap)?
        .map(|(path, m)| (path.to_string(), m))
        .collect();

    let mut report = ConsistencyReport {
        q,
        depth,
        max_refinement_error: 0.0,
        worst_refinement_path: String::new(),
        max_product_error: 0.0,
        worst_product_path: String::new(),
        total_mass_error: (nu_mass.iter().map(|(_, m)| m).sum::<f64>() - 1.0).abs(),
    };

    // Enumeration is in lexicographic word order, so the children of coarse
    // cylinder i are fine cylinders 2i and 2i+1.
    for (i, (path, m)) in coarse.iter().enumerate() {
        let parent = m.powf(q) / z_n;
        let children = (fine_mass[2 * i].powf(q) + fine_mass[2 * i + 1].powf(q)) / z_n1;
        let err = (parent - children).abs();
        if err > report.max_refinement_error {
            report.max_refinement_error = err;
            report.worst_refinement_path = path.clone();
        }
        let prod_err = (nu_mass[i].1 - parent).abs();
        if prod_err > report.max_product_error {
            report.max_product_error = prod_err;
            report.worst_product_path = path.clone();
        }
    }
    Ok(report)
}

/// Worst deviation from the composition law
/// `τ_{ν,n}(s) = τ_{μ,n}(qs) - s·τ_{μ,n}(q)` over a grid of `s` and depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub q: f64,
    pub max_error: f64,
    pub worst_s: f64,
    pub worst_depth: u64,
}

/// Check the scaling-curve composition law at finite depth, comparing the
/// reweighted sequence's own `τ_{ν,n}` against the closed form in `τ_{μ,n}`.
pub fn verify_tau_composition(
    seq: &WeightSequence,
    q: f64,
    s_values: &[f64],
    depths: &[u64],
) -> Result<CompositionReport> {
    if s_values.is_empty() || depths.is_empty() {
        return Err(Error::Empty {
            what: "composition check grid",
        });
    }
    let nu = gibbs_reweight(seq, q);
    let mut report = CompositionReport {
        q,
        max_error: 0.0,
        worst_s: f64::NAN,
        worst_depth: 0,
    };
    for &n in depths {
        let tau_mu_q = tau_n(seq, q, n)?;
        for &s in s_values {
            let lhs = tau_n(&nu, s, n)?;
            let rhs = tau_n(seq, q * s, n)? - s * tau_mu_q;
            let err = (lhs - rhs).abs();
            if err > report.max_error {
                report.max_error = err;
                report.worst_s = s;
                report.worst_depth = n;
            }
        }
    }
    Ok(report)
}

/// Entropy dimension of the depth-`n` Gibbs reweighting, through the exact
/// finite-level identity `dim ν_n = -q·τ_{μ,n}'(q) + τ_{μ,n}(q)`.
///
/// This equals the entropy average `(1/n) Σ h(p'_j)` of the reweighted
/// weights; the two routes agree to rounding and the test suite holds them
/// together.
pub fn gibbs_dimension(seq: &WeightSequence, q: f64, depth: u64) -> Result<f64> {
    if depth == 0 {
        return Err(Error::InvalidParameter {
            detail: "gibbs dimension needs depth ≥ 1".into(),
        });
    }
    let tau = tau_n(seq, q, depth)?;
    let mut slope_sum = 0.0;
    for (j, p) in seq.weights().enumerate() {
        if j as u64 >= depth {
            break;
        }
        slope_sum += tau_single_d1(p, q);
    }
    Ok(-q * slope_sum / depth as f64 + tau)
}

/// Entropy average `(1/n) Σ_{j≤n} h(p'_j)` of a sequence — the independent
/// route to [`gibbs_dimension`] when fed the reweighted sequence.
pub fn entropy_average(seq: &WeightSequence, depth: u64) -> Result<f64> {
    if depth == 0 {
        return Err(Error::InvalidParameter {
            detail: "entropy average needs depth ≥ 1".into(),
        });
    }
    let mut sum = 0.0;
    for (j, p) in seq.weights().enumerate() {
        if j as u64 >= depth {
            break;
        }
        sum += binary_entropy(p);
    }
    Ok(sum / depth as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{local_exponent, sample_path, BlockRule};

    fn w(p: f64) -> Weight {
        Weight::new(p).unwrap()
    }

    #[test]
    fn unit_moment_is_the_identity() {
        let seq = WeightSequence::blocks(
            vec![
                WeightSequence::periodic(vec![0.2, 0.7]).unwrap(),
                WeightSequence::constant(0.4).unwrap(),
            ],
            BlockRule::default_squared(),
        )
        .unwrap();
        assert_eq!(gibbs_reweight(&seq, 1.0), seq);
        assert_eq!(gibbs_weight(w(0.3), 1.0).value(), 0.3);
    }

    #[test]
    fn zero_moment_flattens_to_uniform() {
        assert_eq!(gibbs_weight(w(0.017), 0.0).value(), 0.5);
        assert_eq!(gibbs_weight(w(0.93), 0.0).value(), 0.5);
        let seq = WeightSequence::periodic(vec![0.2, 0.7, 0.44]).unwrap();
        let flat = gibbs_reweight(&seq, 0.0);
        for (j, p) in flat.weights().enumerate() {
            assert_eq!(p.value(), 0.5);
            if j > 10 {
                break;
            }
        }
    }

    #[test]
    fn frozen_reweighted_value() {
        // p = 0.3, q = 2: p' = 0.09/0.58 = 9/58.
        let got = gibbs_weight(w(0.3), 2.0).value();
        assert!((got - 9.0 / 58.0).abs() < 1e-15);
        assert!((got - 0.155172).abs() < 1e-6);
        // complement: 1 - p' = 49/58
        assert!((1.0 - got - 49.0 / 58.0).abs() < 1e-15);
    }

    #[test]
    fn reweighting_preserves_structure() {
        let seq = WeightSequence::quota(vec![(0.25, 0.2), (0.75, 0.45)]).unwrap();
        let nu = gibbs_reweight(&seq, 3.0);
        match &nu {
            WeightSequence::Quota { components } => {
                assert_eq!(components.len(), 2);
                assert_eq!(components[0].lambda, 0.25);
                assert_eq!(components[1].lambda, 0.75);
                assert_eq!(components[0].p, gibbs_weight(w(0.2), 3.0));
            }
            other => panic!("expected quota structure, got {other:?}"),
        }
        assert!(nu.validate().is_ok());

        let blocks = WeightSequence::blocks(
            vec![
                WeightSequence::constant(0.3).unwrap(),
                WeightSequence::constant(0.4).unwrap(),
            ],
            BlockRule::Geometric { growth: 3.0 },
        )
        .unwrap();
        match gibbs_reweight(&blocks, -1.0) {
            WeightSequence::Blocks { parts, rule } => {
                assert_eq!(parts.len(), 2);
                assert_eq!(rule, BlockRule::Geometric { growth: 3.0 });
            }
            other => panic!("expected block structure, got {other:?}"),
        }
    }

    #[test]
    fn extreme_moments_clamp_into_the_open_interval() {
        // q huge: logit(0.3) < 0 so the logistic saturates toward 0 and must
        // clamp to the smallest positive weight, never to 0 or 1 exactly.
        let lo = gibbs_weight(w(0.3), 5000.0);
        assert!(lo.value() > 0.0 && lo.value() < 1.0);
        let hi = gibbs_weight(w(0.3), -5000.0);
        assert!(hi.value() > 0.0 && hi.value() < 1.0);
        assert!(hi.value() >= 1.0 - 1e-15);
    }

    #[test]
    fn composition_is_a_semigroup_in_the_moment() {
        let seq = WeightSequence::periodic(vec![0.2, 0.45, 0.7]).unwrap();
        for &(q, s) in &[(2.0, 3.0), (0.5, -2.0), (-1.5, 0.25), (4.0, 0.0)] {
            let two_step = gibbs_reweight(&gibbs_reweight(&seq, q), s);
            let one_step = gibbs_reweight(&seq, q * s);
            let mut a = two_step.weights();
            let mut b = one_step.weights();
            for depth in 0..40 {
                let pa = a.next().unwrap().value();
                let pb = b.next().unwrap().value();
                assert!(
                    (pa - pb).abs() < 1e-12,
                    "q={q}, s={s}, depth {depth}: {pa} vs {pb}"
                );
            }
        }
    }

    #[test]
    fn normalised_powers_are_consistent_across_levels() {
        let seq = WeightSequence::periodic(vec![0.15, 0.5, 0.64]).unwrap();
        for &q in &[-1.3, 0.7, 2.0] {
            let rep = verify_consistency(&seq, q, 6, 22).unwrap();
            assert!(rep.max_refinement_error < 1e-12, "q={q}: {rep:?}");
            assert!(rep.max_product_error < 1e-12, "q={q}: {rep:?}");
            assert!(rep.total_mass_error < 1e-12, "q={q}: {rep:?}");
        }
    }

    #[test]
    fn scaling_curves_compose_exactly_at_the_anchors() {
        let seq = WeightSequence::periodic(vec![0.3, 0.42]).unwrap();
        let q = 2.5;
        let nu = gibbs_reweight(&seq, q);
        for n in [1u64, 7, 64] {
            // s = 1: both sides are exactly 0.
            assert_eq!(tau_n(&nu, 1.0, n).unwrap(), 0.0);
            assert_eq!(
                tau_n(&seq, q, n).unwrap() - 1.0 * tau_n(&seq, q, n).unwrap(),
                0.0
            );
            // s = 0: τ_ν(0) = 1 = τ_μ(0).
            assert_eq!(tau_n(&nu, 0.0, n).unwrap(), 1.0);
        }
    }

    #[test]
    fn scaling_curves_compose_on_a_grid() {
        let seq = WeightSequence::blocks(
            vec![
                WeightSequence::constant(0.3).unwrap(),
                WeightSequence::constant(0.4).unwrap(),
            ],
            BlockRule::default_squared(),
        )
        .unwrap();
        for &q in &[-1.0, 0.5, 2.0, 3.7] {
            let rep = verify_tau_composition(
                &seq,
                q,
                &[-2.0, -0.5, 0.3, 1.0, 1.7, 4.0],
                &[3, 10, 37, 200],
            )
            .unwrap();
            assert!(rep.max_error < 1e-10, "q={q}: {rep:?}");
        }
    }

    #[test]
    fn dimension_identity_between_routes() {
        let seq = WeightSequence::quota(vec![(0.4, 0.25), (0.6, 0.37)]).unwrap();
        for &q in &[-2.0, 0.0, 0.8, 1.0, 3.0] {
            for &n in &[5u64, 50, 500] {
                let via_tau = gibbs_dimension(&seq, q, n).unwrap();
                let via_entropy = entropy_average(&gibbs_reweight(&seq, q), n).unwrap();
                assert!(
                    (via_tau - via_entropy).abs() < 1e-10,
                    "q={q}, n={n}: {via_tau} vs {via_entropy}"
                );
            }
        }
    }

    #[test]
    fn gibbs_dimension_at_unit_moment_is_the_entropy_average() {
        let seq = WeightSequence::periodic(vec![0.3, 0.4]).unwrap();
        let d = gibbs_dimension(&seq, 1.0, 10).unwrap();
        let h = 0.5 * (binary_entropy(w(0.3)) + binary_entropy(w(0.4)));
        assert!((d - h).abs() < 1e-13);
    }

    #[test]
    fn sampled_exponents_match_the_dimension() {
        // Paths sampled from ν have local exponents averaging to dim ν_n;
        // Monte Carlo mean must land within 3σ of the analytic value.
        let seq = WeightSequence::periodic(vec![0.2, 0.35, 0.45]).unwrap();
        let q = 2.0;
        let depth = 60u64;
        let trials = 4000u64;
        let nu = gibbs_reweight(&seq, q);
        let expect = gibbs_dimension(&seq, q, depth).unwrap();

        // per-level digit variance of -log₂ weight, for the σ budget
        let mut var_sum = 0.0;
        for (j, p) in nu.weights().enumerate() {
            if j as u64 >= depth {
                break;
            }
            let v = p.value();
            let l = (v / (1.0 - v)).log2();
            var_sum += v * (1.0 - v) * l * l;
        }
        let sigma_mean = (var_sum / trials as f64).sqrt() / depth as f64;

        let mut sum = 0.0;
        for t in 0..trials {
            let path = sample_path(&nu, depth, 1100 + t);
            sum += local_exponent(&nu, &path).unwrap();
        }
        let mean = sum / trials as f64;
        assert!(
            (mean - expect).abs() < 3.0 * sigma_mean,
            "mean {mean}, expected {expect}, σ {sigma_mean}"
        );
    }
}
