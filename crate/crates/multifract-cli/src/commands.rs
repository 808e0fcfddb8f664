//! Subcommand bodies: each takes a validated [`RunConfig`], writes its
//! tabular or JSON payload to the configured destination (stdout when no
//! path is set), and prints a one-line summary on stderr so piped output
//! stays machine-readable.
//!
//! Column layouts are part of the CLI contract and never change:
//! `tau` → (q, depth, value); `limits` → (q, limsup, liminf);
//! `legendre` → (alpha, value, argmin_q); `entropy` → (depth, entropy_avg);
//! `kinks` → (q_loc, left_slope, right_slope, gap);
//! `sample` → (index, local_exponent);
//! `coarse-spectrum` → (alpha_bin, count, normalized).
//!
//! Every float is rendered with Rust's shortest-roundtrip formatting, and
//! all randomness is seeded from the config, so reruns are byte-identical.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use multifract::gibbs::{self, GibbsParams};
use multifract::measure::{local_exponent, sample_path};
use multifract::spectrum::{
    entropy_dimension, legendre_spectrum, tau_limits_grid, tau_n, EmpiricalTau,
};
use multifract::transitions::{build_dense_transitions, detect_kinks, KinkOptions};

use crate::coarse::coarse_spectrum;
use crate::config::RunConfig;
use crate::verify::{run_verify_suite, IdentityImpls};
use crate::AppError;

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

fn open_sink(path: Option<&Path>) -> Result<Box<dyn Write>, AppError> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(f) as Box<dyn Write>)
            .map_err(|e| AppError::Io(format!("creating {}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn sink_name(path: Option<&Path>) -> String {
    match path {
        Some(p) => p.display().to_string(),
        None => "stdout".to_string(),
    }
}

fn csv_writer(cfg: &RunConfig) -> Result<(csv::Writer<Box<dyn Write>>, String), AppError> {
    let path = cfg.output.path.as_deref();
    Ok((
        csv::Writer::from_writer(open_sink(path)?),
        sink_name(path),
    ))
}

fn write_row(
    wtr: &mut csv::Writer<Box<dyn Write>>,
    fields: &[String],
) -> Result<(), AppError> {
    wtr.write_record(fields)
        .map_err(|e| AppError::Io(format!("writing record: {e}")))
}

fn finish_csv(mut wtr: csv::Writer<Box<dyn Write>>) -> Result<(), AppError> {
    wtr.flush()
        .map_err(|e| AppError::Io(format!("flushing output: {e}")))
}

fn write_json<T: serde::Serialize>(cfg: &RunConfig, value: &T) -> Result<String, AppError> {
    let path = cfg.output.path.as_deref();
    let mut sink = open_sink(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Io(format!("serialising report: {e}")))?;
    writeln!(sink, "{text}").map_err(|e| AppError::Io(format!("writing output: {e}")))?;
    Ok(sink_name(path))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// `tau`: finite-depth scaling exponents over the configured grid and
/// schedule, one row per (depth, moment).
pub fn run_tau(cfg: &RunConfig) -> Result<(), AppError> {
    let seq = cfg.require_sequence()?;
    let qs = cfg.qgrid.build()?;
    let schedule = cfg.depths.schedule()?;
    let emp =
        EmpiricalTau::compute(seq, qs.clone(), &schedule).map_err(AppError::from_lib)?;
    let (mut wtr, dest) = csv_writer(cfg)?;
    write_row(&mut wtr, &["q".into(), "depth".into(), "value".into()])?;
    for (di, &depth) in emp.depths.iter().enumerate() {
        for (qi, &q) in emp.q_grid.iter().enumerate() {
            write_row(
                &mut wtr,
                &[q.to_string(), depth.to_string(), emp.values[di][qi].to_string()],
            )?;
        }
    }
    finish_csv(wtr)?;
    eprintln!(
        "tau: {} moments x {} depths (max {}) -> {dest}",
        qs.len(),
        schedule.len(),
        schedule.max_depth()
    );
    Ok(())
}

/// `limits`: tail extrema of the scaling exponents — the finite-depth
/// limsup/liminf estimates — one row per moment.
pub fn run_limits(cfg: &RunConfig) -> Result<(), AppError> {
    let seq = cfg.require_sequence()?;
    let qs = cfg.qgrid.build()?;
    let schedule = cfg.depths.schedule()?;
    let rows = tau_limits_grid(seq, &qs, &schedule, cfg.depths.tail_fraction)
        .map_err(AppError::from_lib)?;
    let (mut wtr, dest) = csv_writer(cfg)?;
    write_row(&mut wtr, &["q".into(), "limsup".into(), "liminf".into()])?;
    let mut spread = 0.0f64;
    for ext in &rows {
        spread = spread.max(ext.max.value - ext.min.value);
        write_row(
            &mut wtr,
            &[
                ext.q.to_string(),
                ext.max.value.to_string(),
                ext.min.value.to_string(),
            ],
        )?;
    }
    finish_csv(wtr)?;
    let tail_depth = rows
        .first()
        .and_then(|r| r.schedule.get(r.tail_start).copied())
        .unwrap_or(0);
    eprintln!(
        "limits: {} moments, tail from depth {tail_depth}, widest spread {spread:.6} -> {dest}",
        qs.len()
    );
    Ok(())
}

/// `legendre`: the transform `inf_q (α·q + τ_n(q))` of the deepest scheduled
/// scaling curve, over the configured exponent grid.
pub fn run_legendre(cfg: &RunConfig) -> Result<(), AppError> {
    let seq = cfg.require_sequence()?;
    let qs = cfg.qgrid.build()?;
    let alphas = cfg.alphagrid.build()?;
    let depth = cfg.depths.schedule()?.max_depth();
    let pairs: Vec<(f64, f64)> = qs
        .iter()
        .map(|&q| tau_n(seq, q, depth).map(|t| (q, t)))
        .collect::<Result<_, _>>()
        .map_err(AppError::from_lib)?;
    let points = legendre_spectrum(&pairs, &alphas).map_err(AppError::from_lib)?;
    let (mut wtr, dest) = csv_writer(cfg)?;
    write_row(&mut wtr, &["alpha".into(), "value".into(), "argmin_q".into()])?;
    for p in &points {
        write_row(
            &mut wtr,
            &[p.alpha.to_string(), p.value.to_string(), p.argmin_q.to_string()],
        )?;
    }
    finish_csv(wtr)?;
    let clipped = points.iter().filter(|p| p.at_boundary).count();
    let peak = points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    eprintln!(
        "legendre: {} exponents at depth {depth}, peak {peak:.6}, {clipped} clipped by the moment grid -> {dest}",
        points.len()
    );
    Ok(())
}

/// `entropy`: running entropy averages along the schedule; the summary
/// reports their tail extrema (the entropy-dimension estimates).
pub fn run_entropy(cfg: &RunConfig) -> Result<(), AppError> {
    let seq = cfg.require_sequence()?;
    let schedule = cfg.depths.schedule()?;
    let (mut wtr, dest) = csv_writer(cfg)?;
    write_row(&mut wtr, &["depth".into(), "entropy_avg".into()])?;
    for &depth in schedule.depths() {
        let avg = gibbs::entropy_average(seq, depth).map_err(AppError::from_lib)?;
        write_row(&mut wtr, &[depth.to_string(), avg.to_string()])?;
    }
    finish_csv(wtr)?;
    let ext = entropy_dimension(seq, &schedule, cfg.depths.tail_fraction)
        .map_err(AppError::from_lib)?;
    eprintln!(
        "entropy: liminf {:.6} at depth {}, limsup {:.6} at depth {} -> {dest}",
        ext.min.value, ext.min.depth, ext.max.value, ext.max.depth
    );
    Ok(())
}

/// `gibbs`: reweight the configured sequence at moment `q`, emit the
/// parameters as JSON, and fail (exit 1) if either structural identity
/// breaks beyond its tolerance.
pub fn run_gibbs(cfg: &RunConfig) -> Result<(), AppError> {
    let seq = cfg.require_sequence()?;
    let q = cfg.gibbs.q;
    let s = cfg.gibbs.s;
    let params = GibbsParams::new(seq, q);

    let consistency = gibbs::verify_consistency(seq, q, cfg.gibbs.depth, cfg.enumeration.cap)
        .map_err(AppError::from_lib)?;
    let refinement = consistency
        .max_refinement_error
        .max(consistency.max_product_error)
        .max(consistency.total_mass_error);

    let schedule = cfg.depths.schedule()?;
    let composition = gibbs::verify_tau_composition(seq, q, &[s], schedule.depths())
        .map_err(AppError::from_lib)?;

    let dest = write_json(cfg, &params)?;
    eprintln!(
        "gibbs: q = {q}, refinement residual {refinement:.3e}, composition residual {:.3e} (s = {s}) -> {dest}",
        composition.max_error
    );
    if refinement > cfg.tolerances.consistency {
        return Err(AppError::Check(format!(
            "reweighting consistency residual {refinement:.3e} exceeds {:.1e} (worst cylinder {})",
            cfg.tolerances.consistency, consistency.worst_refinement_path
        )));
    }
    if composition.max_error > cfg.tolerances.composition {
        return Err(AppError::Check(format!(
            "composition residual {:.3e} exceeds {:.1e} at depth {}",
            composition.max_error, cfg.tolerances.composition, composition.worst_depth
        )));
    }
    Ok(())
}

/// `construct`: run the staged synthesis and save the full state (curves,
/// stages, realisations) as JSON for later `kinks` runs or extension.
pub fn run_construct(cfg: &RunConfig) -> Result<(), AppError> {
    let spec = cfg.construct.as_ref().ok_or_else(|| {
        AppError::Config(
            "construct needs target moments: add a [construct] table or pass --targets".into(),
        )
    })?;
    let state = build_dense_transitions(&spec.params(), &spec.rule)
        .map_err(AppError::from_lib)?;
    let dest = write_json(cfg, &state)?;
    let targets: Vec<String> = state
        .kink_targets()
        .iter()
        .map(|t| format!("{t:.4}"))
        .collect();
    eprintln!(
        "construct: {} stages, corners targeted at [{}] -> {dest}",
        state.stage_count(),
        targets.join(", ")
    );
    Ok(())
}

/// `kinks`: locate the corners of an upper envelope — from a saved
/// construction state or inline curves — on the configured moment grid.
pub fn run_kinks(cfg: &RunConfig, state_override: Option<&Path>) -> Result<(), AppError> {
    let sup = cfg.kinks.build_sup(state_override)?;
    let qs = cfg.qgrid.build()?;
    let report =
        detect_kinks(&sup, &qs, &KinkOptions::default()).map_err(AppError::from_lib)?;
    let (mut wtr, dest) = csv_writer(cfg)?;
    write_row(
        &mut wtr,
        &[
            "q_loc".into(),
            "left_slope".into(),
            "right_slope".into(),
            "gap".into(),
        ],
    )?;
    for k in &report.kinks {
        write_row(
            &mut wtr,
            &[
                k.q.to_string(),
                k.left_slope.to_string(),
                k.right_slope.to_string(),
                k.gap.to_string(),
            ],
        )?;
    }
    finish_csv(wtr)?;
    eprintln!(
        "kinks: {} corners on [{}, {}] -> {dest}",
        report.kinks.len(),
        qs.first().expect("grid is non-empty"),
        qs.last().expect("grid is non-empty")
    );
    Ok(())
}

/// `sample`: Monte Carlo local exponents of measure-typical rays, one row
/// per sampled path.
pub fn run_sample(cfg: &RunConfig) -> Result<(), AppError> {
    let seq = cfg.require_sequence()?;
    let (count, depth, seed) = (cfg.sample.count, cfg.sample.depth, cfg.sample.seed);
    let (mut wtr, dest) = csv_writer(cfg)?;
    write_row(&mut wtr, &["index".into(), "local_exponent".into()])?;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for i in 0..count {
        let path = sample_path(seq, depth, seed.wrapping_add(i as u64));
        let alpha = local_exponent(seq, &path).map_err(AppError::from_lib)?;
        sum += alpha;
        sum_sq += alpha * alpha;
        write_row(&mut wtr, &[i.to_string(), alpha.to_string()])?;
    }
    finish_csv(wtr)?;
    let mean = sum / count as f64;
    let var = (sum_sq / count as f64 - mean * mean).max(0.0);
    eprintln!(
        "sample: {count} paths at depth {depth}, mean exponent {mean:.6} (sd {:.3e}) -> {dest}",
        var.sqrt()
    );
    Ok(())
}

/// `coarse-spectrum`: exhaustively bin all cylinders at the configured
/// depth by local exponent, one row per bin (empty bins included so the
/// histogram is complete).
pub fn run_coarse(cfg: &RunConfig) -> Result<(), AppError> {
    let seq = cfg.require_sequence()?;
    let cs = coarse_spectrum(seq, cfg.coarse.depth, cfg.coarse.bins, cfg.enumeration.cap)
        .map_err(AppError::from_lib)?;
    let (mut wtr, dest) = csv_writer(cfg)?;
    write_row(
        &mut wtr,
        &["alpha_bin".into(), "count".into(), "normalized".into()],
    )?;
    for i in 0..cs.counts.len() {
        write_row(
            &mut wtr,
            &[
                cs.bin_center(i).to_string(),
                cs.counts[i].to_string(),
                cs.normalized[i].to_string(),
            ],
        )?;
    }
    finish_csv(wtr)?;
    let occupied = cs.counts.iter().filter(|&&c| c > 0).count();
    eprintln!(
        "coarse-spectrum: depth {}, {} bins of width {:.6} ({occupied} occupied), {} cylinders -> {dest}",
        cs.depth,
        cs.counts.len(),
        cs.bin_width(),
        cs.total()
    );
    Ok(())
}

/// `verify`: run the whole consolidated check suite; per-check lines go to
/// stderr, the machine-readable report to the configured destination, and
/// any failing check makes the command exit 1.
pub fn run_verify(cfg: &RunConfig) -> Result<(), AppError> {
    let ids = match &cfg.verify.perturb {
        Some(which) => IdentityImpls::perturbed(which)?,
        None => IdentityImpls::default(),
    };
    let report = run_verify_suite(cfg, &ids)?;
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        if c.residual.is_nan() {
            eprintln!("{status} {:<28} {}", c.name, c.detail);
        } else {
            eprintln!(
                "{status} {:<28} residual {:.3e} vs tolerance {:.1e}",
                c.name, c.residual, c.tolerance
            );
        }
    }
    let dest = write_json(cfg, &report)?;
    eprintln!(
        "verify: {} passed, {} failed (seed {}) -> {dest}",
        report.passed, report.failed, report.seed
    );
    if !report.all_passed {
        return Err(AppError::Check(format!(
            "{} of {} checks failed",
            report.failed,
            report.checks.len()
        )));
    }
    Ok(())
}
