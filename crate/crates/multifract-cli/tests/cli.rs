//! End-to-end tests of the `multifract` binary: CSV/JSON output shapes,
//! the exit-code contract, seeded determinism, the construct → kinks
//! pipeline over a state file, and the guarantee that no coarse histogram
//! bin beats the Legendre envelope on the shipped configuration files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multifract"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("the binary should run")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout should be UTF-8")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr should be UTF-8")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code (killed by signal?)")
}

fn assert_ok(out: &Output, what: &str) {
    assert_eq!(
        code(out),
        0,
        "{what} failed (stderr: {})",
        stderr_str(out)
    );
}

/// Parse CSV text produced by the binary: assert the exact header, then
/// return every row as f64 fields.
fn parse_csv(text: &str, header: &str) -> Vec<Vec<f64>> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(header), "unexpected CSV header");
    lines
        .map(|line| {
            line.split(',')
                .map(|field| {
                    field
                        .parse::<f64>()
                        .unwrap_or_else(|_| panic!("non-numeric CSV field {field:?}"))
                })
                .collect()
        })
        .collect()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn fair_coin_scaling_exponents_are_exact() {
    let out = run(&[
        "tau", "--p", "0.5", "--q-min", "0", "--q-max", "2", "--q-step", "0.5",
        "--depths", "8,32",
    ]);
    assert_ok(&out, "tau on the fair coin");
    let rows = parse_csv(&stdout_str(&out), "q,depth,value");
    assert_eq!(rows.len(), 10, "2 depths x 5 moments");
    for row in &rows {
        let (q, depth, value) = (row[0], row[1], row[2]);
        assert!(depth == 8.0 || depth == 32.0);
        // the fair coin halves every cylinder: the exponent is 1 - q at
        // every depth
        assert!(
            (value - (1.0 - q)).abs() < 1e-12,
            "tau_{depth}({q}) = {value}, expected {}",
            1.0 - q
        );
    }
}

#[test]
fn constant_sequences_have_collapsed_limits() {
    let out = run(&[
        "limits", "--p", "0.5", "--q-min", "0", "--q-max", "1", "--q-step", "0.5",
        "--depths", "16,64,256",
    ]);
    assert_ok(&out, "limits on the fair coin");
    let rows = parse_csv(&stdout_str(&out), "q,limsup,liminf");
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let (q, hi, lo) = (row[0], row[1], row[2]);
        assert!((hi - (1.0 - q)).abs() < 1e-12);
        assert!((lo - (1.0 - q)).abs() < 1e-12);
    }
}

#[test]
fn entropy_average_of_a_constant_sequence_is_its_entropy() {
    let out = run(&["entropy", "--p", "0.3", "--depths", "10,100"]);
    assert_ok(&out, "entropy on a constant sequence");
    let rows = parse_csv(&stdout_str(&out), "depth,entropy_avg");
    assert_eq!(rows.len(), 2);
    let h = 0.8812908992306927; // -(0.3 log2 0.3 + 0.7 log2 0.7)
    for row in &rows {
        assert!((row[1] - h).abs() < 1e-12, "entropy average {}", row[1]);
    }
}

#[test]
fn construct_and_kinks_share_a_state_file() {
    let dir = tempfile::tempdir().expect("temp dir");
    let state = dir.path().join("state.json");
    let state_arg = state.to_str().unwrap();

    let out = run(&["construct", "--targets", "1.5,3.0", "--out", state_arg]);
    assert_ok(&out, "two-stage construct");
    let text = std::fs::read_to_string(&state).expect("state file written");
    let json: serde_json::Value = serde_json::from_str(&text).expect("state is JSON");
    let curves = json["curves"].as_array().expect("curves array");
    assert_eq!(curves.len(), 2, "two stages produce two curves");

    let kinks_csv = dir.path().join("kinks.csv");
    let out = run(&[
        "kinks", "--state", state_arg, "--q-min", "1.05", "--q-max", "3.6",
        "--q-step", "0.01", "--out", kinks_csv.to_str().unwrap(),
    ]);
    assert_ok(&out, "kinks over the saved state");
    let text = std::fs::read_to_string(&kinks_csv).expect("kinks file written");
    let rows = parse_csv(&text, "q_loc,left_slope,right_slope,gap");
    assert_eq!(rows.len(), 2, "one corner per target moment");
    assert!(
        (rows[0][0] - 1.5).abs() < 1e-4,
        "first corner at {}",
        rows[0][0]
    );
    assert!(
        (rows[1][0] - 3.0).abs() < 1e-4,
        "second corner at {}",
        rows[1][0]
    );
    for row in &rows {
        assert!(row[3] > 1e-8, "corner at {} has gap {}", row[0], row[3]);
    }
}

#[test]
fn exit_codes_match_the_contract() {
    let dir = tempfile::tempdir().expect("temp dir");

    // 0: a healthy run
    let out = run(&["tau", "--p", "0.3", "--depths", "10"]);
    assert_eq!(code(&out), 0, "healthy run");

    // 1: a failed check (deliberately corrupted kernel)
    let out = run(&["verify", "--p", "0.3", "--perturb", "tau"]);
    assert_eq!(code(&out), 1, "perturbed verify must fail checks");

    // 2: configuration errors, whether caught by the parser or the library
    let out = run(&["tau", "--p", "1.5"]);
    assert_eq!(code(&out), 2, "weight outside (0,1)");
    let out = run(&["tau", "--no-such-flag"]);
    assert_eq!(code(&out), 2, "unknown flag");
    let out = run(&["construct", "--stages", "3"]);
    assert_eq!(code(&out), 2, "stages without targets");

    // 3: an enumeration budget violation
    let out = run(&["coarse-spectrum", "--p", "0.3", "--depth", "30"]);
    assert_eq!(code(&out), 3, "depth beyond the enumeration cap");

    // 4: an unwritable output path
    let missing = dir.path().join("no-such-dir").join("out.csv");
    let out = run(&["tau", "--p", "0.3", "--out", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "unwritable output sink");
}

#[test]
fn seeded_runs_are_byte_identical() {
    let sample_args = [
        "sample", "--p", "0.3", "--count", "40", "--depth", "1000", "--seed", "99",
    ];
    let first = run(&sample_args);
    let second = run(&sample_args);
    assert_ok(&first, "seeded sample");
    assert_eq!(first.stdout, second.stdout, "sample reruns must not drift");

    let verify_args = ["verify", "--p", "0.3", "--seed", "7"];
    let first = run(&verify_args);
    let second = run(&verify_args);
    assert_ok(&first, "seeded verify");
    assert_eq!(first.stdout, second.stdout, "verify reruns must not drift");
}

#[test]
fn verify_report_lists_checks_and_their_coverage() {
    let out = run(&["verify", "--p", "0.3"]);
    assert_ok(&out, "default verify suite");
    let report: serde_json::Value =
        serde_json::from_str(&stdout_str(&out)).expect("verify emits JSON");
    assert_eq!(report["all_passed"], serde_json::Value::Bool(true));
    let checks = report["checks"].as_array().expect("checks array");
    assert!(!checks.is_empty());
    for check in checks {
        assert_eq!(
            check["passed"],
            serde_json::Value::Bool(true),
            "check {} failed: {}",
            check["name"],
            check["detail"]
        );
        assert!(
            !check["covers"].as_array().expect("covers array").is_empty(),
            "check {} covers nothing",
            check["name"]
        );
    }
    let operations = report["operations"].as_array().expect("operations array");
    assert!(!operations.is_empty());

    // a corrupted kernel flips the verdict but still emits the full report
    let out = run(&["verify", "--p", "0.3", "--perturb", "gibbs"]);
    assert_eq!(code(&out), 1);
    let report: serde_json::Value =
        serde_json::from_str(&stdout_str(&out)).expect("failing verify still emits JSON");
    assert_eq!(report["all_passed"], serde_json::Value::Bool(false));
}

/// The structural guarantee behind the histogram command: at matching
/// depth, no bin's normalized count may exceed the Legendre transform of
/// the scaling curve by more than the binning resolution. Checked through
/// the binary on every shipped configuration that defines a sequence.
#[test]
fn histograms_never_beat_the_legendre_envelope_on_shipped_configs() {
    for name in ["binomial.toml", "alternating_blocks.toml"] {
        let path = configs_dir().join(name);
        let path = path.to_str().unwrap();
        let raw = std::fs::read_to_string(configs_dir().join(name)).expect("config readable");
        let table: toml::Value = raw.parse().expect("config parses as TOML");
        let depth = table["coarse"]["depth"].as_integer().expect("coarse depth") as u64;

        let coarse = run(&["coarse-spectrum", "--config", path]);
        assert_ok(&coarse, "coarse-spectrum on the shipped config");
        let bins = parse_csv(&stdout_str(&coarse), "alpha_bin,count,normalized");

        // match the Legendre curve to the histogram's depth so both sides
        // describe the same finite-level measure
        let legendre = run(&["legendre", "--config", path, "--depths", &depth.to_string()]);
        assert_ok(&legendre, "legendre on the shipped config");
        let curve = parse_csv(&stdout_str(&legendre), "alpha,value,argmin_q");
        assert!(curve.len() > 2);

        let bin_width = bins[1][0] - bins[0][0];
        let alpha_step = curve[1][0] - curve[0][0];
        let max_abs_q = curve
            .iter()
            .map(|row| row[2].abs())
            .fold(0.0f64, f64::max);
        // counting bound slack: half a bin either side, plus nearest-grid
        // lookup error, both scaled by the steepest moment in play, plus
        // the configured headroom
        let slack = 0.15 + max_abs_q * (bin_width + alpha_step);

        for bin in bins.iter().filter(|bin| bin[1] > 0.0) {
            let (alpha, normalized) = (bin[0], bin[2]);
            let nearest = curve
                .iter()
                .min_by(|a, b| {
                    (a[0] - alpha).abs().total_cmp(&(b[0] - alpha).abs())
                })
                .expect("nonempty curve");
            assert!(
                (nearest[0] - alpha).abs() <= alpha_step,
                "{name}: histogram bin {alpha} falls outside the Legendre grid"
            );
            assert!(
                normalized <= nearest[1] + slack,
                "{name}: bin at {alpha} holds 2^({normalized} n) cylinders, \
                 Legendre allows {} (+{slack})",
                nearest[1]
            );
        }
    }

    // the construction config defines no sequence, so histogram runs on it
    // are configuration errors rather than silent defaults
    let path = configs_dir().join("construction.toml");
    let out = run(&["coarse-spectrum", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "histogram without a sequence is refused");
}
