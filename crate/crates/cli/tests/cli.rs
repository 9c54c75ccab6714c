use std::process::{Command, Output};

use fairdie::Rational;
use fairdie_cli::{
    analyze, bench, chisq, naive_expected_flips, naive_roll, oracle_dump, sample, CliError,
    Target,
};
use num_bigint::BigInt;

fn fairdie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairdie"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn sample_is_deterministic_and_in_range() {
    let args = ["sample", "--die", "5", "--count", "3", "--seed", "42"];
    let a = fairdie(&args);
    let b = fairdie(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    for l in &lines[..3] {
        let v: u64 = l.parse().unwrap();
        assert!((1..=5).contains(&v));
    }
    assert!(lines[3].starts_with("# total_flips="));
    let other = fairdie(&["sample", "--die", "5", "--count", "3", "--seed", "43"]);
    assert!(other.status.success());
}

#[test]
fn one_sided_die_uses_no_flips() {
    let o = fairdie(&["sample", "--die", "1", "--count", "2"]);
    let text = stdout(&o);
    assert!(text.starts_with("1\n1\n"));
    assert!(text.contains("total_flips=0 "));
}

#[test]
fn show_flips_reports_per_draw_counts() {
    let o = fairdie(&[
        "sample", "--dist", "3/8,1/2,1/8", "--count", "10", "--seed", "1", "--show-flips",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let draws: Vec<(u64, u64)> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let (a, b) = l.split_once(' ').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(draws.len(), 10);
    assert!(draws.iter().all(|&(i, f)| (1..=3).contains(&i) && f >= 1));
    let total: u64 = draws.iter().map(|d| d.1).sum();
    assert!(text.contains(&format!("total_flips={total} ")));
}

#[test]
fn sample_flip_totals_match_report() {
    let r = sample(&Target::Die(6), 1000, 3).unwrap();
    assert_eq!(r.draws.len(), 1000);
    assert_eq!(r.total_flips(), r.draws.iter().map(|d| d.1).sum::<u64>());
    assert!(r.flips_per_draw() >= r.entropy_bits);
}

#[test]
fn analyze_headlines() {
    let o = fairdie(&["analyze", "--die", "5"]);
    assert!(stdout(&o).contains("E[N] = 18/5 = 3.6; bounds [3, 4]"));
    let o = fairdie(&["analyze", "--die", "8"]);
    assert!(stdout(&o).contains("E[N] = 3/1 = 3.0"));
    let o = fairdie(&["analyze", "--dist", "3/8,1/2,1/8"]);
    let text = stdout(&o);
    assert!(text.contains("E[N] = 7/4 = 1.75"));
    for line in ["P(N = 1) = 1/2", "P(N = 2) = 1/4", "P(N = 3) = 1/4"] {
        assert!(text.contains(line), "{text}");
    }
    assert!(!text.contains("P(N >"));
}

#[test]
fn analyze_json_fields() {
    let o = fairdie(&["analyze", "--die", "5", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 5);
    assert_eq!(v["expected_num"], 18);
    assert_eq!(v["expected_den"], 5);
    assert_eq!(v["lower"], 3);
    assert_eq!(v["upper"], 4);
}

#[test]
fn analyze_sweep_json() {
    let o = fairdie(&["analyze", "--sweep", "64", "--json"]);
    assert!(o.status.success());
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 64);
    assert_eq!(rows[2]["expected_num"], 8);
    assert_eq!(rows[2]["expected_den"], 3);
}

#[test]
fn analyze_report_flip_law_sums_to_one() {
    let r = analyze(&Target::Die(7), 20).unwrap();
    let total: Rational = r.flips.masses().values().sum::<Rational>() + r.flips.residual();
    assert_eq!(total, Rational::from_integer(BigInt::from(1)));
    assert_eq!(r.bounds(), Some((3, 4)));
}

#[test]
fn tree_exports_dot_and_verdict() {
    let o = fairdie(&["tree", "--die", "5", "--depth", "6", "--check"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("digraph ddg {"));
    assert_eq!(stderr(&o).trim(), "optimal");

    let o = fairdie(&["tree", "--dist", "1/2,1/2", "--depth", "1"]);
    let text = stdout(&o);
    assert_eq!(text.matches("shape=box").count(), 2);
    assert!(stderr(&o).is_empty());

    let o = fairdie(&["tree", "--dist", "3/8,1/2,1/8", "--depth", "3", "--check"]);
    let text = stdout(&o);
    for leaf in [
        "r0 [shape=box, label=\"2\"]",
        "r10 [shape=box, label=\"1\"]",
        "r110 [shape=box, label=\"1\"]",
        "r111 [shape=box, label=\"3\"]",
    ] {
        assert!(text.contains(leaf), "{text}");
    }
    assert_eq!(stderr(&o).trim(), "optimal");
}

#[test]
fn oracle_dump_lists_states() {
    let text = oracle_dump(&Target::Die(5), 3).unwrap();
    assert_eq!(text.lines().count(), 15);
    assert!(text.starts_with("-\t(1, 1)\n"));
    assert!(text.contains("011\t(2, 3)\tdoubled=(7, 8)\n"));
    assert!(text.contains("001\t(5, 5)\tdoubled=(5, 8)\t-> 5\n"));
    let o = fairdie(&["oracle-dump", "--die", "5", "--depth", "3"]);
    assert_eq!(stdout(&o), text);
}

#[test]
fn chisq_examples() {
    let r = chisq(&Target::Die(6), 60_000, 9).unwrap();
    assert!(r.p_value > 0.001 && r.p_value < 1.0, "{r:?}");
    assert_eq!(r.df, 5);
    let r = chisq(&Target::Die(1), 100, 0).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.df, 0);
    assert!(r.pass);
    let p = "3/8,1/2,1/8".parse().unwrap();
    assert!(chisq(&Target::Dist(p), 80_000, 3).unwrap().pass);
}

#[test]
fn chisq_skips_zero_mass_cells() {
    let p = "1/2,0,1/2".parse().unwrap();
    let r = chisq(&Target::Dist(p), 10_000, 5).unwrap();
    assert_eq!(r.df, 1);
    assert_eq!(r.observed[1], 0);
}

#[test]
fn chisq_rejects_small_counts() {
    let err = chisq(&Target::Die(6), 299, 0).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
    let o = fairdie(&["chisq", "--die", "6", "--count", "299"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn naive_baseline() {
    assert_eq!(naive_expected_flips(5), Rational::new(BigInt::from(24), BigInt::from(5)));
    assert_eq!(naive_expected_flips(4), Rational::from_integer(BigInt::from(2)));
    let mut src = fairdie::ReplaySource::from_u8s(&[1, 1, 1, 0, 1, 1]);
    // 111 = 7 >= 5 is rejected, then 011 = 3 gives outcome 4.
    assert_eq!(naive_roll(5, &mut src).unwrap(), 4);
}

#[test]
fn bench_rows() {
    let rows = bench(&[5, 4, 257], 100_000, 1, false).unwrap();
    assert!(rows.iter().all(|r| r.within_5_sigma), "{rows:?}");
    assert!(rows[0].recycler_flips_per_roll < rows[0].naive_flips_per_roll);
    assert_eq!(rows[1].recycler_flips_per_roll, 2.0);
    assert_eq!(rows[1].naive_flips_per_roll, 2.0);
    assert!(rows[2].recycler_flips_per_roll <= 10.0);
    assert!(rows.iter().all(|r| r.recycler_rolls_per_sec.is_none()));
}

#[test]
fn bench_output_is_reproducible_without_timing() {
    let args = ["bench", "--n", "3,5", "--count", "20000", "--no-timing", "--json"];
    let a = fairdie(&args);
    let b = fairdie(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].get("recycler_rolls_per_sec").is_none());
}

#[test]
fn exit_codes() {
    let o = fairdie(&["sample", "--dist", "0.375,0.5,0.125"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("a/b"));
    assert_eq!(fairdie(&["sample"]).status.code(), Some(1));
    assert_eq!(fairdie(&["sample", "--die", "0"]).status.code(), Some(1));
    assert_eq!(fairdie(&["sample", "--die", "3", "--dist", "1/1"]).status.code(), Some(1));
    assert_eq!(fairdie(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fairdie(&["sample", "--dist", "1/2,1/3"]).status.code(), Some(1));
    assert_eq!(fairdie(&["--help"]).status.code(), Some(0));
    assert_eq!(fairdie(&["--version"]).status.code(), Some(0));
    assert_eq!(CliError::Check("x".into()).exit_code(), 2);
}

#[test]
fn json_distribution_input() {
    let o = fairdie(&[
        "analyze",
        "--dist",
        r#"[{"num": 3, "den": 8}, {"num": 1, "den": 2}, {"num": 1, "den": 8}]"#,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("E[N] = 7/4"));
}
