//! Command implementations behind the `fairdie` binary.
//!
//! Each subcommand has a function that computes a structured report and a
//! renderer that writes it; [`run`] wires them to parsed arguments. Data goes
//! to the `out` writer, diagnostics to `err`.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fairdie::analysis::ceil_log2;
use fairdie::ddg::{build_canonical, build_from_algorithm, check_optimal};
use fairdie::oracle::explore;
use fairdie::{
    entropy, exact_expected_flips, expected_flips_canonical, flip_distribution_uniform,
    make_seeded, verify_bounds, BitSource, Die64, ExactFlipDistribution, ProbabilityVector,
    Rational, SamplerKind,
};
use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Significance level of the goodness-of-fit test.
pub const SIGNIFICANCE: f64 = 0.001;

/// Minimum samples per outcome for `chisq`.
pub const MIN_PER_CELL: u64 = 50;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] fairdie::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    /// 1 for bad input, 2 for a failed check.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "fairdie", version, about = "Entropy-optimal fair dice and discrete sampling from coin flips")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw outcomes from a seeded bit stream.
    Sample {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append the number of flips used by each draw.
        #[arg(long)]
        show_flips: bool,
    },
    /// Exact expected flips, bounds and flip distribution.
    Analyze {
        #[command(flatten)]
        target: TargetArgs,
        /// Depth of the printed flip distribution.
        #[arg(long, default_value_t = 16)]
        depth: u32,
        /// Check the bounds for every die size 1..=N instead.
        #[arg(long, value_name = "N", conflicts_with_all = ["die", "dist"])]
        sweep: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Export the sampler's DDG tree as Graphviz DOT.
    Tree {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 8)]
        depth: u32,
        /// Verify leaf counts against the binary digits of the masses.
        #[arg(long)]
        check: bool,
    },
    /// Print the recycler state after every bit history.
    OracleDump {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 6)]
        depth: u32,
    },
    /// Chi-square goodness-of-fit test of the sampler.
    Chisq {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 100_000)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare flips per roll against naive rejection sampling.
    Bench {
        /// Die sizes, comma separated.
        #[arg(long = "n", value_delimiter = ',', default_values_t = [5u64, 4, 257])]
        sizes: Vec<u64>,
        #[arg(long, default_value_t = 1_000_000)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Omit wall-clock columns so output is reproducible.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Args)]
#[group(multiple = false)]
pub struct TargetArgs {
    /// Fair die with N sides.
    #[arg(long, value_name = "N")]
    pub die: Option<u64>,
    /// Exact probabilities: "a/b,c/d,..." or a JSON array of {"num","den"}.
    #[arg(long, value_name = "P")]
    pub dist: Option<String>,
}

/// What to sample or analyze.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Die(u64),
    Dist(ProbabilityVector),
}

impl Target {
    pub fn kind(&self) -> CliResult<SamplerKind> {
        Ok(match self {
            Target::Die(n) => SamplerKind::uniform(*n)?,
            Target::Dist(p) => SamplerKind::discrete(p.clone()),
        })
    }

    pub fn outcomes(&self) -> u64 {
        match self {
            Target::Die(n) => *n,
            Target::Dist(p) => p.len() as u64,
        }
    }

    pub fn distribution(&self) -> CliResult<ProbabilityVector> {
        Ok(match self {
            Target::Die(n) => ProbabilityVector::uniform(*n)?,
            Target::Dist(p) => p.clone(),
        })
    }

    /// Entropy in bits.
    pub fn entropy(&self) -> f64 {
        match self {
            Target::Die(n) => (*n as f64).log2(),
            Target::Dist(p) => entropy(p),
        }
    }
}

impl TryFrom<&TargetArgs> for Target {
    type Error = CliError;

    fn try_from(args: &TargetArgs) -> CliResult<Self> {
        match (&args.die, &args.dist) {
            (Some(n), None) => {
                Die64::new(*n).map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(Target::Die(*n))
            }
            (None, Some(p)) => ProbabilityVector::parse(p)
                .map(Target::Dist)
                .map_err(|e| CliError::Usage(e.to_string())),
            _ => Err(CliError::Usage("give exactly one of --die or --dist".into())),
        }
    }
}

/// Runs one parsed command.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Sample {
            target,
            count,
            seed,
            show_flips,
        } => {
            let report = sample(&target.try_into()?, *count, *seed)?;
            out.write_all(report.render(*show_flips).as_bytes())?;
        }
        Command::Analyze {
            target,
            depth,
            sweep,
            json,
        } => {
            let text = match sweep {
                Some(n_max) => sweep_bounds(*n_max, *json)?,
                None => {
                    let report = analyze(&target.try_into()?, *depth)?;
                    if *json {
                        format!("{}\n", report.to_json())
                    } else {
                        report.render()
                    }
                }
            };
            out.write_all(text.as_bytes())?;
        }
        Command::Tree {
            target,
            depth,
            check,
        } => {
            let target: Target = target.try_into()?;
            let tree = build_from_algorithm(&target.kind()?, *depth);
            out.write_all(tree.to_dot().as_bytes())?;
            if *check {
                let verdict = check_optimal(&tree, &target.distribution()?)?;
                writeln!(err, "{verdict}")?;
                if !verdict.is_optimal() {
                    return Err(CliError::Check("tree is not optimal".into()));
                }
            }
        }
        Command::OracleDump { target, depth } => {
            out.write_all(oracle_dump(&target.try_into()?, *depth)?.as_bytes())?;
        }
        Command::Chisq {
            target,
            count,
            seed,
        } => {
            let report = chisq(&target.try_into()?, *count, *seed)?;
            out.write_all(report.render().as_bytes())?;
            if !report.pass {
                return Err(CliError::Check(format!(
                    "p-value {} below {SIGNIFICANCE}",
                    report.p_value
                )));
            }
        }
        Command::Bench {
            sizes,
            count,
            seed,
            no_timing,
            json,
        } => {
            let rows = bench(sizes, *count, *seed, !*no_timing)?;
            let text = if *json {
                format!("{}\n", serde_json::to_string_pretty(&rows).expect("plain data"))
            } else {
                render_bench(&rows)
            };
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// `numer/denom`, always with a denominator.
pub fn fraction(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn decimal(r: &Rational) -> String {
    format!("{:?}", r.to_f64().unwrap_or(f64::NAN))
}

fn int_json(v: &BigInt) -> Value {
    match v.to_u64() {
        Some(u) => json!(u),
        None => json!(v.to_string()),
    }
}

/// Outcomes and flip counts from `sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub draws: Vec<(u64, u64)>,
    pub entropy_bits: f64,
}

impl SampleReport {
    pub fn total_flips(&self) -> u64 {
        self.draws.iter().map(|&(_, f)| f).sum()
    }

    pub fn flips_per_draw(&self) -> f64 {
        self.total_flips() as f64 / self.draws.len() as f64
    }

    pub fn render(&self, show_flips: bool) -> String {
        let mut s = String::new();
        for &(outcome, flips) in &self.draws {
            if show_flips {
                let _ = writeln!(s, "{outcome} {flips}");
            } else {
                let _ = writeln!(s, "{outcome}");
            }
        }
        let _ = writeln!(
            s,
            "# total_flips={} flips_per_roll={:?} entropy_bits={:?}",
            self.total_flips(),
            self.flips_per_draw(),
            self.entropy_bits
        );
        s
    }
}

pub fn sample(target: &Target, count: u64, seed: u64) -> CliResult<SampleReport> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let kind = target.kind()?;
    let mut source = make_seeded(seed);
    let draws = (0..count)
        .map(|_| {
            kind.run(&mut source, &mut ())
                .map(|(outcome, flips)| (outcome as u64, flips))
        })
        .collect::<Result<_, _>>()?;
    Ok(SampleReport {
        draws,
        entropy_bits: target.entropy(),
    })
}

/// Exact analysis of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeReport {
    pub target: Target,
    pub expected: Rational,
    pub flips: ExactFlipDistribution,
    pub depth: u32,
    pub entropy_bits: f64,
}

impl AnalyzeReport {
    /// `ceil(log2 n)` and `ceil(log2 n) + 1` for dice.
    pub fn bounds(&self) -> Option<(u32, u32)> {
        match self.target {
            Target::Die(n) => Some((ceil_log2(n), ceil_log2(n) + 1)),
            Target::Dist(_) => None,
        }
    }

    pub fn headline(&self) -> String {
        let e = format!("E[N] = {} = {}", fraction(&self.expected), decimal(&self.expected));
        match self.bounds() {
            Some((lo, hi)) => format!("{e}; bounds [{lo}, {hi}]"),
            None => format!(
                "{e}; entropy bounds [{:?}, {:?})",
                self.entropy_bits,
                self.entropy_bits + 2.0
            ),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        match &self.target {
            Target::Die(n) => {
                let _ = writeln!(s, "die: {n}");
            }
            Target::Dist(p) => {
                let _ = writeln!(s, "distribution: {p}");
            }
        }
        let _ = writeln!(s, "{}", self.headline());
        let _ = writeln!(s, "entropy: {:?} bits", self.entropy_bits);
        let _ = writeln!(s, "flip distribution:");
        for (level, mass) in self.flips.masses() {
            let _ = writeln!(s, "  P(N = {level}) = {}", fraction(mass));
        }
        if !self.flips.residual().is_zero() {
            let _ = writeln!(
                s,
                "  P(N > {}) = {}",
                self.depth,
                fraction(self.flips.residual())
            );
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let flips: Vec<Value> = self
            .flips
            .masses()
            .iter()
            .map(|(level, mass)| json!({ "flips": level, "mass": fraction(mass) }))
            .collect();
        let mut v = json!({
            "expected_num": int_json(self.expected.numer()),
            "expected_den": int_json(self.expected.denom()),
            "entropy_bits": self.entropy_bits,
            "depth": self.depth,
            "flip_distribution": flips,
            "residual": fraction(self.flips.residual()),
        });
        match &self.target {
            Target::Die(n) => {
                let (lo, hi) = self.bounds().expect("die");
                v["n"] = json!(n);
                v["lower"] = json!(lo);
                v["upper"] = json!(hi);
            }
            Target::Dist(p) => v["distribution"] = json!(p.to_string()),
        }
        v
    }
}

pub fn analyze(target: &Target, depth: u32) -> CliResult<AnalyzeReport> {
    let (expected, flips) = match target {
        Target::Die(n) => (exact_expected_flips(*n), flip_distribution_uniform(*n, depth)),
        Target::Dist(p) => (
            expected_flips_canonical(p)?,
            build_canonical(p, depth)?.flip_distribution(),
        ),
    };
    Ok(AnalyzeReport {
        target: target.clone(),
        expected,
        flips,
        depth,
        entropy_bits: target.entropy(),
    })
}

/// Bounds table for dice `1..=n_max`; a violation is a check failure.
pub fn sweep_bounds(n_max: u64, as_json: bool) -> CliResult<String> {
    if n_max == 0 {
        return Err(CliError::Usage("--sweep must be at least 1".into()));
    }
    let report = verify_bounds(n_max).map_err(|e| match e {
        fairdie::Error::BoundViolation { .. } => CliError::Check(e.to_string()),
        other => other.into(),
    })?;
    if as_json {
        return Ok(format!(
            "{}\n",
            serde_json::to_string(&report.rows).expect("plain data")
        ));
    }
    let mut s = String::from("n\tE[N]\tdecimal\tlower\tupper\n");
    for row in &report.rows {
        let e = row.expected();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            row.n,
            fraction(&e),
            decimal(&e),
            row.lower,
            row.upper
        );
    }
    let (n_hi, hi) = &report.max_slack;
    let (n_lo, lo) = &report.min_slack;
    let _ = writeln!(s, "# all {n_max} sizes within bounds");
    let _ = writeln!(s, "# largest gap to upper bound: n={n_hi} ({})", fraction(hi));
    let _ = writeln!(s, "# smallest gap to upper bound: n={n_lo} ({})", fraction(lo));
    Ok(s)
}

/// One line per bit history, shortest first: history, state, and the
/// outcome if the sampler stopped there.
pub fn oracle_dump(target: &Target, depth: u32) -> CliResult<String> {
    let mut visits = explore(&target.kind()?, depth);
    visits.sort_by(|a, b| (a.history.len(), &a.history).cmp(&(b.history.len(), &b.history)));
    let mut s = String::new();
    for v in visits {
        let history = if v.history.is_empty() { "-" } else { &v.history };
        let _ = write!(s, "{history}\t({}, {})", v.state.x, v.state.m);
        if let Some(d) = v.doubled {
            let _ = write!(s, "\tdoubled=({}, {})", d.x, d.m);
        }
        if let Some(i) = v.outcome {
            let _ = write!(s, "\t-> {i}");
        }
        s.push('\n');
    }
    Ok(s)
}

/// Goodness-of-fit result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChisqReport {
    pub count: u64,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub statistic: f64,
    pub df: u64,
    pub p_value: f64,
    pub pass: bool,
}

impl ChisqReport {
    pub fn render(&self) -> String {
        let mut s = String::from("outcome\tobserved\texpected\n");
        for (i, (o, e)) in self.observed.iter().zip(&self.expected).enumerate() {
            let _ = writeln!(s, "{}\t{o}\t{e:.1}", i + 1);
        }
        let _ = writeln!(
            s,
            "chi2 = {:.4}; df = {}; p = {:.6}; {} at {SIGNIFICANCE}",
            self.statistic,
            self.df,
            self.p_value,
            if self.pass { "pass" } else { "FAIL" }
        );
        s
    }
}

/// Chi-square test of `count` seeded draws against the exact masses.
///
/// Zero-mass outcomes are left out of the degrees of freedom; drawing one
/// fails the test outright.
pub fn chisq(target: &Target, count: u64, seed: u64) -> CliResult<ChisqReport> {
    let k = target.outcomes();
    if count < MIN_PER_CELL * k {
        return Err(CliError::Usage(format!(
            "--count must be at least {} ({MIN_PER_CELL} per outcome)",
            MIN_PER_CELL * k
        )));
    }
    let p = target.distribution()?;
    let kind = target.kind()?;
    let mut source = make_seeded(seed);
    let mut observed = vec![0u64; k as usize];
    for _ in 0..count {
        let (i, _) = kind.run(&mut source, &mut ())?;
        observed[i - 1] += 1;
    }
    let expected: Vec<f64> = p
        .probs()
        .iter()
        .map(|pi| pi.to_f64().unwrap_or(0.0) * count as f64)
        .collect();
    let mut statistic = 0.0;
    let mut cells = 0u64;
    let mut impossible = false;
    for (&o, &e) in observed.iter().zip(&expected) {
        if e > 0.0 {
            cells += 1;
            statistic += (o as f64 - e).powi(2) / e;
        } else if o > 0 {
            impossible = true;
        }
    }
    let df = cells.saturating_sub(1);
    let p_value = if impossible {
        0.0
    } else if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .expect("positive degrees of freedom")
            .sf(statistic)
    };
    Ok(ChisqReport {
        count,
        observed,
        expected,
        statistic,
        df,
        p_value,
        pass: p_value > SIGNIFICANCE,
    })
}

/// Naive rejection: read `ceil(log2 n)` bits as an integer, retry with
/// fresh bits until it is below `n`. Returns the 1-based outcome.
pub fn naive_roll<S: BitSource + ?Sized>(n: u64, source: &mut S) -> CliResult<u64> {
    let k = ceil_log2(n);
    loop {
        let mut v = 0u64;
        for _ in 0..k {
            v = (v << 1) | source.next_bit()?.as_u8() as u64;
        }
        if v < n {
            return Ok(v + 1);
        }
    }
}

/// `ceil(log2 n) * 2^ceil(log2 n) / n`.
pub fn naive_expected_flips(n: u64) -> Rational {
    let k = ceil_log2(n);
    Rational::new(BigInt::from(k) << k, BigInt::from(n))
}

/// Benchmark line for one die size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: u64,
    pub count: u64,
    pub recycler_flips_per_roll: f64,
    pub recycler_exact: f64,
    /// Standard error of the measured mean.
    pub recycler_std_error: f64,
    pub z_score: f64,
    pub within_5_sigma: bool,
    pub naive_flips_per_roll: f64,
    pub naive_exact: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recycler_rolls_per_sec: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub naive_rolls_per_sec: Option<f64>,
}

pub fn bench(sizes: &[u64], count: u64, seed: u64, timing: bool) -> CliResult<Vec<BenchRow>> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    sizes
        .iter()
        .map(|&n| bench_one(n, count, seed, timing))
        .collect()
}

fn bench_one(n: u64, count: u64, seed: u64, timing: bool) -> CliResult<BenchRow> {
    let die = Die64::new(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut source = make_seeded(seed);
    let (mut sum, mut sum_sq) = (0f64, 0f64);
    let start = Instant::now();
    for _ in 0..count {
        let (_, flips) = die.roll_with(&mut source, &mut ())?;
        let f = flips as f64;
        sum += f;
        sum_sq += f * f;
    }
    let recycler_secs = start.elapsed().as_secs_f64();

    let mut source = make_seeded(seed);
    let start = Instant::now();
    for _ in 0..count {
        naive_roll(n, &mut source)?;
    }
    let naive_secs = start.elapsed().as_secs_f64();

    let c = count as f64;
    let mean = sum / c;
    let variance = (sum_sq / c - mean * mean).max(0.0);
    let std_error = (variance / c).sqrt();
    let exact = exact_expected_flips(n).to_f64().unwrap_or(f64::NAN);
    let z_score = if std_error > 0.0 {
        (mean - exact) / std_error
    } else if mean == exact {
        0.0
    } else {
        f64::INFINITY
    };
    let rate = |secs: f64| timing.then(|| c / secs.max(1e-9));
    Ok(BenchRow {
        n,
        count,
        recycler_flips_per_roll: mean,
        recycler_exact: exact,
        recycler_std_error: std_error,
        z_score,
        within_5_sigma: z_score.abs() <= 5.0,
        naive_flips_per_roll: source.flips_consumed() as f64 / c,
        naive_exact: naive_expected_flips(n).to_f64().unwrap_or(f64::NAN),
        recycler_rolls_per_sec: rate(recycler_secs),
        naive_rolls_per_sec: rate(naive_secs),
    })
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let timing = rows.iter().any(|r| r.recycler_rolls_per_sec.is_some());
    let mut s = String::from("n\tcount\trecycler\texact\tz\tnaive\tnaive_exact");
    if timing {
        s.push_str("\trecycler_rolls/s\tnaive_rolls/s");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{}\t{}\t{:.4}\t{:.4}\t{:+.2}\t{:.4}\t{:.4}",
            r.n,
            r.count,
            r.recycler_flips_per_roll,
            r.recycler_exact,
            r.z_score,
            r.naive_flips_per_roll,
            r.naive_exact
        );
        if let (Some(a), Some(b)) = (r.recycler_rolls_per_sec, r.naive_rolls_per_sec) {
            let _ = write!(s, "\t{a:.3e}\t{b:.3e}");
        }
        s.push('\n');
    }
    s
}
