//! Command-line front end. Every subcommand writes exactly one report to
//! standard output as JSON, CSV or text; diagnostics go to standard error.
//!
//! Exit status: 0 on success, 64 for usage errors and unmet preconditions,
//! 65 when an internal consistency check fails. With `--exit-verdict`,
//! `test` instead exits 0 / 20 / 21 for prime / composite / inconclusive.

use std::ffi::OsString;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::str::FromStr;
use std::time::Duration;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};

use crate::arith::{MersenneModulus, ModOutcome};
use crate::coefficients::{phi_exact, phi_stream_mod, phi_term_mod_at, psi_row, psi_table, Direction};
use crate::error::{Error, Result};
use crate::explore::{explore, factor_sum, scan_exponent_family, ExploreReport, ExponentFamily, FactorReport, ScanReport};
use crate::identities::{factorial_identity_check, sign_zero_pattern_check, weighted_sum_identities, weighted_sum_survey, IdentityReport};
use crate::limits::Limits;
use crate::primality::{even_perfect_check, run_test, PerfectVerdict, TestVerdict, Variant, Verdict};
use crate::verify::{verify_strategies, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONSISTENCY: i32 = 65;
pub const EXIT_IO: i32 = 74;
pub const EXIT_COMPOSITE: i32 = 20;
pub const EXIT_INCONCLUSIVE: i32 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "mersenne-lab", version, about = "Eight-level coefficients and Mersenne primality tests")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Row cap for double-index tables (overrides MERSENNE_LAB_MAX_TABLE).
    #[arg(long, global = true)]
    pub max_table: Option<u64>,
    /// Exponent cap for exact (non-modular) sums.
    #[arg(long, global = true)]
    pub max_exact_p: Option<u32>,
    /// Exponent cap for streamed modular sums.
    #[arg(long, global = true)]
    pub max_stream_p: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one primality test for 2^p - 1.
    Test {
        #[arg(long)]
        p: u32,
        #[arg(long, default_value = "v2")]
        variant: Variant,
        /// Stream direction (v3 only).
        #[arg(long)]
        direction: Option<Direction>,
        /// Number of chunks summed in parallel (v3 only); 0 uses every core.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Exit 0 / 20 / 21 for prime / composite / inconclusive.
        #[arg(long)]
        exit_verdict: bool,
    },
    /// Exact Ψ coefficients: one row (--n) or the whole table (--n-max).
    #[command(group(ArgGroup::new("rows").required(true).args(["n", "n_max"])))]
    Psi {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        n_max: Option<u64>,
        #[arg(long)]
        k_max: Option<u64>,
    },
    /// φ terms: exact for --n, or even-k residues mod 2^p - 1 for --p.
    #[command(group(ArgGroup::new("target").required(true).args(["n", "p"])))]
    Phi {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        p: Option<u32>,
        /// A single index.
        #[arg(long)]
        k: Option<u64>,
        #[arg(long)]
        k_max: Option<u64>,
        #[arg(long, default_value = "forward")]
        direction: Direction,
    },
    /// Cross-check every coefficient strategy against the expansion oracle.
    Verify {
        #[arg(long, default_value_t = 64)]
        n_max: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Factorial, weighted-sum and sign-table identities.
    #[command(group(ArgGroup::new("scope").required(true).args(["n", "n_max"])))]
    Identities {
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        n_max: Option<u64>,
        #[arg(long)]
        k_max: Option<u64>,
    },
    /// Partial-sum trace and template classification for 2^p - 1.
    Explore {
        #[arg(long)]
        p: u32,
    },
    /// Exact even-k φ sum for 2^p - 1 and its factorization.
    FactorSum {
        #[arg(long)]
        p: u32,
        #[arg(long, default_value_t = 10_000)]
        budget_ms: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Is N an even perfect number?
    Perfect {
        #[arg(long = "N")]
        big_n: BigUint,
    },
    /// Classify traces for the prime exponents of a family.
    Scan {
        #[arg(long)]
        family: ExponentFamily,
        #[arg(long)]
        a_range: RangeArg,
        #[arg(long)]
        b_range: Option<RangeArg>,
    },
}

/// Inclusive range written `lo..=hi`, `lo-hi`, `lo..hi` (exclusive) or `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeArg(pub RangeInclusive<u32>);

impl FromStr for RangeArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed range {s:?}"));
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
        let range = if let Some((lo, hi)) = s.split_once("..=") {
            num(lo)?..=num(hi)?
        } else if let Some((lo, hi)) = s.split_once("..") {
            let hi = num(hi)?;
            if hi == 0 {
                return Err(Error::EmptyRange(s.to_string()));
            }
            num(lo)?..=hi - 1
        } else if let Some((lo, hi)) = s.split_once('-') {
            num(lo)?..=num(hi)?
        } else {
            let v = num(s)?;
            v..=v
        };
        Ok(RangeArg(range))
    }
}

/// Rows of exact Ψ values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiRowsReport {
    pub rows: Vec<PsiRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiRow {
    pub n: u64,
    #[serde(with = "crate::bigser::vec")]
    pub psi: Vec<BigInt>,
}

/// φ terms, exact (`p` absent) or as residues mod 2^p - 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiReport {
    #[serde(default)]
    pub p: Option<u32>,
    pub n: u64,
    #[serde(default)]
    pub direction: Option<Direction>,
    pub terms: Vec<PhiEntry>,
    #[serde(with = "crate::bigser::opt", default)]
    pub factor_witness: Option<BigInt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiEntry {
    pub k: u64,
    #[serde(with = "crate::bigser")]
    pub value: BigInt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentitiesReport {
    pub reports: Vec<IdentityReport>,
}

/// CSV and text renderings; JSON comes from `Serialize`.
pub trait Emit: Serialize {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()>;
    fn text(&self, w: &mut dyn Write) -> io::Result<()>;
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl Emit for TestVerdict {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "p,variant,direction,verdict,residue,factor_witness,terms_evaluated,elapsed_us")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            self.p,
            self.variant,
            opt(&self.direction),
            self.verdict,
            opt(&self.residue),
            opt(&self.factor_witness),
            self.terms_evaluated,
            self.elapsed_us
        )
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        let dir = self.direction.map(|d| format!(" ({d})")).unwrap_or_default();
        writeln!(w, "2^{} - 1: {} [{}{}]", self.p, self.verdict, self.variant, dir)?;
        if let Some(r) = &self.residue {
            writeln!(w, "  residue: {r}")?;
        }
        if let Some(f) = &self.factor_witness {
            writeln!(w, "  factor witness: {f}")?;
        }
        writeln!(w, "  terms: {}, elapsed: {} us", self.terms_evaluated, self.elapsed_us)
    }
}

impl Emit for PsiRowsReport {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "n,k,psi")?;
        for row in &self.rows {
            for (k, v) in row.psi.iter().enumerate() {
                writeln!(w, "{},{k},{v}", row.n)?;
            }
        }
        Ok(())
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        for row in &self.rows {
            let vals: Vec<String> = row.psi.iter().map(BigInt::to_string).collect();
            writeln!(w, "n={}: [{}]", row.n, vals.join(", "))?;
        }
        Ok(())
    }
}

impl Emit for PhiReport {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        match self.p {
            Some(p) => {
                writeln!(w, "p,k,residue")?;
                for t in &self.terms {
                    writeln!(w, "{p},{},{}", t.k, t.value)?;
                }
            }
            None => {
                writeln!(w, "n,k,phi")?;
                for t in &self.terms {
                    writeln!(w, "{},{},{}", self.n, t.k, t.value)?;
                }
            }
        }
        Ok(())
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        let modulo = self.p.map(|p| format!(" mod 2^{p} - 1")).unwrap_or_default();
        for t in &self.terms {
            writeln!(w, "phi_{}({}){modulo} = {}", t.k, self.n, t.value)?;
        }
        if let Some(f) = &self.factor_witness {
            writeln!(w, "stopped: factor witness {f}")?;
        }
        Ok(())
    }
}

impl Emit for VerifyReport {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "check,passed,total")?;
        for c in &self.checks {
            writeln!(w, "{},{},{}", c.name, c.passed, c.total)?;
        }
        Ok(())
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        for c in &self.checks {
            let mark = if c.ok() { "ok" } else { "FAIL" };
            writeln!(w, "{mark:4} {} {}/{}", c.name, c.passed, c.total)?;
            for m in &c.mismatches {
                writeln!(w, "       {m}")?;
            }
        }
        Ok(())
    }
}

impl Emit for IdentitiesReport {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "n,id,left,right,pass")?;
        for r in &self.reports {
            for c in &r.checks {
                writeln!(w, "{},{},{},{},{}", r.n, c.id, c.left, c.right, c.pass)?;
            }
        }
        Ok(())
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        for r in &self.reports {
            let tag = if r.conjectural { " (conjectural)" } else { "" };
            writeln!(w, "n={}{tag}", r.n)?;
            for c in &r.checks {
                let rel = if c.pass { "=" } else { "≠" };
                writeln!(w, "  {}: {} {rel} {}", c.id, c.left, c.right)?;
            }
        }
        Ok(())
    }
}

impl Emit for ExploreReport {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        self.trace.write_csv(w)
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "p={}", self.trace.p)?;
        for r in &self.trace.records {
            writeln!(w, "  k={:<8} term={:<12} sum={}", r.k, r.term, r.running_sum)?;
        }
        if let Some(f) = &self.trace.factor_witness {
            writeln!(w, "  stopped: factor witness {f}")?;
        }
        let pat = &self.pattern;
        let eps: Vec<String> = pat
            .epsilons
            .iter()
            .map(|e| e.map(|v| format!("{v:+}")).unwrap_or_else(|| "x".into()))
            .collect();
        writeln!(w, "template match: {} (epsilons [{}])", pat.matches_hypothesis, eps.join(", "))?;
        if let Some(pos) = pat.first_mismatch {
            writeln!(w, "first mismatch at position {pos}, offset {}", pat.offsets[pos - 1])?;
        }
        if pat.beyond_template > 0 {
            writeln!(w, "{} positions beyond the explicit template", pat.beyond_template)?;
        }
        Ok(())
    }
}

impl Emit for FactorReport {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "prime,multiplicity")?;
        for f in &self.factors {
            writeln!(w, "{},{}", f.prime, f.multiplicity)?;
        }
        Ok(())
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|f| if f.multiplicity == 1 { f.prime.to_string() } else { format!("{}^{}", f.prime, f.multiplicity) })
            .collect();
        writeln!(w, "p={} sum={}", self.p, self.sum)?;
        write!(w, "  = {}", parts.join(" × "))?;
        if !self.complete {
            write!(w, " × [unfactored {}]", self.cofactor)?;
        }
        writeln!(w)?;
        writeln!(w, "  2^{} - 1 divides sum: {}", self.p, self.modulus_divides_sum)
    }
}

impl Emit for PerfectVerdict {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "N,is_even_perfect,p")?;
        writeln!(w, "{},{},{}", self.n, self.is_even_perfect, opt(&self.p))
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        match self.p {
            Some(p) => writeln!(w, "{} is even perfect: 2^{} (2^{p} - 1)", self.n, p - 1),
            None => writeln!(w, "{} is not an even perfect number", self.n),
        }
    }
}

impl Emit for ScanReport {
    fn csv(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "p,matches_hypothesis,first_mismatch,beyond_template")?;
        for r in &self.reports {
            writeln!(w, "{},{},{},{}", r.p, r.matches_hypothesis, opt(&r.first_mismatch), r.beyond_template)?;
        }
        Ok(())
    }

    fn text(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "family {}: {}/{} match", self.family, self.matched, self.tested)?;
        for r in &self.reports {
            let at = r.first_mismatch.map(|p| format!(" (mismatch at {p})")).unwrap_or_default();
            writeln!(w, "  p={}: {}{at}", r.p, r.matches_hypothesis)?;
        }
        for s in &self.skipped {
            let b = s.b.map(|b| format!(" b={b}")).unwrap_or_default();
            writeln!(w, "  skipped a={}{b}: {}", s.a, s.reason)?;
        }
        Ok(())
    }
}

fn emit<R: Emit>(report: &R, format: Format, out: &mut dyn Write) -> io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer(&mut *out, report)?;
            writeln!(out)
        }
        Format::Csv => report.csv(out),
        Format::Text => report.text(out),
    }
}

enum Failure {
    Lib(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(Failure::Lib(e)) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_consistency_failure() {
                EXIT_CONSISTENCY
            } else {
                EXIT_USAGE
            }
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: writing output: {e}");
            EXIT_IO
        }
    }
}

fn limits_for(cli: &Cli) -> Limits {
    let mut limits = Limits::from_env();
    if let Some(v) = cli.max_table {
        limits.max_table = v;
    }
    if let Some(v) = cli.max_exact_p {
        limits.max_exact_sum_p = v;
    }
    if let Some(v) = cli.max_stream_p {
        limits.max_stream_p = v;
    }
    limits
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let limits = limits_for(cli);
    let format = cli.format;
    match &cli.command {
        Command::Test { p, variant, direction, parallel, exit_verdict } => {
            if direction.is_some() && *variant != Variant::V3 {
                return Err(Error::InvalidArgument("--direction applies to --variant v3 only".into()).into());
            }
            let parallel = if *parallel == 0 { rayon::current_num_threads() } else { *parallel };
            let verdict = run_test(*p, *variant, *direction, parallel, &limits)?;
            emit(&verdict, format, out)?;
            Ok(if *exit_verdict {
                match verdict.verdict {
                    Verdict::Prime => EXIT_OK,
                    Verdict::Composite => EXIT_COMPOSITE,
                    Verdict::Inconclusive => EXIT_INCONCLUSIVE,
                }
            } else {
                EXIT_OK
            })
        }
        Command::Psi { n, n_max, k_max } => {
            let trim = |mut row: Vec<BigInt>| {
                if let Some(k) = k_max {
                    row.truncate(*k as usize + 1);
                }
                row
            };
            let rows = match (n, n_max) {
                (Some(n), _) => vec![PsiRow { n: *n, psi: trim(psi_row(*n)?) }],
                (None, Some(n_max)) => psi_table(*n_max, &limits)?
                    .rows()
                    .map(|(n, r)| PsiRow { n, psi: trim(r.to_vec()) })
                    .collect(),
                (None, None) => unreachable!("clap requires --n or --n-max"),
            };
            emit(&PsiRowsReport { rows }, format, out)?;
            Ok(EXIT_OK)
        }
        Command::Phi { n, p, k, k_max, direction } => {
            let report = match (n, p) {
                (Some(n), _) => {
                    let ks: Vec<u64> = match k {
                        Some(k) => vec![*k],
                        None => (0..=k_max.unwrap_or(n / 2).min(n / 2)).collect(),
                    };
                    let terms = ks
                        .into_iter()
                        .map(|k| Ok(PhiEntry { k, value: phi_exact(*n, k)? }))
                        .collect::<Result<_>>()?;
                    PhiReport { p: None, n: *n, direction: None, terms, factor_witness: None }
                }
                (None, Some(p)) => phi_mod_report(*p, *k, *k_max, *direction, &limits)?,
                (None, None) => unreachable!("clap requires --n or --p"),
            };
            emit(&report, format, out)?;
            Ok(EXIT_OK)
        }
        Command::Verify { n_max, seed } => {
            let report = verify_strategies(*n_max, *seed, &limits)?;
            emit(&report, format, out)?;
            Ok(if report.all_pass() { EXIT_OK } else { EXIT_CONSISTENCY })
        }
        Command::Identities { n, n_max, k_max } => {
            let mut reports = Vec::new();
            if let Some(n) = n {
                reports.push(factorial_identity_check(*n)?);
                if *n >= 16 && n.is_power_of_two() {
                    reports.push(weighted_sum_identities(*n)?);
                } else if n % 2 == 0 && *n > 0 {
                    reports.push(weighted_sum_survey(*n)?);
                }
            }
            if let Some(n_max) = n_max {
                for m in 1..=*n_max {
                    reports.push(factorial_identity_check(m)?);
                }
                reports.push(sign_zero_pattern_check(*n_max, k_max.unwrap_or(*n_max / 2), &limits)?);
            }
            let broken = reports.iter().any(|r| !r.conjectural && !r.all_pass());
            emit(&IdentitiesReport { reports }, format, out)?;
            Ok(if broken { EXIT_CONSISTENCY } else { EXIT_OK })
        }
        Command::Explore { p } => {
            emit(&explore(*p, &limits)?, format, out)?;
            Ok(EXIT_OK)
        }
        Command::FactorSum { p, budget_ms, seed } => {
            let report = factor_sum(*p, Duration::from_millis(*budget_ms), *seed, &limits)?;
            emit(&report, format, out)?;
            Ok(EXIT_OK)
        }
        Command::Perfect { big_n } => {
            emit(&even_perfect_check(big_n, &limits)?, format, out)?;
            Ok(EXIT_OK)
        }
        Command::Scan { family, a_range, b_range } => {
            let report = scan_exponent_family(*family, a_range.0.clone(), b_range.clone().map(|r| r.0), &limits)?;
            emit(&report, format, out)?;
            Ok(EXIT_OK)
        }
    }
}

fn phi_mod_report(p: u32, k: Option<u64>, k_max: Option<u64>, direction: Direction, limits: &Limits) -> Result<PhiReport> {
    if p > limits.max_trace_p {
        return Err(Error::CapExceeded {
            what: "exponent p for listing φ residues",
            value: p as u64,
            cap: limits.max_trace_p as u64,
        });
    }
    let modulus = MersenneModulus::new(p)?;
    let n = modulus.half_u64().expect("capped exponent");
    let mut terms = Vec::new();
    let mut factor_witness = None;
    let mut take = |outcome: ModOutcome<crate::coefficients::PhiTermMod>, terms: &mut Vec<PhiEntry>| match outcome {
        ModOutcome::Value(t) => {
            terms.push(PhiEntry { k: t.k, value: BigInt::from(t.residue) });
            true
        }
        ModOutcome::Witness(w) => {
            factor_witness = Some(BigInt::from(w.divisor().clone()));
            false
        }
    };
    match k {
        Some(k) => {
            take(phi_term_mod_at(&modulus, k)?, &mut terms);
        }
        None => {
            for item in phi_stream_mod(&modulus, direction)? {
                let within = match (&item, k_max) {
                    (ModOutcome::Value(t), Some(km)) => t.k <= km,
                    _ => true,
                };
                if !within {
                    if direction == Direction::Forward {
                        break;
                    }
                    continue;
                }
                if !take(item, &mut terms) {
                    break;
                }
            }
        }
    }
    Ok(PhiReport { p: Some(p), n, direction: k.is_none().then_some(direction), terms, factor_witness })
}
