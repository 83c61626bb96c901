//! `formsym` command-line interface.
//!
//! Exit codes: 0 success, 1 validation or verification failure, 2 usage
//! error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use formsym::dynamics::{bifurcation_sweep, coordinate_name, init_coordinate, SweepGrid};
use formsym::factorize::{
    factor_separable_additive, reduce, sample_valid_inits, verify_equivalence, verify_semiconjugacy, EquivalenceMode,
    ReduceOptions, Reduction,
};
use formsym::model::{rel_err, DifferenceEquation, EquationKind, GroupTag};
use formsym::poly::{format_complex, solve_order2_closed_form};
use formsym::{iterate_orbit, load_equation_file, Complex64 as C};

#[derive(Parser)]
#[command(name = "formsym", version, about = "Order reduction of difference equations by semiconjugate factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate an equation file.
    Parse { file: PathBuf },
    /// Iterate an equation and write the orbit as CSV.
    Simulate {
        file: PathBuf,
        /// Initial values, oldest first: x(-k),...,x(0).
        #[arg(long, allow_hyphen_values = true)]
        init: String,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Period detection tolerance.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Find a form symmetry and print the factorization.
    Factor {
        file: PathBuf,
        /// Reduction constant as "re,im" (or a real number).
        #[arg(long, allow_hyphen_values = true)]
        constant: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check semiconjugacy and equivalence with direct iteration.
    Verify {
        file: PathBuf,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Reduction constant as "re,im" (or a real number).
        #[arg(long, allow_hyphen_values = true)]
        constant: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate x(N) of a linear equation by closed form, cascade and iteration.
    SolveLinear {
        file: PathBuf,
        /// Initial values, oldest first: x(-k),...,x(0).
        #[arg(long, allow_hyphen_values = true)]
        init: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one initial coordinate and write the kept orbit tails as CSV.
    Bifurcate {
        file: PathBuf,
        /// Fixed initial coordinate, e.g. x-1=2.3 (repeatable).
        #[arg(long, allow_hyphen_values = true)]
        fix: Vec<String>,
        /// Swept coordinate as name=lo:hi:count, e.g. x0=2.3:4.8:500.
        #[arg(long, allow_hyphen_values = true)]
        sweep: String,
        #[arg(long, default_value_t = 100)]
        transient: usize,
        #[arg(long, default_value_t = 200)]
        keep: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Period detection tolerance.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

enum Failure {
    Usage(String),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Failed(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn failed(msg: impl Into<String>) -> Failure {
    Failure::Failed(anyhow!(msg.into()))
}

fn load(path: &Path) -> Result<DifferenceEquation, Failure> {
    load_equation_file(path).map_err(|e| Failure::Failed(anyhow!(e)))
}

fn parse_real(text: &str) -> Result<f64, Failure> {
    text.trim().parse::<f64>().map_err(|_| usage(format!("`{text}` is not a number")))
}

fn parse_list(text: &str) -> Result<Vec<C>, Failure> {
    text.split(',').map(|s| parse_real(s).map(|v| C::new(v, 0.0))).collect()
}

fn parse_complex(text: &str) -> Result<C, Failure> {
    let parts: Vec<&str> = text.split(',').collect();
    match parts.as_slice() {
        [re] => Ok(C::new(parse_real(re)?, 0.0)),
        [re, im] => Ok(C::new(parse_real(re)?, parse_real(im)?)),
        _ => Err(usage(format!("`{text}` is not a complex number (use re,im)"))),
    }
}

fn parse_init(eq: &DifferenceEquation, text: &str) -> Result<Vec<C>, Failure> {
    let init = parse_list(text)?;
    if init.len() != eq.order() {
        return Err(usage(format!("expected {} initial values, got {}", eq.order(), init.len())));
    }
    Ok(init)
}

/// Writes `body` to `out` or standard output. Summary lines go to standard
/// output when the body went to a file and to standard error otherwise.
struct Sink {
    to_file: bool,
}

impl Sink {
    fn emit(out: &Option<PathBuf>, body: &str) -> Result<Sink, Failure> {
        match out {
            Some(path) => {
                std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
                Ok(Sink { to_file: true })
            }
            None => {
                print!("{body}");
                Ok(Sink { to_file: false })
            }
        }
    }

    fn note(&self, line: &str) {
        if self.to_file {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
}

fn cmd_parse(file: &Path) -> Outcome {
    let eq = load(file)?;
    println!("{}", eq.describe());
    println!("order {}, {} kind, {} group", eq.order(), eq.kind().name(), eq.group());
    for (name, value) in eq.params() {
        println!("{name} = {}", format_complex(*value));
    }
    println!("{}", if eq.is_autonomous() { "autonomous" } else { "time-dependent" });
    Ok(())
}

fn cmd_simulate(file: &Path, init: &str, steps: usize, out: &Option<PathBuf>, tol: f64) -> Outcome {
    let eq = load(file)?;
    let init = parse_init(&eq, init)?;
    let orbit = iterate_orbit(&eq, &init, steps).map_err(|e| Failure::Failed(anyhow!(e)))?;
    let sink = Sink::emit(out, &orbit.to_csv())?;
    if let Some(t) = &orbit.truncation {
        return Err(failed(format!("orbit stopped at x({}): {}", t.index, t.reason)));
    }
    let max_period = (orbit.full().len() / 2).min(64);
    match orbit.detect_period(tol, max_period) {
        Some(p) => sink.note(&format!("period {}", p.period)),
        None => sink.note("no period detected"),
    }
    Ok(())
}

fn reduce_for(eq: &DifferenceEquation, constant: &Option<String>, seed: u64) -> Result<formsym::factorize::Reduced, Failure> {
    let constant = constant.as_deref().map(parse_complex).transpose()?;
    let opts = ReduceOptions { constant, seed, ..ReduceOptions::default() };
    reduce(eq, &opts).map_err(|e| Failure::Failed(anyhow!(e)))
}

fn cmd_factor(file: &Path, constant: &Option<String>, out: &Option<PathBuf>, seed: u64) -> Outcome {
    let eq = load(file)?;
    let reduced = reduce_for(&eq, constant, seed)?;
    let mut report = String::new();
    writeln!(report, "equation: {}", eq.describe()).unwrap();
    if let Some(set) = &reduced.constants {
        let how = if set.exact { "exact" } else { "numeric" };
        writeln!(report, "reduction constants ({how}):").unwrap();
        for c in &set.constants {
            writeln!(report, "  c = {} (multiplicity {}, residual {:.2e})", format_complex(c.value), c.multiplicity, c.residual)
                .unwrap();
        }
    }
    report.push_str(&reduced.reduction.describe());
    Sink::emit(out, &report)?;
    Ok(())
}

fn is_real_group(g: GroupTag) -> bool {
    matches!(g, GroupTag::AdditiveReal | GroupTag::MultiplicativePositive)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    file: &Path,
    steps: usize,
    trials: usize,
    seed: u64,
    tol: f64,
    constant: &Option<String>,
    out: &Option<PathBuf>,
) -> Outcome {
    let eq = load(file)?;
    let reduced = reduce_for(&eq, constant, seed)?;
    let red = &reduced.reduction;
    let mut report = String::new();
    let mut ok = true;
    let mut complex_inside = false;

    let mut levels: Vec<_> = red.levels().into_iter().cloned().collect();
    if let Reduction::Triangular(tri) = red {
        let first = factor_separable_additive(&eq, tri.eigenvalues()[0]).map_err(|e| Failure::Failed(anyhow!(e)))?;
        levels.push(first);
    }
    for (i, level) in levels.iter().enumerate() {
        let rep = verify_semiconjugacy(level.source(), level.symmetry(), level.factor(), 200, tol, seed);
        ok &= rep.passed;
        complex_inside |= level.constant().is_some_and(|c| c.im != 0.0);
        writeln!(
            report,
            "semiconjugacy level {}: {} ({} samples, max residual {:.2e})",
            i + 1,
            if rep.passed { "pass" } else { "FAIL" },
            rep.samples_tested,
            rep.max_residual
        )
        .unwrap();
        if let Some(w) = &rep.witness {
            let point: Vec<String> = w.point.iter().map(|v| format_complex(*v)).collect();
            writeln!(report, "  witness n = {} at ({}), residual {:.2e}", w.n, point.join(", "), w.residual).unwrap();
        }
    }
    if let Reduction::Triangular(tri) = red {
        complex_inside |= tri.eigenvalues().iter().any(|c| c.im != 0.0);
    }

    let inits = sample_valid_inits(red, trials, seed);
    if inits.len() < trials {
        ok = false;
        writeln!(report, "only {} of {trials} trial initial values are valid for every level", inits.len()).unwrap();
    }
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for (i, init) in inits.iter().enumerate() {
        let rep = verify_equivalence(&eq, red, init, steps, tol, EquivalenceMode::Anchored)
            .map_err(|e| Failure::Failed(anyhow!(e)))?;
        worst = (worst.0.max(rep.max_deviation), worst.1.max(rep.free_deviation), worst.2.max(rep.max_imag));
        if !rep.passed {
            ok = false;
            let init_text: Vec<String> = init.iter().map(|v| format_complex(*v)).collect();
            match &rep.mismatch {
                Some((index, reason)) => {
                    writeln!(report, "trial {}: paths diverge at x({index}): {reason}", i + 1).unwrap()
                }
                None => writeln!(
                    report,
                    "trial {} (init {}): deviation {:.2e} at x({})",
                    i + 1,
                    init_text.join(","),
                    rep.max_deviation,
                    rep.worst_index
                )
                .unwrap(),
            }
        }
    }
    writeln!(
        report,
        "equivalence over {} trials of {steps} steps: max step deviation {:.2e}, free-running deviation {:.2e}",
        inits.len(),
        worst.0,
        worst.1
    )
    .unwrap();
    if complex_inside && is_real_group(eq.group()) && worst.2 <= 1e-8 {
        writeln!(report, "note: complex intermediates, real orbit (max imaginary part {:.1e})", worst.2).unwrap();
    }
    writeln!(report, "{}", if ok { "PASS" } else { "FAIL" }).unwrap();
    Sink::emit(out, &report)?;
    if ok {
        Ok(())
    } else {
        Err(failed("verification failed"))
    }
}

fn cmd_solve_linear(file: &Path, init: &str, n: usize, tol: f64, out: &Option<PathBuf>) -> Outcome {
    let eq = load(file)?;
    let EquationKind::Linear { b, .. } = eq.kind() else {
        return Err(failed(format!("solve-linear needs a linear equation, {} is {}", file.display(), eq.kind().name())));
    };
    let init = parse_init(&eq, init)?;
    let direct = iterate_orbit(&eq, &init, n).map_err(|e| Failure::Failed(anyhow!(e)))?;
    let direct_value = direct.at(n as i64).ok_or_else(|| failed("direct iteration stopped early"))?;
    let reduced = reduce(&eq, &ReduceOptions::default()).map_err(|e| Failure::Failed(anyhow!(e)))?;
    let sim = formsym::factorize::simulate_factorization(&reduced.reduction, &init, n)
        .map_err(|e| Failure::Failed(anyhow!(e)))?;
    let cascade = sim.orbit.at(n as i64).ok_or_else(|| failed("cascade stopped early"))?;

    let mut report = String::new();
    let mut worst = rel_err(cascade, direct_value);
    if b.len() == 2 {
        let forcing = |j: usize| eq.eval_forcing(j).unwrap_or(C::new(f64::NAN, 0.0));
        let closed = solve_order2_closed_form([b[0], b[1]], forcing, init[0], init[1], n)
            .map_err(|e| Failure::Failed(anyhow!(e)))?;
        worst = worst.max(rel_err(closed, direct_value));
        writeln!(report, "closed form: x({n}) = {}", format_complex(closed)).unwrap();
    }
    writeln!(report, "cascade:     x({n}) = {}", format_complex(cascade)).unwrap();
    writeln!(report, "direct:      x({n}) = {}", format_complex(direct_value)).unwrap();
    writeln!(report, "max relative difference {worst:.2e}").unwrap();
    Sink::emit(out, &report)?;
    if worst.is_nan() || worst > tol {
        return Err(failed(format!("routes disagree by {worst:e}")));
    }
    Ok(())
}

fn split_assignment(text: &str) -> Result<(&str, &str), Failure> {
    text.split_once('=').ok_or_else(|| usage(format!("`{text}` should look like name=value")))
}

fn cmd_bifurcate(
    file: &Path,
    fix: &[String],
    sweep: &str,
    transient: usize,
    keep: usize,
    out: &Option<PathBuf>,
    tol: f64,
) -> Outcome {
    let eq = load(file)?;
    let order = eq.order();
    let coordinate = |name: &str| init_coordinate(name, order).ok_or_else(|| usage(format!("unknown initial coordinate `{name}`")));
    let (swept_name, range) = split_assignment(sweep)?;
    let swept = coordinate(swept_name)?;
    let parts: Vec<&str> = range.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(usage(format!("`{range}` should look like lo:hi:count")));
    };
    let count: usize = count.parse().map_err(|_| usage(format!("`{count}` is not a point count")))?;
    let grid = SweepGrid { lo: parse_real(lo)?, hi: parse_real(hi)?, count };

    let mut base: Vec<Option<C>> = vec![None; order];
    base[swept] = Some(C::new(grid.lo, 0.0));
    for item in fix {
        let (name, value) = split_assignment(item)?;
        let idx = coordinate(name)?;
        if idx == swept {
            return Err(usage(format!("`{name}` is both fixed and swept")));
        }
        base[idx] = Some(C::new(parse_real(value)?, 0.0));
    }
    let missing: Vec<String> = (0..order).filter(|&i| base[i].is_none()).map(|i| coordinate_name(i, order)).collect();
    if !missing.is_empty() {
        return Err(usage(format!("initial coordinates not given: {}", missing.join(", "))));
    }
    let base: Vec<C> = base.into_iter().map(Option::unwrap).collect();
    let data = bifurcation_sweep(&eq, &base, swept, &grid, transient, keep, tol).map_err(|e| usage(e.to_string()))?;
    let sink = Sink::emit(out, &data.to_csv())?;
    for line in data.census().to_string().lines() {
        sink.note(line);
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Parse { file } => cmd_parse(file),
        Command::Simulate { file, init, steps, out, tol } => cmd_simulate(file, init, *steps, out, *tol),
        Command::Factor { file, constant, out, seed } => cmd_factor(file, constant, out, *seed),
        Command::Verify { file, steps, trials, seed, tol, constant, out } => {
            cmd_verify(file, *steps, *trials, *seed, *tol, constant, out)
        }
        Command::SolveLinear { file, init, n, tol, out } => cmd_solve_linear(file, init, *n, *tol, out),
        Command::Bifurcate { file, fix, sweep, transient, keep, out, tol } => {
            cmd_bifurcate(file, fix, sweep, *transient, *keep, out, *tol)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
