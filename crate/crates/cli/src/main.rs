//! Command-line surface: model/certificate file handling, reports, and a
//! stable exit-code contract.
//!
//! Exit codes: 0 success/accepted, 1 certificate rejected or synthesis
//! failed, 2 syntax or usage error, 3 probability-sum violation, 4
//! certificate/model hash mismatch.
//!
//! The environment variable `PPDA_MAX_ITER` sets the default iteration
//! budget for `decide` and for the iterative fallbacks in `bounds` and
//! `certify`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::Zero;

use ppda_core::{
    cert_from_file, cert_to_file, decide_past, format_approx, format_exact, kleene_lower,
    model_hash, parse_cert, parse_ppda, parse_rational, serialize_cert, serialize_ppda, simulate,
    synth_cpast, synth_lower_with, synth_upper, verify_any, AnyCert,
    ApproxConfig, DecideOutcome, Family, Method as CoreMethod, ModelError, PairIndex, PbpaOutcome,
    Ppda, Rational, SynthError, TextError, TriIndex, ValidationMode, Verdict,
};

const EXIT_REJECTED: u8 = 1;
const EXIT_SYNTAX: u8 = 2;
const EXIT_WEIGHT_SUM: u8 = 3;
const EXIT_HASH_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ppda",
    about = "Certified analysis of probabilistic pushdown automata",
    long_about = "Computes certified rational bounds on return probabilities and expected \
                  runtimes of probabilistic pushdown automata, synthesizes and verifies \
                  certificates, and decides termination properties. All verification runs in \
                  exact rational arithmetic.\n\nThe environment variable PPDA_MAX_ITER sets the \
                  default iteration budget for `decide` and iterative fallbacks."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Kleene,
    Newton,
}

impl From<Method> for CoreMethod {
    fn from(m: Method) -> CoreMethod {
        match m {
            Method::Kleene => CoreMethod::Kleene,
            Method::Newton => CoreMethod::Newton,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CertKindArg {
    Upper,
    Lower,
    Past,
    Cpast,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyKind {
    Fig1,
    #[value(name = "delta_a")]
    DeltaA,
    Fig4,
    Fig5,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model file
    Parse {
        file: PathBuf,
        /// Treat transition-less (state, symbol) pairs as deadlocks instead
        /// of probability-sum violations
        #[arg(long, conflicts_with = "strict")]
        lenient: bool,
        /// Require full probability distributions everywhere (the default)
        #[arg(long)]
        strict: bool,
    },
    /// Print certified lower and upper bounds on all return probabilities
    Bounds {
        file: PathBuf,
        /// Target width of the bracket, an exact rational such as 1/1000000
        #[arg(long, default_value = "1/1000000")]
        eps: String,
        /// Float engine seeding the candidates (verification is exact either way)
        #[arg(long, value_enum, default_value_t = Method::Newton)]
        method: Method,
    },
    /// Synthesize a certificate and print or save it
    Certify {
        file: PathBuf,
        #[arg(value_enum)]
        kind: CertKindArg,
        /// Target accuracy for the underlying bounds
        #[arg(long, default_value = "1/1000000")]
        eps: String,
        /// Write the certificate to this path instead of stdout
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Verify a certificate against a model, exactly
    Verify { file: PathBuf, certfile: PathBuf },
    /// Decide whether all runtimes are finite in expectation
    Decide {
        file: PathBuf,
        /// Iteration budget (default: PPDA_MAX_ITER or 200)
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Exact polynomial-time termination-time decision for single-state models
    Pbpa { file: PathBuf },
    /// Generate a built-in example family
    Gen {
        #[arg(value_enum)]
        kind: FamilyKind,
        /// Size parameter for fig4/fig5
        #[arg(long)]
        n: Option<u32>,
        /// Pop probability for delta_a, an exact rational in (0, 1)
        #[arg(long)]
        a: Option<String>,
        /// Write the model to this path instead of stdout
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimation of return probabilities and runtimes
    Simulate {
        file: PathBuf,
        /// Start configuration: a state and a stack symbol
        #[arg(long, num_args = 2, value_names = ["STATE", "SYMBOL"])]
        start: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        /// Per-run step cap
        #[arg(long, default_value_t = 10_000)]
        cap: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure {
        code,
        msg: msg.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn model_error_code(e: &ModelError) -> u8 {
    match e {
        ModelError::WeightSum { .. } | ModelError::NonPositiveWeight { .. } => EXIT_WEIGHT_SUM,
        _ => EXIT_SYNTAX,
    }
}

fn read_file(path: &PathBuf) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| fail(EXIT_SYNTAX, format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &PathBuf, mode: ValidationMode) -> CliResult<(Ppda, Vec<PairIndex>)> {
    let text = read_file(path)?;
    match parse_ppda(&text, mode) {
        Ok(parsed) => Ok((parsed.ppda, parsed.deadlocked)),
        Err(TextError::Syntax { line, msg }) => Err(fail(
            EXIT_SYNTAX,
            format!("{}:{line}: {msg}", path.display()),
        )),
        Err(TextError::Model(e)) => Err(fail(
            model_error_code(&e),
            format!("{}: {e}", path.display()),
        )),
    }
}

fn parse_eps(s: &str) -> CliResult<Rational> {
    let eps = parse_rational(s)
        .map_err(|e| fail(EXIT_SYNTAX, format!("invalid --eps value: {e}")))?;
    if eps <= Rational::zero() {
        return Err(fail(EXIT_SYNTAX, "--eps must be positive"));
    }
    Ok(eps)
}

fn env_max_iter(default: usize) -> usize {
    std::env::var("PPDA_MAX_ITER")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

/// `num/den (approx 0.123456789012)` — the decimal rendering is display-only.
fn show(r: &Rational) -> String {
    format!("{} (approx {})", format_exact(r), format_approx(r))
}

fn first_violation(verdict: &Verdict) -> String {
    let v = &verdict.violations[0];
    format!(
        "violated: {} at {}: lhs = {}, rhs = {}",
        v.constraint,
        v.index,
        format_exact(&v.lhs),
        format_exact(&v.rhs)
    )
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| fail(EXIT_SYNTAX, format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_parse(file: PathBuf, lenient: bool) -> CliResult<()> {
    let mode = if lenient {
        ValidationMode::Lenient
    } else {
        ValidationMode::Strict
    };
    let (ppda, deadlocked) = load_model(&file, mode)?;
    println!(
        "ok: {} states, {} stack symbols, {} transitions",
        ppda.states.len(),
        ppda.alphabet.len(),
        ppda.transitions.len()
    );
    println!("model hash: {}", model_hash(&ppda));
    for pair in deadlocked {
        println!("warning: deadlocked pair {pair} (no transitions)");
    }
    Ok(())
}

fn cmd_bounds(file: PathBuf, eps: String, method: Method) -> CliResult<()> {
    let eps = parse_eps(&eps)?;
    // lenient: deadlocked pairs simply never terminate, which the analysis
    // handles exactly
    let (ppda, _) = load_model(&file, ValidationMode::Lenient)?;
    let f = ppda.fundamental_system();
    let red = f.reduce();
    let cleaned: Vec<TriIndex> = f
        .index_set()
        .iter()
        .filter(|k| !red.zero_set.contains(k))
        .cloned()
        .collect();
    match synth_lower_with(&ppda, &eps, method.into()) {
        Ok(cert) => {
            let verdict = ppda_core::verify_lower(&ppda, &cert)
                .map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
            assert!(verdict.is_accepted(), "synthesized bounds failed re-verification");
            println!("certified bounds, gap <= {}:", format_exact(&eps));
            for k in &cleaned {
                println!("{k}  lower {}  upper {}", show(&cert.l[k]), show(&cert.u[k]));
            }
            for k in f.index_set() {
                if red.zero_set.contains(k) {
                    println!("{k}  = 0 exactly (unreachable termination)");
                }
            }
            Ok(())
        }
        Err(SynthError::Exhausted(msg)) => {
            // singular at the fixed point: no strict inductive upper bound
            // exists, so report verified lower bounds against the trivial
            // upper bound 1
            println!("strict upper-bound synthesis unavailable: {msg}");
            println!("reporting verified lower bounds; probabilities are trivially <= 1");
            let cfg = ApproxConfig {
                method: CoreMethod::Kleene,
                epsilon: &eps * &eps / Rational::from_integer(8.into()),
                max_iterations: env_max_iter(50_000),
                round_bits: 96,
            };
            let l_res = kleene_lower(&red.residual, &cfg);
            for k in &cleaned {
                let value = red
                    .constants
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| l_res[k].clone());
                println!("{k}  lower {}  upper 1/1 (trivial)", show(&value));
            }
            for k in f.index_set() {
                if red.zero_set.contains(k) {
                    println!("{k}  = 0 exactly (unreachable termination)");
                }
            }
            Ok(())
        }
        Err(e) => Err(fail(EXIT_REJECTED, format!("bound synthesis failed: {e}"))),
    }
}

fn cmd_certify(
    file: PathBuf,
    kind: CertKindArg,
    eps: String,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let eps = parse_eps(&eps)?;
    let (ppda, _) = load_model(&file, ValidationMode::Lenient)?;
    let cert: AnyCert = match kind {
        CertKindArg::Upper => {
            // prefer a strict bound (reusable for lower certificates), fall
            // back to a plain inductive one
            match synth_upper(&ppda, &eps, true) {
                Ok(c) => AnyCert::Upper(c),
                Err(SynthError::Exhausted(_)) => AnyCert::Upper(
                    synth_upper(&ppda, &eps, false)
                        .map_err(|e| fail(EXIT_REJECTED, format!("synthesis failed: {e}")))?,
                ),
                Err(e) => return Err(fail(EXIT_REJECTED, format!("synthesis failed: {e}"))),
            }
        }
        CertKindArg::Lower => AnyCert::Lower(
            synth_lower_with(&ppda, &eps, CoreMethod::Newton)
                .map_err(|e| fail(EXIT_REJECTED, format!("synthesis failed: {e}")))?,
        ),
        CertKindArg::Past => match decide_past(&ppda, env_max_iter(200)) {
            DecideOutcome::Past(c) => AnyCert::Past(c),
            DecideOutcome::NonAst { pair, .. } => {
                return Err(fail(
                    EXIT_REJECTED,
                    format!("not certifiable: configuration {pair} terminates with probability below 1"),
                ))
            }
            DecideOutcome::Unknown => {
                return Err(fail(
                    EXIT_REJECTED,
                    "no finite-runtime certificate found within the iteration budget",
                ))
            }
        },
        CertKindArg::Cpast => AnyCert::Cpast(
            synth_cpast(&ppda, &eps)
                .map_err(|e| fail(EXIT_REJECTED, format!("synthesis failed: {e}")))?,
        ),
    };
    let verdict = verify_any(&ppda, &cert).map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
    assert!(verdict.is_accepted(), "synthesized certificate failed re-verification");
    let text = serialize_cert(&cert_to_file(&ppda, &cert));
    write_or_print(&out, &text)?;
    eprintln!("certificate synthesized and re-verified");
    Ok(())
}

fn cmd_verify(file: PathBuf, certfile: PathBuf) -> CliResult<()> {
    let (ppda, _) = load_model(&file, ValidationMode::Lenient)?;
    let cert_text = read_file(&certfile)?;
    let cert_file = match parse_cert(&cert_text) {
        Ok(c) => c,
        Err(TextError::Syntax { line, msg }) => {
            return Err(fail(
                EXIT_SYNTAX,
                format!("{}:{line}: {msg}", certfile.display()),
            ))
        }
        Err(TextError::Model(e)) => {
            return Err(fail(EXIT_SYNTAX, format!("{}: {e}", certfile.display())))
        }
    };
    let hash = model_hash(&ppda);
    if cert_file.model_hash != hash {
        return Err(fail(
            EXIT_HASH_MISMATCH,
            format!(
                "model hash mismatch: certificate is for {}, model is {hash}",
                cert_file.model_hash
            ),
        ));
    }
    let cert = cert_from_file(&ppda, &cert_file)
        .map_err(|e| fail(EXIT_SYNTAX, format!("{}: {e}", certfile.display())))?;
    let verdict = verify_any(&ppda, &cert).map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
    if verdict.is_accepted() {
        println!("accepted: {} certificate", cert.kind().as_str());
        Ok(())
    } else {
        println!("rejected: {} certificate", cert.kind().as_str());
        println!("{}", first_violation(&verdict));
        Err(fail(EXIT_REJECTED, String::new()))
    }
}

fn cmd_decide(file: PathBuf, max_iter: Option<usize>) -> CliResult<()> {
    let (ppda, _) = load_model(&file, ValidationMode::Lenient)?;
    let budget = max_iter.unwrap_or_else(|| env_max_iter(200));
    match decide_past(&ppda, budget) {
        DecideOutcome::Past(cert) => {
            println!("PAST: every expected runtime is finite");
            for (pair, r) in &cert.r {
                println!("ert{pair} <= {}", show(r));
            }
            print!("{}", serialize_cert(&cert_to_file(&ppda, &AnyCert::Past(cert))));
        }
        DecideOutcome::NonAst { witness, pair } => {
            let total: Rational = ppda
                .states
                .iter()
                .map(|q| witness.u[&TriIndex::new(&pair.p, &pair.z, q)].clone())
                .sum();
            println!("non-AST: configuration {pair} terminates with probability <= {}", show(&total));
            print!(
                "{}",
                serialize_cert(&cert_to_file(&ppda, &AnyCert::Upper(witness)))
            );
        }
        DecideOutcome::Unknown => {
            println!("unknown: budget of {budget} rounds exhausted without a verdict");
        }
    }
    Ok(())
}

fn cmd_pbpa(file: PathBuf) -> CliResult<()> {
    let (ppda, _) = load_model(&file, ValidationMode::Lenient)?;
    match ppda.pbpa_past_decide() {
        Ok(PbpaOutcome::Past(r)) => {
            println!("PAST: exact expected runtimes");
            for (sym, value) in &r {
                println!("ert[{} {sym}] = {}", ppda.states[0], show(value));
            }
            Ok(())
        }
        Ok(PbpaOutcome::NotPast) => {
            println!("not PAST: expected runtime is infinite");
            Ok(())
        }
        Err(e) => Err(fail(EXIT_SYNTAX, e.to_string())),
    }
}

fn cmd_gen(
    kind: FamilyKind,
    n: Option<u32>,
    a: Option<String>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let family = match kind {
        FamilyKind::Fig1 => Family::Fig1,
        FamilyKind::DeltaA => {
            let a = a.ok_or_else(|| fail(EXIT_SYNTAX, "delta_a requires --a"))?;
            let a = parse_rational(&a)
                .map_err(|e| fail(EXIT_SYNTAX, format!("invalid --a value: {e}")))?;
            Family::DeltaA(a)
        }
        FamilyKind::Fig4 => Family::Fig4(n.ok_or_else(|| fail(EXIT_SYNTAX, "fig4 requires --n"))?),
        FamilyKind::Fig5 => Family::Fig5(n.ok_or_else(|| fail(EXIT_SYNTAX, "fig5 requires --n"))?),
    };
    let ppda = ppda_core::gen_family(&family).map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
    write_or_print(&out, &serialize_ppda(&ppda))
}

fn cmd_simulate(
    file: PathBuf,
    start: Vec<String>,
    runs: u64,
    cap: usize,
    seed: u64,
) -> CliResult<()> {
    let (ppda, _) = load_model(&file, ValidationMode::Lenient)?;
    if start.len() != 2 {
        return Err(fail(EXIT_SYNTAX, "--start takes a state and a stack symbol"));
    }
    if runs == 0 {
        return Err(fail(EXIT_SYNTAX, "--runs must be at least 1"));
    }
    let pair = PairIndex::new(&start[0], &start[1]);
    let stats =
        simulate(&ppda, &pair, runs, cap, seed).map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
    println!("seed {seed}, runs {runs}, step cap {cap}");
    println!(
        "terminated {} , cap exceeded {}, deadlocked {}",
        stats.terminated(),
        stats.cap_exceeded,
        stats.deadlocked
    );
    for q in &ppda.states {
        let hits = stats.hits[q];
        println!(
            "P[{pair} -> {q}] ~ {:.6} +- {:.6} ({hits} hits)",
            stats.prob_estimate(q),
            stats.prob_stderr(q)
        );
    }
    println!(
        "mean steps ~ {:.6} +- {:.6} (lower bound; capped runs counted at the cap)",
        stats.mean_len(),
        stats.len_stderr()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Parse { file, lenient, .. } => cmd_parse(file, lenient),
        Command::Bounds { file, eps, method } => cmd_bounds(file, eps, method),
        Command::Certify {
            file,
            kind,
            eps,
            out,
        } => cmd_certify(file, kind, eps, out),
        Command::Verify { file, certfile } => cmd_verify(file, certfile),
        Command::Decide { file, max_iter } => cmd_decide(file, max_iter),
        Command::Pbpa { file } => cmd_pbpa(file),
        Command::Gen { kind, n, a, out } => cmd_gen(kind, n, a, out),
        Command::Simulate {
            file,
            start,
            runs,
            cap,
            seed,
        } => cmd_simulate(file, start, runs, cap, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, msg }) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(code)
        }
    }
}
