use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use opspectra::canonical::{
    canonicalize_at, decide_equivalent_at, CanonicalForm, Certificate, EviSequence, FormField,
    Side, Verdict,
};
use opspectra::measure::SpectralMeasure;
use opspectra::operator::{
    attains_norm, check_subspace, measure_from_dense, norm_attainment_subspace,
    perturbed_maximal_subspace, singular_spectrum, spectral_subspace, verify_projection_iso,
    DenseOperator, OperatorError, SpectralInterval, SpectrumResult, DEFAULT_MAX_SWEEPS,
    DEFAULT_SVD_TOL,
};
use opspectra::shift::{ShiftError, ShiftWitness};

#[derive(Parser)]
#[command(
    name = "opspectra",
    version,
    about = "Extract dimension spectral measures from matrices and decide operator equivalence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Ratio between consecutive grid points b * beta^k.
    #[arg(long, global = true, default_value_t = 2.0)]
    beta: f64,

    /// Grid anchor: bucket k covers ]b * beta^(k-1), b * beta^k].
    #[arg(long, global = true, default_value_t = 1.0)]
    b: f64,

    /// Relative gap under which singular values merge into one atom.
    #[arg(long = "cluster-tol", global = true, default_value_t = 1e-8)]
    cluster_tol: f64,

    /// Relative threshold under which singular values count as kernel.
    #[arg(long = "rank-tol", global = true, default_value_t = 1e-10)]
    rank_tol: f64,

    /// Seed for all randomized verification.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Number of randomized trials per verification check.
    #[arg(long, global = true, default_value_t = 100)]
    trials: u64,

    /// Emit compact JSON instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the dimension spectral measure of a dense matrix.
    FromMatrix { matrix: PathBuf },
    /// Reduce a measure to its grid-aligned canonical form.
    Normalize { measure: PathBuf },
    /// Decide whether two measures describe topologically equivalent operators.
    Compare { first: PathBuf, second: PathBuf },
    /// Run seeded randomized checks of the subspace geometry of a matrix.
    Verify { matrix: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    validate_config(cli)?;
    match &cli.command {
        Command::FromMatrix { matrix } => cmd_from_matrix(cli, matrix),
        Command::Normalize { measure } => cmd_normalize(cli, measure),
        Command::Compare { first, second } => cmd_compare(cli, first, second),
        Command::Verify { matrix } => cmd_verify(cli, matrix),
    }
}

fn validate_config(cli: &Cli) -> Result<(), Failure> {
    if !(cli.beta > 1.0) {
        return Err(Failure::new(2, "beta must be greater than 1"));
    }
    if !(cli.b > 0.0) {
        return Err(Failure::new(2, "b must be positive"));
    }
    if !(cli.cluster_tol > 0.0) {
        return Err(Failure::new(2, "cluster tolerance must be positive"));
    }
    if !(cli.rank_tol > 0.0) {
        return Err(Failure::new(2, "rank tolerance must be positive"));
    }
    if cli.trials == 0 {
        return Err(Failure::new(2, "trials must be at least 1"));
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn parse_matrix(text: &str) -> Result<DenseOperator, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::new(2, format!("invalid matrix JSON: {e}")))
}

fn parse_measure(text: &str) -> Result<SpectralMeasure, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::new(2, format!("invalid measure JSON: {e}")))
}

fn operator_failure(e: OperatorError) -> Failure {
    match e {
        OperatorError::NoConvergence { .. } => Failure::new(3, e.to_string()),
        other => Failure::new(2, other.to_string()),
    }
}

fn shift_failure(e: ShiftError) -> Failure {
    Failure::new(2, e.to_string())
}

fn emit<T: Serialize>(cli: &Cli, value: &T) {
    let text = if cli.json {
        serde_json::to_string(value)
    } else {
        serde_json::to_string_pretty(value)
    };
    println!("{}", text.expect("output types serialize"));
}

fn cmd_from_matrix(cli: &Cli, path: &Path) -> Result<u8, Failure> {
    let t = parse_matrix(&read_file(path)?)?;
    let m = measure_from_dense(&t, cli.cluster_tol, cli.rank_tol).map_err(operator_failure)?;
    emit(cli, &m);
    Ok(0)
}

#[derive(Serialize)]
struct NormalizeOutput {
    evi: EviSequence,
    form: CanonicalForm,
    witness: ShiftWitness,
}

fn cmd_normalize(cli: &Cli, path: &Path) -> Result<u8, Failure> {
    let m = parse_measure(&read_file(path)?)?;
    let (evi, form, witness) = canonicalize_at(&m, cli.beta, cli.b).map_err(shift_failure)?;
    emit(
        cli,
        &NormalizeOutput {
            evi,
            form,
            witness,
        },
    );
    Ok(0)
}

fn cmd_compare(cli: &Cli, first: &Path, second: &Path) -> Result<u8, Failure> {
    let m1 = parse_measure(&read_file(first)?)?;
    let m2 = parse_measure(&read_file(second)?)?;
    let verdict = decide_equivalent_at(&m1, &m2, cli.beta, cli.b).map_err(shift_failure)?;
    if cli.json {
        emit(cli, &verdict);
    } else {
        println!("{}", describe_verdict(&verdict));
    }
    Ok(if verdict.is_equivalent() { 0 } else { 1 })
}

fn field_label(field: FormField) -> &'static str {
    match field {
        FormField::Kernel => "kernel",
        FormField::Total => "total dimension",
        FormField::Image => "image dimension",
        FormField::Tail => "tail class",
        FormField::Family => "family cardinal",
        FormField::Heavy => "heavy point",
    }
}

fn describe_verdict(verdict: &Verdict) -> String {
    match verdict {
        Verdict::Equivalent { witness_k, steps } => {
            format!("equivalent (witness K = {witness_k}, {} moves)", steps.len())
        }
        Verdict::NotEquivalent { certificate } => match certificate {
            Certificate::InvariantMismatch { field, left, right } => format!(
                "not equivalent: {} mismatch ({left} vs {right})",
                field_label(*field)
            ),
            Certificate::IntervalFamily {
                field,
                denser,
                lo0,
                hi0,
                lo_ratio,
                hi_ratio,
            } => {
                let side = match denser {
                    Side::First => "first",
                    Side::Second => "second",
                };
                format!(
                    "not equivalent: {} windows ]{lo0} * {lo_ratio}^n, {hi0} * {hi_ratio}^n] \
                     put unboundedly more weight on the {side} measure",
                    field_label(*field)
                )
            }
        },
    }
}

#[derive(Serialize)]
struct CheckReport {
    name: &'static str,
    pass: u64,
    fail: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_shortfall: Option<f64>,
}

impl CheckReport {
    fn counts(name: &'static str) -> Self {
        CheckReport {
            name,
            pass: 0,
            fail: 0,
            worst_margin: None,
            worst_condition: None,
            worst_shortfall: None,
        }
    }

    fn record(&mut self, pass: bool) {
        if pass {
            self.pass += 1;
        } else {
            self.fail += 1;
        }
    }
}

#[derive(Serialize)]
struct VerifyReport {
    trials: u64,
    seed: u64,
    checks: Vec<CheckReport>,
    pass: bool,
}

fn keep_min(slot: &mut Option<f64>, value: f64) {
    if value.is_finite() && slot.is_none_or(|cur| value < cur) {
        *slot = Some(value);
    }
}

fn keep_max(slot: &mut Option<f64>, value: f64) {
    if value.is_finite() && slot.is_none_or(|cur| value > cur) {
        *slot = Some(value);
    }
}

fn distinct_snapped(s: &SpectrumResult, cluster_tol: f64, rank_tol: f64) -> Vec<f64> {
    let top = s.norm();
    let threshold = if top > 0.0 { rank_tol * top } else { rank_tol };
    let mut distinct: Vec<f64> = Vec::new();
    for &raw in s.values().iter().rev() {
        let v = if raw <= threshold { 0.0 } else { raw };
        match distinct.last() {
            Some(&last) if v - last <= cluster_tol * v => {}
            _ => distinct.push(v),
        }
    }
    distinct
}

fn cmd_verify(cli: &Cli, path: &Path) -> Result<u8, Failure> {
    let t = parse_matrix(&read_file(path)?)?;
    let s = singular_spectrum(&t, DEFAULT_MAX_SWEEPS, DEFAULT_SVD_TOL).map_err(operator_failure)?;
    let distinct = distinct_snapped(&s, cli.cluster_tol, cli.rank_tol);
    let top = s.norm();

    let mut membership = CheckReport::counts("subspace_membership");
    let mut projection = CheckReport::counts("perturbed_projection");
    let mut quotient = CheckReport::counts("quotient_dimension");
    let mut attainment = CheckReport::counts("norm_attainment");

    for trial in 0..cli.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
        rng.set_stream(trial);

        let gap = if distinct.len() >= 2 {
            let g = rng.random_range(0..distinct.len() - 1);
            Some((distinct[g], distinct[g + 1]))
        } else {
            None
        };
        let mu = match gap {
            Some((lo, hi)) => lo + rng.random_range(0.2..0.8) * (hi - lo),
            None if distinct[0] > 0.0 => distinct[0] * rng.random_range(0.3..0.7),
            None => rng.random_range(0.5..1.5),
        };

        let low = spectral_subspace(&s, SpectralInterval::UpTo(mu), 0.0);
        let high = spectral_subspace(&s, SpectralInterval::Above(mu), 0.0);
        let below = check_subspace(&t, &low, SpectralInterval::UpTo(mu), 1e-9)
            .map_err(operator_failure)?;
        let above = check_subspace(&t, &high, SpectralInterval::Above(mu), 1e-9)
            .map_err(operator_failure)?;
        membership.record(below.pass && above.pass);
        if !(below.pass && above.pass) {
            eprintln!("trial {trial}: spectral subspace left its interval at mu = {mu}");
        }
        keep_min(&mut membership.worst_margin, below.margin.min(above.margin));

        if let Some((lo, _)) = gap.filter(|_| low.dim() > 0 && high.dim() > 0) {
            let admissible = ((mu * mu - lo * lo) / (top * top - mu * mu)).sqrt();
            let scale = (0.5 * admissible).min(0.5);
            let sub_seed = rng.random::<u64>();
            match perturbed_maximal_subspace(&t, mu, scale, sub_seed) {
                Ok(y) => {
                    let report = verify_projection_iso(&s, &y, mu, cli.rank_tol)
                        .map_err(operator_failure)?;
                    projection.record(report.injective && report.onto);
                    if !(report.injective && report.onto) {
                        eprintln!("trial {trial}: perturbed graph projection is not an isomorphism");
                    }
                    keep_max(&mut projection.worst_condition, report.condition);
                }
                Err(OperatorError::NoConvergence { residual }) => {
                    return Err(operator_failure(OperatorError::NoConvergence { residual }));
                }
                Err(e) => {
                    projection.record(false);
                    eprintln!("trial {trial}: {e}");
                }
            }
        }

        let second = match gap {
            Some(_) => {
                let g = rng.random_range(0..distinct.len() - 1);
                distinct[g] + rng.random_range(0.2..0.8) * (distinct[g + 1] - distinct[g])
            }
            None => mu,
        };
        let (win_lo, win_hi) = if second < mu {
            (second, mu)
        } else if second > mu {
            (mu, second)
        } else {
            (mu * 0.5, mu)
        };
        match opspectra::operator::quotient_dim_check(&t, win_lo, win_hi, cli.cluster_tol, cli.rank_tol)
        {
            Ok(ok) => {
                quotient.record(ok);
                if !ok {
                    eprintln!("trial {trial}: dimension jump disagrees on ]{win_lo}, {win_hi}]");
                }
            }
            Err(e) => return Err(operator_failure(e)),
        }

        if top > 0.0 {
            let attain = norm_attainment_subspace(&s, 1e-9).map_err(operator_failure)?;
            let mut x = vec![0.0; t.cols()];
            for basis in attain.basis() {
                let c: f64 = rng.random_range(-1.0..1.0);
                for (xi, bi) in x.iter_mut().zip(basis) {
                    *xi += c * bi;
                }
            }
            let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len < 1e-9 {
                x = attain.basis()[0].clone();
            } else {
                for v in x.iter_mut() {
                    *v /= len;
                }
            }
            let report = attains_norm(&t, &s, &x, 1e-9);
            attainment.record(report.attains);
            if !report.attains {
                eprintln!(
                    "trial {trial}: top-subspace vector fell short of the norm by {}",
                    report.shortfall
                );
            }
            keep_max(&mut attainment.worst_shortfall, report.shortfall / top);
        } else {
            attainment.record(true);
        }
    }

    let checks = vec![membership, projection, quotient, attainment];
    let pass = checks.iter().all(|c| c.fail == 0);
    let report = VerifyReport {
        trials: cli.trials,
        seed: cli.seed,
        checks,
        pass,
    };
    if cli.json {
        emit(cli, &report);
    } else {
        println!("trials: {} (seed {})", report.trials, report.seed);
        for check in &report.checks {
            let mut line = format!("{}: {} pass, {} fail", check.name, check.pass, check.fail);
            if let Some(m) = check.worst_margin {
                line.push_str(&format!(", worst margin {m:.3e}"));
            }
            if let Some(c) = check.worst_condition {
                line.push_str(&format!(", worst condition {c:.6}"));
            }
            if let Some(s) = check.worst_shortfall {
                line.push_str(&format!(", worst relative shortfall {s:.3e}"));
            }
            println!("{line}");
        }
        println!("result: {}", if report.pass { "pass" } else { "fail" });
    }
    Ok(if report.pass { 0 } else { 1 })
}
