use std::process::ExitCode;

use clap::{Args, ValueEnum};
use monattn::attn::{monotonic_alpha_recurrence, monotonic_alpha_scan, AttentionWeights, MonotonicConfig};
use monattn::numkit::SeededRng;
use monattn::oracle::{
    enumerate_alpha_exact, monte_carlo_alpha, SelectionProbMatrix, Semantics, MAX_EXACT_T, MAX_EXACT_U,
};

use crate::{resolve_enum, CliError, Common};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SemanticsArg {
    Absorbing,
    Rescanning,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Memory length.
    #[arg(long)]
    t: Option<usize>,
    /// Output length.
    #[arg(long)]
    u: Option<usize>,
    /// Pass iff both max differences are strictly below this.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    instances: Option<usize>,
    /// Fall-off semantics for the Monte-Carlo run of --report-gap.
    #[arg(long, value_enum)]
    semantics: Option<SemanticsArg>,
    /// Also compare sampled hard-process marginals against the exact ones.
    #[arg(long)]
    report_gap: bool,
    /// Monte-Carlo samples per instance.
    #[arg(long)]
    samples: Option<u64>,
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn run(a: SimulateArgs) -> Result<ExitCode, CliError> {
    let mut r = a.common.resolver()?;
    let seed = r.value("seed", a.common.seed, 0)?;
    let t = r.value("t", a.t, 6)?;
    let u = r.value("u", a.u, 4)?;
    let tol = r.value("tol", a.tol, 1e-9)?;
    let instances = r.value("instances", a.instances, 20)?;
    let semantics = resolve_enum(&mut r, "semantics", a.semantics, "absorbing")?;
    let report_gap = r.switch("report_gap", a.report_gap)?;
    let samples = r.value("samples", a.samples, 100_000)?;
    r.finish()?;
    if t == 0 || u == 0 || t > MAX_EXACT_T || u > MAX_EXACT_U {
        return Err(CliError::Usage(format!(
            "exact enumeration needs 1 <= T <= {MAX_EXACT_T} and 1 <= U <= {MAX_EXACT_U}, got T={t} U={u}"
        )));
    }
    if instances == 0 || samples == 0 {
        return Err(CliError::Usage("--instances and --samples must be positive".into()));
    }
    let semantics = match semantics {
        SemanticsArg::Absorbing => Semantics::Absorbing,
        SemanticsArg::Rescanning => Semantics::Rescanning,
    };

    let cfg = MonotonicConfig::default();
    let mut rng = SeededRng::new(seed, 0);
    let mut mc_rng = SeededRng::new(seed, 1);
    let (mut rec_err, mut scan_err, mut gap, mut gap_sigmas) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..instances {
        let p = SelectionProbMatrix::random(u, t, 0.05, 0.95, &mut rng)?;
        let exact = enumerate_alpha_exact(&p)?;
        let (mut rec_prev, mut scan_prev) = (AttentionWeights::initial(t), AttentionWeights::initial(t));
        let (mut rec, mut scan) = (Vec::new(), Vec::new());
        for row in p.rows() {
            rec_prev = monotonic_alpha_recurrence(row, &rec_prev)?;
            scan_prev = monotonic_alpha_scan(row, &scan_prev, &cfg)?;
            rec.push(rec_prev.alpha.clone());
            scan.push(scan_prev.alpha.clone());
        }
        rec_err = rec_err.max(max_diff(&rec, &exact.alpha));
        scan_err = scan_err.max(max_diff(&scan, &exact.alpha));
        if report_gap {
            let mc = monte_carlo_alpha(&p, samples, &mut mc_rng, semantics)?;
            gap = gap.max(max_diff(&mc.alpha, &exact.alpha));
            for (i, row) in mc.alpha.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let se = mc.stderr[i][j].max(1.0 / samples as f64);
                    gap_sigmas = gap_sigmas.max((v - exact.alpha[i][j]).abs() / se);
                }
            }
        }
    }

    println!("instances {instances} T {t} U {u}");
    println!("max |recurrence - exact| = {rec_err:e}");
    println!("max |scan - exact| = {scan_err:e}");
    if report_gap {
        let name = match semantics {
            Semantics::Absorbing => "absorbing",
            Semantics::Rescanning => "rescanning",
        };
        println!("max |monte_carlo({name}, n={samples}) - exact(absorbing)| = {gap:e} ({gap_sigmas:.2} stderr)");
    }
    let pass = rec_err < tol && scan_err < tol;
    println!("{} at tol {tol:e}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
