use std::process::ExitCode;

use clap::Args;
use monattn::gradcheck::{run_suite, SuiteConfig, SUITE_OPS};

use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct CheckgradArgs {
    #[command(flatten)]
    common: Common,
    /// Restrict to one op.
    #[arg(long)]
    op: Option<String>,
    /// Central-difference step.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    instances: Option<usize>,
}

pub fn run(a: CheckgradArgs) -> Result<ExitCode, CliError> {
    let mut r = a.common.resolver()?;
    let d = SuiteConfig::default();
    let cfg = SuiteConfig {
        seed: r.value("seed", a.common.seed, d.seed)?,
        h: r.value("h", a.h, d.h)?,
        instances: r.value("instances", a.instances, d.instances)?,
        ..d
    };
    let op = r.optional("op", a.op)?;
    r.finish()?;
    if let Some(op) = &op {
        if !SUITE_OPS.contains(&op.as_str()) {
            return Err(CliError::Usage(format!("unknown op `{op}` (known: {})", SUITE_OPS.join(", "))));
        }
    }
    if !(cfg.h > 0.0) || cfg.instances == 0 {
        return Err(CliError::Usage("--h and --instances must be positive".into()));
    }

    let ops: Vec<&str> = match &op {
        Some(op) => vec![op.as_str()],
        None => SUITE_OPS.to_vec(),
    };
    let reports = run_suite(Some(&ops), &cfg)?;
    println!("{:<22} {:>10} {:>12} {:>12}  result", "op", "instances", "worst_rel", "worst_abs");
    for rep in &reports {
        let worst_abs = rep.params.iter().map(|p| p.max_abs).fold(0.0, f64::max);
        println!(
            "{:<22} {:>10} {:>12.3e} {:>12.3e}  {}",
            rep.op,
            rep.instances,
            rep.worst_rel(),
            worst_abs,
            if rep.passed { "pass" } else { "FAIL" }
        );
        for p in rep.params.iter().filter(|p| !p.passed) {
            println!("    {}: rel {:.3e} abs {:.3e}", p.name, p.max_rel, p.max_abs);
        }
    }
    let all = reports.iter().all(|r| r.passed);
    println!(
        "{} ({} of {} ops passed, rel tol {:e})",
        if all { "PASS" } else { "FAIL" },
        reports.iter().filter(|r| r.passed).count(),
        reports.len(),
        cfg.rel_tol
    );
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
