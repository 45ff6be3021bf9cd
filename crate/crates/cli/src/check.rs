use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use vma3c::gradcheck::{check_gradients, GradCheckConfig};
use vma3c::suites::{advantage_suite, env_suite, premise_suite, SuiteReport};

use crate::manifest::RunManifest;
use crate::{CliError, CliResult, Suite};

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Randomized cases; for `grad` this is the number of seeded problems.
    /// Defaults to 1000 (3 for `grad`).
    #[arg(long)]
    pub cases: Option<usize>,
    /// Directory for `report.json` and a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn grad_suite(seed: u64, cases: usize) -> CliResult<SuiteReport> {
    let mut report = SuiteReport {
        name: "grad",
        cases,
        failures: 0,
        summary: String::new(),
        counterexamples: Vec::new(),
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..cases {
        let cfg = GradCheckConfig {
            seed: seed.wrapping_add(k as u64),
            ..Default::default()
        };
        let r = check_gradients(&cfg)?;
        worst = worst.max(r.max_rel_err());
        checked += r.checked();
        if !r.passed() {
            report.failures += 1;
            if report.counterexamples.len() < 10 {
                report.counterexamples.push(serde_json::to_value(&r)?);
            }
        }
    }
    report.summary = format!("max relative error {worst:.3e} over {checked} partial derivatives");
    Ok(report)
}

pub fn run(args: CheckArgs) -> CliResult {
    let manifest = RunManifest::begin("check", None, Some(args.seed));
    let report = match args.suite {
        Suite::Premises => premise_suite(args.seed, args.cases.unwrap_or(1000))?,
        Suite::Advantage => advantage_suite(args.seed, args.cases.unwrap_or(1000))?,
        Suite::Grad => grad_suite(args.seed, args.cases.unwrap_or(3))?,
        Suite::Env => env_suite()?,
    };
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "{verdict} {}: {} ({} cases, {} failures)",
        report.name, report.summary, report.cases, report.failures
    );
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
        let m = if report.passed() {
            manifest
        } else {
            manifest.failed("suite failed")
        };
        m.finish(out, vec!["report.json".into()])?;
    }
    if report.passed() {
        Ok(())
    } else {
        let dump = json!({ "suite": report.name, "counterexamples": report.counterexamples });
        println!("{}", serde_json::to_string_pretty(&dump)?);
        Err(CliError::new(1, format!("{} suite failed", report.name)))
    }
}
