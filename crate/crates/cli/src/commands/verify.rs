use driftflow::verify::run_verification_suite;

use super::{CHECK_FAILED, OK};
use crate::cli::VerifyArgs;
use crate::error::CliResult;
use crate::manifest::Recorder;

pub fn run(args: &VerifyArgs) -> CliResult<i32> {
    let report = run_verification_suite(&args.suite, args.seed)?;
    let json = report.to_json()?;
    println!("{json}");
    let passed = report.all_passed();
    for r in report.records.iter().filter(|r| !r.passed()) {
        eprintln!(
            "FAIL {} / {}: measured {} expected {} tolerance {}",
            r.check, r.quantity, r.measured, r.expected, r.tolerance
        );
    }
    if let Some(out) = &args.out {
        let mut rec = Recorder::new(out)?;
        rec.write_text("report.json", &(json + "\n"))?;
        let config = serde_json::json!({ "suite": args.suite, "seed": args.seed });
        rec.finish(&config, Some(args.seed), if passed { "ok" } else { "checks failed" })?;
    }
    Ok(if passed { OK } else { CHECK_FAILED })
}
