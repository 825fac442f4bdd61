//! Audits every differentiable operation against central finite
//! differences: the layers (linear, conv1d, batchnorm, activations), the
//! binary-embedding composition, both loss terms, and the full two-view
//! objective. Each audit repeats over twenty seeds and reports the worst
//! relative error.

use crossview::checks::{gradient_suite, GRAD_TOLERANCE, SEEDS_PER_CHECK};

fn main() -> crossview::Result<()> {
    println!("central-difference audit, {SEEDS_PER_CHECK} seeds per operation, tolerance {GRAD_TOLERANCE:.0e}\n");
    let mut failures = 0;
    for report in gradient_suite()? {
        let verdict = if report.pass { "ok " } else { "FAIL" };
        println!("{verdict}  {:<28} worst relative error {:>10.3e}", report.name, report.worst);
        if !report.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        println!("\n{failures} audit(s) failed");
        std::process::exit(1);
    }
    println!("\nall gradients match their finite-difference estimates");
    Ok(())
}
