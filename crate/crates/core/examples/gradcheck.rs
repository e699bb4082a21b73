// Checks the fused kernel's gradients against the closed-form expressions,
// central finite differences and the shipped reference vectors.
//
// cargo run --release --example gradcheck

use ornn::gradcheck::{run_gradcheck, GradcheckConfig, GradcheckReport, SHIPPED_VECTORS};
use ornn::io::parse_fpbp_vectors;

pub fn run_example() -> ornn::Result<GradcheckReport> {
    let cfg = GradcheckConfig {
        ns: vec![4, 8, 16, 32],
        seeds: vec![0, 1],
        vectors: parse_fpbp_vectors(SHIPPED_VECTORS)?,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&cfg)?;
    for s in &report.suites {
        println!(
            "{:<30} {:>3} cases, worst relative error {:.2e}",
            s.name, s.cases, s.worst_rel_error
        );
    }

    let faulty = run_gradcheck(&GradcheckConfig {
        ns: vec![8],
        ms: Some(vec![4]),
        inject_fault: true,
        ..GradcheckConfig::default()
    })?;
    println!(
        "with a sign fault in the closed form: {} failing case(s)",
        faulty.suites[0].failures.len()
    );
    Ok(report)
}

fn main() -> ornn::Result<()> {
    let report = run_example()?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
