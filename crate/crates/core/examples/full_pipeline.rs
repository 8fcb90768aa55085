//! Generates scenarios, runs the full pipeline on each and prints the
//! tracking error against the constructed ground truth.
//!
//! Usage: cargo run --release --example full_pipeline -- [count] [out_dir]

use std::path::PathBuf;

use hrt1::harness::{generate_scenario, run_pipeline, PipelineConfig, ScenarioKind, ScenarioSpec};

fn main() -> hrt1::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let root = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hrt1-full-pipeline"));
    let config = PipelineConfig::default();

    println!("{:<10} {:>6} {:>6} {:>10} {:>10} {:>8} {:>6}", "scenario", "kind", "frames", "e_trans", "e_rot", "time_s", "ok");
    for seed in 0..count {
        let spec = ScenarioSpec {
            kind: if seed % 2 == 0 { ScenarioKind::Single } else { ScenarioKind::Dual },
            with_hand: seed % 4 == 0,
            ..ScenarioSpec::default()
        };
        let name = format!("gen-{seed:02}");
        let dir = root.join(&name);
        let g = generate_scenario(&dir.join("scenario"), &name, seed, &spec)?;
        let report = run_pipeline(&dir.join("scenario"), &config, Some(&dir.join("run")))?;
        let e = report.tracking.unwrap_or_default();
        println!(
            "{:<10} {:>6} {:>6} {:>10.5} {:>10.5} {:>8.2} {:>6}",
            name,
            format!("{:?}", g.manifest.kind).to_lowercase(),
            g.demo.len(),
            e.e_trans,
            e.e_rot,
            report.total_seconds(),
            report.tracking_ok.unwrap_or(false) && report.constraints_ok && report.converged()
        );
    }
    println!("artifacts under {}", root.display());
    Ok(())
}
