//! Runs the toy benchmark for both backends and prints the headline numbers.
//!
//! cargo run --release -p detox-core --example toy_benchmark [out_dir] [generation_seed]

use std::path::PathBuf;
use std::time::Instant;

use detox_core::decoder::BackendKind;
use detox_core::orchestrator::{run_static, ExperimentConfig};

fn main() -> detox_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "toy-benchmark".into()));
    let seed: Option<u64> = args.next().map(|s| s.parse().expect("seed must be an integer"));
    for backend in [BackendKind::Retrieval, BackendKind::Experts] {
        let mut cfg = ExperimentConfig::toy(out.join(backend.to_string()), backend);
        if let Some(s) = seed {
            cfg.generation.seed = s;
        }
        let t = Instant::now();
        let r = run_static(&cfg)?;
        let (b, m) = (&r.baseline, &r.mitigated);
        println!(
            "{backend}: EMT {:.4} -> {:.4} (relative {:+.3}), fluency {:.2} -> {:.2}, distinct-1 {:.4} -> {:.4}, {:.1?}",
            b.emt.overall,
            m.emt.overall,
            r.relative_emt.overall.unwrap_or(f64::NAN),
            b.fluency,
            m.fluency,
            b.distinct(1).unwrap_or(f64::NAN),
            m.distinct(1).unwrap_or(f64::NAN),
            t.elapsed()
        );
    }
    Ok(())
}
