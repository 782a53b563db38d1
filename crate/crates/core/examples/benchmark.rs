//! Synthetic benchmark: every step of the ablation ladder, averaged over
//! seeds.
//!
//! `cargo run --release --example benchmark -- [seeds=N] [steps=base,+inter] [key=value ...]`

use std::time::Instant;

use csrms_core::data_io::generate_synthetic;
use csrms_core::pipeline::{run_in_memory, RunConfig};
use csrms_core::rgrl::Components;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut overrides = Vec::new();
    let mut seeds = 5u64;
    let mut steps: Option<Vec<String>> = None;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("arguments are key=value")?;
        if k == "seeds" {
            seeds = v.parse()?;
        } else if k == "steps" {
            steps = Some(v.split(',').map(str::to_string).collect());
        } else {
            overrides.push((k.to_string(), v.to_string()));
        }
    }
    for (name, comps) in Components::ladder() {
        if steps.as_ref().is_some_and(|s| !s.iter().any(|x| x == name)) {
            continue;
        }
        let start = Instant::now();
        let (mut top1, mut intra, mut inter) = (0.0, 0.0, 0.0);
        for seed in 0..seeds {
            let mut cfg = RunConfig::from_value(serde_json::json!({ "seed": seed }), &overrides)?;
            cfg.components = comps;
            let fs = generate_synthetic(&cfg.synth_spec())?;
            let out = run_in_memory(&cfg, &fs)?;
            let k = seeds as f64;
            top1 += out.top1 / k;
            intra += out.intra_repr / out.intra_raw / k;
            inter += out.inter_repr / out.inter_raw / k;
        }
        println!(
            "{name:<12} top1 {top1:.4}  intra ratio {intra:.3}  inter ratio {inter:.3}  ({:.1?})",
            start.elapsed()
        );
    }
    Ok(())
}
