//! Prints parameter and per-frame operation counts for every preset.
//!
//! ```text
//! cargo run --release -p uxnet --example calibrate
//! ```

use uxnet_core::model::{Model, ModelConfig, PRESETS};
use uxnet_core::profile::ComplexityReport;

fn main() -> anyhow::Result<()> {
    println!("{:<12} {:>12} {:>12} {:>12}", "preset", "parameters", "macs", "ffpf");
    for name in PRESETS {
        let cfg = ModelConfig::preset(name)?;
        let model = Model::<f32>::new(cfg, 0)?;
        let r = ComplexityReport::new(&cfg, model.params())?;
        println!("{name:<12} {:>12} {:>12} {:>12}", r.total_params(), r.total_macs(), r.ffpf());
    }
    Ok(())
}
