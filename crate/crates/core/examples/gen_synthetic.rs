//! Regenerates the bundled synthetic data set.
//!
//! cargo run -p selmask-core --example gen_synthetic -- data/synthetic

use std::path::PathBuf;

use selmask::synth::{self, SynthConfig};

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/synthetic"));
    let data = synth::generate(&SynthConfig::default());
    if let Err(e) = synth::write_dir(&data, &dir) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
    println!("wrote {}", dir.display());
}
