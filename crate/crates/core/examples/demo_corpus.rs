//! Writes a small synthetic corpus and a matching config.
//!
//! cargo run --example demo_corpus -- <dir> [count] [seed]

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "demo".into()));
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(6);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let files = vocalpath::fixtures::write_corpus(dir.join("audio"), count, seed)?;
    let config = serde_json::json!({
        "audio_dir": "audio",
        "output_dir": "out",
        "seed": seed,
        "lowcut_hz": 500.0,
        "highcut_hz": 6000.0,
        "vae_epochs": 60,
        "vae_latent": 8
    });
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    println!("wrote {} recordings and {}", files.len(), dir.join("config.json").display());
    Ok(())
}
