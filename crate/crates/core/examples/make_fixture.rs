//! Writes the synthetic crash extract and its recode rules.
//!
//! `cargo run --example make_fixture -- <dir> [rows] [seed]`

use std::path::PathBuf;

use treebench::dataset::crash_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/crash".into()));
    let rows: usize = args.next().map_or(Ok(740), |a| a.parse())?;
    let seed: u64 = args.next().map_or(Ok(2019), |a| a.parse())?;
    let fx = crash_fixture(rows, seed)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("raw.csv"), fx.raw.to_csv()?)?;
    std::fs::write(dir.join("recode_rules.toml"), fx.rules.to_toml()?)?;
    println!("{} raw rows, {} after cohort and recoding", fx.raw.n_rows(), fx.expected_rows);
    Ok(())
}
