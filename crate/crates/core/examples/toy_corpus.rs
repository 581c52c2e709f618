//! Builds the desk-scale corpus manifest, renders it, and summarizes the
//! mixtures. An optional argument names a directory for `manifest.jsonl`.

use std::collections::BTreeMap;

use derevkit::metrics::cd_and_llr;
use derevkit::roomsim::manifest::{synthesize_rows, write_manifest};
use derevkit::roomsim::{build_manifest, measure_snr_db, SimulationConfig};
use derevkit::{Result, SAMPLE_RATE};

fn main() -> Result<()> {
    let cfg = SimulationConfig::toy(1);
    let rows = build_manifest(&cfg)?;
    if let Some(dir) = std::env::args().nth(1) {
        let path = std::path::Path::new(&dir).join("manifest.jsonl");
        write_manifest(&path, &rows)?;
        println!("wrote {}", path.display());
    }
    let mut per_split: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *per_split.entry(r.split.as_str()).or_default() += 1;
    }
    println!("rows per split: {per_split:?}");

    let test: Vec<_> = rows.iter().filter(|r| r.split == "test").cloned().collect();
    println!("{:>14} {:>6} {:>7} {:>8} {:>9} {:>8}", "id", "rt60", "noise", "snr", "measured", "CD dB");
    for (row, sample) in test.iter().zip(synthesize_rows(&test, SAMPLE_RATE)) {
        let s = sample?;
        let (cd, _) = cd_and_llr(&s.anechoic_target, &s.mixture)?;
        println!(
            "{:>14} {:>6.2} {:>7} {:>8.1} {:>9.3} {:>8.3}",
            row.id,
            row.rt60,
            s.noise_id,
            row.snr_db,
            measure_snr_db(&s.reverberant_speech, &s.noise),
            cd
        );
    }
    Ok(())
}
