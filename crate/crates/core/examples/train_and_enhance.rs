//! Trains the two-stage model on the toy corpus for a few epochs, then
//! enhances the test split and compares it with the unprocessed mixtures.
//!
//! `cargo run --release --example train_and_enhance -- [epochs]`

use derevkit::metrics::cd_and_llr;
use derevkit::neural::{enhance, train_stage1_dc, train_stage2_joint, Dataset, Hyper, TrainConfig};
use derevkit::roomsim::manifest::synthesize_rows;
use derevkit::roomsim::{build_manifest, SimulationConfig};
use derevkit::{Result, SAMPLE_RATE};

fn main() -> Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(4, |s| s.parse().expect("epoch count"));
    let rows = build_manifest(&SimulationConfig::toy(1))?;
    let data = Dataset::from_manifest(&rows, SAMPLE_RATE)?;
    println!("{} train / {} dev utterances", data.train.len(), data.dev.len());

    let cfg = TrainConfig {
        lr: 2e-3,
        batch_utterances: 4,
        min_epochs: epochs,
        max_epochs: epochs,
        seed: 7,
        ..TrainConfig::default()
    };
    let hyper = Hyper::proposed(data.train[0].bins(), 20, 64);
    let stage1 = train_stage1_dc(&data, hyper, &cfg)?;
    println!("clustering stage: dev {:.4} -> {:.4}", stage1.initial_dev_loss, stage1.best_dev_loss);
    let stage2 = train_stage2_joint(&data, &cfg, stage1.params)?;
    println!("joint stage:      dev {:.4} -> {:.4}", stage2.initial_dev_loss, stage2.best_dev_loss);

    let test: Vec<_> = rows.into_iter().filter(|r| r.split == "test").collect();
    let (mut before, mut after) = ((0.0, 0.0), (0.0, 0.0));
    for sample in synthesize_rows(&test, SAMPLE_RATE) {
        let s = sample?;
        let out = enhance(&stage2.params, &s.mixture)?;
        let (cd0, llr0) = cd_and_llr(&s.anechoic_target, &s.mixture)?;
        let (cd1, llr1) = cd_and_llr(&s.anechoic_target, &out)?;
        before = (before.0 + cd0, before.1 + llr0);
        after = (after.0 + cd1, after.1 + llr1);
    }
    let n = test.len() as f64;
    println!("unprocessed: CD {:.3} dB  LLR {:.3}", before.0 / n, before.1 / n);
    println!("enhanced:    CD {:.3} dB  LLR {:.3}", after.0 / n, after.1 / n);
    Ok(())
}
