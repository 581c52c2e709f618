//! Verifies the hand-written backpropagation of a small proposed model and
//! the single-stage baseline against central differences in 64-bit.

use derevkit::neural::{grad_check, synthetic_example, Hyper, ModelParams};

fn main() -> derevkit::Result<()> {
    let example = synthetic_example(5, 9, 7);
    for (label, hyper) in [
        ("proposed", Hyper::proposed(9, 4, 8)),
        ("baseline", Hyper::baseline(9, 8)),
    ] {
        let params = ModelParams::<f64>::new(hyper, 42);
        for eps in [1e-5, 2e-5] {
            let report = grad_check(&params, &example, eps)?;
            println!("== {label}, epsilon {eps:e}");
            print!("{}", report.render());
        }
    }
    Ok(())
}
