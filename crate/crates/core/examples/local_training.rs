//! Model initialisation, gradients and local SGD for both model kinds.
//!
//! ```text
//! cargo run --example local_training
//! ```

use fedtsv::data::{holdout_split, synth_blobs};
use fedtsv::model::{evaluate, init_params, loss_and_grad, sgd_steps, Batch, ModelSpec};

fn main() -> fedtsv::Result<()> {
    let data = synth_blobs(4, 150, 6, 3.0, 3);
    let (train, test) = holdout_split(&data, 0.25, 9)?;
    println!("{} training and {} test samples, 6 features, 4 classes\n", train.len(), test.len());

    for spec in [ModelSpec::softmax(6, 4), ModelSpec::mlp(6, 16, 4)] {
        let theta = init_params(&spec, 1)?;
        println!("{} model, {} parameters", spec.kind.as_str(), spec.param_count());

        // analytic gradient against a central difference on one coordinate
        let batch = Batch::from_dataset(&train, &[0, 1, 2, 3, 4, 5, 6, 7])?;
        let (loss, grad) = loss_and_grad(&spec, &theta, &batch)?;
        let h = 1e-6;
        let mut plus = theta.clone().into_vec();
        let mut minus = plus.clone();
        plus[0] += h;
        minus[0] -= h;
        let lp = loss_and_grad(&spec, &fedtsv::ParamVector::new(plus)?, &batch)?.0;
        let lm = loss_and_grad(&spec, &fedtsv::ParamVector::new(minus)?, &batch)?.0;
        println!(
            "  batch loss {loss:.4}; dL/dtheta[0] analytic {:.8}, numeric {:.8}",
            grad.as_slice()[0],
            (lp - lm) / (2.0 * h)
        );

        let before = evaluate(&spec, &theta, &test)?;
        let mut current = theta;
        for epoch in 1..=5 {
            let steps = train.len().div_ceil(32);
            current = sgd_steps(&spec, &current, &train, steps, 0.1, 32, epoch)?;
            let ev = evaluate(&spec, &current, &test)?;
            println!("  epoch {epoch}: test accuracy {:.3}, loss {:.4}", ev.accuracy, ev.loss);
        }
        println!("  (untrained: accuracy {:.3}, loss {:.4})\n", before.accuracy, before.loss);
    }
    Ok(())
}
