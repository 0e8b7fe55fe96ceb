//! Compares tape gradients against central finite differences for every
//! aggregator on a random bag.
//!
//!     cargo run --release --example gradient_check

use milr::models::{MilModel, ModelConfig};
use milr::numerics::{finite_diff_gradient, max_relative_error, Tensor2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> milr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<f64> = (0..6 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bag = Tensor2::from_vec(6, 5, data)?;
    for name in [
        "mean-pool", "max-pool", "mean-pool-ins", "max-pool-ins", "abmil", "abmil-add", "multihead/2", "multihead-add/2",
    ] {
        let cfg = name.parse::<ModelConfig>()?.with_dims(5, 4, 3).with_classes(3);
        let model = MilModel::new(cfg, 1)?;
        let (_, grads) = model.loss_and_gradients(&bag, 2)?;
        let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().iter().copied()).collect();
        let mut probe = model.clone();
        let numeric = finite_diff_gradient(
            |theta| {
                probe.set_flat(theta).expect("same length");
                probe.loss(&bag, 2).expect("valid bag")
            },
            &model.flatten(),
            1e-5,
        );
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        println!("{:<16} {:>4} params  max rel err {err:.2e}", model.config().name(), analytic.len());
    }
    Ok(())
}
