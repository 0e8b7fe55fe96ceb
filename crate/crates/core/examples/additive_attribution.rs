//! Additive attention MIL: per-instance class contributions sum exactly to
//! the slide logits.
//!
//!     cargo run --example additive_attribution

use milr::models::{MilModel, ModelConfig};
use milr::numerics::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> milr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 6;
    let bag = Tensor2::from_vec(n, 8, (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let model = MilModel::new("abmil-add".parse::<ModelConfig>()?.with_dims(8, 6, 4), 0)?;
    let out = model.forward(&bag)?;
    let c = out.contributions.as_ref().expect("additive model");
    let att = out.attention.as_ref().expect("attention model");
    println!("{:>3} {:>9} {:>11} {:>11}", "i", "attention", "contrib c0", "contrib c1");
    for (i, a) in att.iter().enumerate() {
        println!("{i:>3} {a:>9.4} {:>11.5} {:>11.5}", c.get(i, 0), c.get(i, 1));
    }
    let sums = c.colwise_sum();
    for k in 0..2 {
        println!(
            "class {k}: sum of contributions {:.12}, logit {:.12}",
            sums.get(0, k),
            out.logits.get(0, k)
        );
    }
    Ok(())
}
