//! Finite-difference check of the backward pass in 64-bit mode, with a
//! deliberately broken gradient for contrast.
//!
//! cargo run --example gradient_check

use lungcad::cnn::{gradient_check, gradient_check_with, Architecture, CnnModel, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arch: Architecture = "input8x8x1,conv3x4,relu,pool2,conv3x4,relu,pool2,flatten,dense6,relu,dropout,dense3,softmax".parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = CnnModel::<f64>::he_init(&arch, 0.0, &mut rng)?;
    let input = Tensor::from_vec(
        Shape::new(8, 8, 1),
        (0..64).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .expect("64 values");
    println!("{arch}: {} parameters", model.parameter_count());

    let ok = gradient_check(&model, &input, 1)?;
    println!(
        "max relative error {:.3e} over {} partials",
        ok.max_relative_error, ok.checked
    );

    let broken = gradient_check_with(&model, &input, 1, None, |g| {
        g.tensors[0].iter_mut().for_each(|v| *v *= 2.0)
    })?;
    println!(
        "with conv gradient doubled: {:.3}",
        broken.max_relative_error
    );
    Ok(())
}
