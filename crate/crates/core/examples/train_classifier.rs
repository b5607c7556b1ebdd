//! Trains the block classifier on two phantoms and scores a third.
//!
//! cargo run --release --example train_classifier -- [epochs]

use lungcad::cnn::{predict, read_model, train, write_model, TrainConfig};
use lungcad::evaluation::per_class_accuracy;
use lungcad::phantom::phantom_patient_set;
use lungcad::pipeline::prepare_patient;
use lungcad::Tissue;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    let mut sets = Vec::new();
    for p in phantom_patient_set(3, 11, 160, 160, 4)? {
        let ph = &p.phantom;
        let prep = prepare_patient(
            p.patient_id,
            &ph.volume,
            &ph.labels,
            None,
            &Default::default(),
            &Default::default(),
        )?;
        sets.push(prep.record.blocks);
    }
    let test = sets.pop().unwrap();
    let train_blocks: Vec<_> = sets.concat();

    let config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let (model, history) = train(&train_blocks, &config)?;
    print!("{}", history.to_csv());

    // Save and reload; predictions must not change.
    let model = read_model(&write_model(&model))?;
    let pairs = test
        .iter()
        .map(|b| predict(&model, b).map(|(p, _)| (b.label, p)))
        .collect::<Result<Vec<_>, _>>()?;
    for (t, acc) in Tissue::ALL.iter().zip(per_class_accuracy(&pairs)?) {
        println!(
            "{:>13} recall {}",
            t.name(),
            acc.map_or("-".into(), |a| format!("{a:.3}"))
        );
    }
    Ok(())
}
