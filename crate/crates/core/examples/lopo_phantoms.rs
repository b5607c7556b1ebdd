//! Leave-one-patient-out on synthetic patients.
//!
//! cargo run --release --example lopo_phantoms -- [patients] [size] [slices] [epochs]

use lungcad::cnn::TrainConfig;
use lungcad::evaluation::{render_report, run_evaluation};
use lungcad::phantom::phantom_patient_set;
use lungcad::pipeline::prepare_patient;
use std::time::Instant;

fn arg(i: usize, default: usize) -> usize {
    std::env::args()
        .nth(i)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let (n, size, slices, epochs) = (arg(1, 4), arg(2, 128), arg(3, 4), arg(4, 10));
    let seg = Default::default();
    let blk = Default::default();
    let mut records = Vec::new();
    for p in phantom_patient_set(n, 7, size, size, slices)? {
        let prepared = prepare_patient(
            p.patient_id,
            &p.phantom.volume,
            &p.phantom.labels,
            Some(&p.phantom.lung_mask),
            &seg,
            &blk,
        )?;
        println!(
            "patient {}: raw {:?}, balanced {} blocks",
            p.patient_id,
            prepared.raw_counts,
            prepared.record.blocks.len()
        );
        records.push(prepared.record);
    }
    let config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let report = run_evaluation(&records, &config)?;
    let (text, _) = render_report(&report);
    print!("{text}");
    println!("evaluation took {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
