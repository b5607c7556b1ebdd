//! Cuts a segmented phantom into 12x12 blocks, balances them 1:1.5:2.5 and
//! writes an IPFB file plus its manifest.
//!
//! cargo run --release --example blocks_and_balance

use lungcad::blocking::{read_block_file, write_block_file, write_manifest};
use lungcad::phantom::{generate_phantom, PhantomSpec};
use lungcad::pipeline::prepare_patient;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = generate_phantom(&PhantomSpec::standard(256, 256, 4, 2))?;
    let prepared = prepare_patient(
        1,
        &p.volume,
        &p.labels,
        Some(&p.lung_mask),
        &Default::default(),
        &Default::default(),
    )?;
    let blocks = &prepared.record.blocks;
    println!("raw counts (hc, gg, healthy): {:?}", prepared.raw_counts);

    let bytes = write_block_file(blocks)?;
    let path = std::env::temp_dir().join("lungcad_blocks.ipfb");
    std::fs::write(&path, &bytes)?;
    assert_eq!(&read_block_file(&bytes)?, blocks);
    println!(
        "wrote {} blocks ({} bytes) to {}",
        blocks.len(),
        bytes.len(),
        path.display()
    );
    write_manifest(blocks, std::io::stdout())?;
    Ok(())
}
