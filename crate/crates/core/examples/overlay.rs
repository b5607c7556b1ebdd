//! Renders the truth labels of a phantom slice as a red/green overlay PNG.
//!
//! cargo run --example overlay

use lungcad::blocking::{dominant_label, grid_rois};
use lungcad::cli::image::{encode_png, render_overlay};
use lungcad::phantom::{generate_phantom, PhantomSpec};
use lungcad::{Plane, TissueClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = generate_phantom(&PhantomSpec::standard(256, 256, 1, 4))?;
    let (slice, labels) = (p.volume.voxels.plane(0), p.labels.plane(0));
    let roi = 4;

    let mut map = Plane::filled(256 / roi, 256 / roi, 0u8);
    for cell in grid_rois(256, 256, roi) {
        let cells: Vec<TissueClass> = (0..roi * roi)
            .map(|i| *labels.get(cell.origin_row + i / roi, cell.origin_col + i % roi))
            .collect();
        if let Some(t) = dominant_label(&cells, 0.5) {
            map.set(cell.grid_row, cell.grid_col, t.label_class().code());
        }
    }
    let rgb = render_overlay(slice, &map, roi, -600.0, 1500.0)?;
    let path = std::env::temp_dir().join("lungcad_overlay.png");
    std::fs::write(&path, encode_png(&rgb)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
