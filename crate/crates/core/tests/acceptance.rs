//! Acceptance suite: one PASS/FAIL line per criterion, with its runtime
//! against the stated budget. Exits nonzero if any criterion fails.

use lungcad::blocking::{
    balance_blocks, balance_targets, grid_rois, read_block_file, write_block_file, BalanceRatios,
    Block,
};
use lungcad::cli::{self, render_overlay, PipelineConfig};
use lungcad::cnn::{
    gradient_check, gradient_check_with, read_model, write_model, Architecture, CnnError, CnnModel,
    Shape, Tensor, TrainConfig,
};
use lungcad::evaluation::{run_evaluation, weighted_average, EvalReport};
use lungcad::ingest::{
    encode_dicom_slice, encode_nifti, parse_dicom_slice, parse_nifti, NiftiDatatype, RawSlice,
};
use lungcad::phantom::phantom_patient_set;
use lungcad::pipeline::prepare_patient;
use lungcad::segmentation::{dice, segment_lungs, window_enrich, SegmentationParams};
use lungcad::{BinaryMask, Plane, Tissue, Volume, VolumeDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn weighted_averages() -> Outcome {
    let w = [36.0, 32.0, 170.0, 159.0, 39.0];
    let columns = [
        ("honeycombing", [0.601, 0.601, 0.631, 0.756, 0.846], 0.691),
        ("groundglass", [0.606, 0.906, 0.801, 0.736, 0.401], 0.733),
        ("healthy", [0.640, 0.508, 0.952, 0.906, 0.970], 0.878),
    ];
    let mut got = Vec::new();
    for (name, values, expected) in columns {
        let v = weighted_average(&values, &w).map_err(|e| e.to_string())?;
        ensure(close(v, expected, 0.001), || {
            format!("{name}: {v:.4} vs {expected}")
        })?;
        got.push(format!("{name} {v:.4}"));
    }
    let d = weighted_average(
        &[0.920, 0.916, 0.903, 0.845, 0.980, 0.871],
        &[36.0, 32.0, 41.0, 170.0, 159.0, 39.0],
    )
    .map_err(|e| e.to_string())?;
    ensure(close(d, 0.907, 0.001), || format!("dice {d:.4} vs 0.907"))?;
    got.push(format!("dice {d:.4}"));
    Ok(got.join(", "))
}

fn brute_dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let set = |m: &BinaryMask| -> HashSet<(usize, usize, usize)> {
        let mut s = HashSet::new();
        for (z, p) in m.planes().iter().enumerate() {
            for r in 0..p.rows() {
                for c in 0..p.cols() {
                    if *p.get(r, c) {
                        s.insert((z, r, c));
                    }
                }
            }
        }
        s
    };
    let (sa, sb) = (set(a), set(b));
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    2.0 * sa.intersection(&sb).count() as f64 / (sa.len() + sb.len()) as f64
}

fn dice_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..200 {
        let density_a: f64 = rng.random_range(0.0..1.0);
        let density_b: f64 = rng.random_range(0.0..1.0);
        let mut mask = |d: f64| {
            let data: Vec<bool> = (0..64 * 64).map(|_| rng.random_bool(d)).collect();
            Volume::from_flat(VolumeDims::new(1, 64, 64), &data).unwrap()
        };
        let (a, b) = (mask(density_a), mask(density_b));
        let d = dice(&a, &b).map_err(|e| e.to_string())?;
        ensure(d == brute_dice(&a, &b), || {
            format!("pair {i}: {d} vs oracle")
        })?;
        ensure(d == dice(&b, &a).unwrap(), || {
            format!("pair {i}: asymmetric")
        })?;
        ensure(dice(&a, &a).unwrap() == 1.0, || {
            format!("pair {i}: dice(a,a) != 1")
        })?;
    }
    Ok("200 pairs exact, symmetric, reflexive".into())
}

fn segmentation_on_phantoms() -> Outcome {
    let set = phantom_patient_set(20, 3, 256, 256, 8).map_err(|e| e.to_string())?;
    let params = SegmentationParams::default();
    let scores = set
        .iter()
        .map(|p| {
            let mask = segment_lungs(&p.phantom.volume, &params).map_err(|e| e.to_string())?;
            dice(&mask, &p.phantom.lung_mask).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<f64>, String>>()?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(mean >= 0.95 && min >= 0.90, || {
        format!("mean {mean:.4}, min {min:.4}")
    })?;
    Ok(format!("mean {mean:.4}, min {min:.4}"))
}

fn dummy_blocks(counts: [usize; 3]) -> Vec<Block> {
    Tissue::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&t, n)| {
            (0..n).map(move |i| Block {
                patch: vec![0.5; 144],
                side: 12,
                label: t,
                patient_id: 5,
                slice_index: (i / 1000) as u16,
                grid_row: (i % 1000) as u16,
                grid_col: t.index() as u16,
            })
        })
        .collect()
}

fn blocking_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (rows, cols) = (rng.random_range(1..600), rng.random_range(1..600));
        let n = grid_rois(rows, cols, 4).len();
        ensure(n == (rows / 4) * (cols / 4), || {
            format!("{rows}x{cols}: {n} cells")
        })?;
    }
    let raw = [40_000, 18_962, 120_000];
    let targets = balance_targets(raw, BalanceRatios::default()).map_err(|e| e.to_string())?;
    let table = [28_441i64, 18_962, 47_402];
    for i in 0..3 {
        ensure((targets[i] as i64 - table[i]).abs() <= 3, || {
            format!("targets {targets:?} vs {table:?}")
        })?;
    }
    let blocks = dummy_blocks(raw);
    let a =
        balance_blocks(blocks.clone(), BalanceRatios::default(), 9).map_err(|e| e.to_string())?;
    let b = balance_blocks(blocks, BalanceRatios::default(), 9).map_err(|e| e.to_string())?;
    ensure(a == b, || "seeded balancing not reproducible".into())?;
    Ok(format!("patient 5 targets {targets:?}"))
}

fn gradients() -> Outcome {
    let arch: Architecture =
        "input6x6x1,conv3x2,relu,pool2,flatten,dense5,relu,dropout,dense3,softmax"
            .parse()
            .map_err(|e: CnnError| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for (label, rate) in [(0, 0.0), (1, 0.0), (2, 0.0)] {
        let model = CnnModel::<f64>::he_init(&arch, rate, &mut rng).map_err(|e| e.to_string())?;
        let input = Tensor::from_vec(
            Shape::new(6, 6, 1),
            (0..36).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let check = gradient_check(&model, &input, label).map_err(|e| e.to_string())?;
        worst = worst.max(check.max_relative_error);
    }
    // Dropout active with a replayed mask.
    let model = CnnModel::<f64>::he_init(&arch, 0.3, &mut rng).map_err(|e| e.to_string())?;
    let input = Tensor::from_vec(
        Shape::new(6, 6, 1),
        (0..36).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let masked =
        gradient_check_with(&model, &input, 1, Some(11), |_| {}).map_err(|e| e.to_string())?;
    worst = worst.max(masked.max_relative_error);
    ensure(worst < 1e-6, || format!("max relative error {worst:e}"))?;
    let canary = gradient_check_with(&model, &input, 1, Some(11), |g| {
        for v in g.tensors[0].iter_mut() {
            *v *= 2.0;
        }
    })
    .map_err(|e| e.to_string())?;
    ensure(canary.max_relative_error > 0.3, || {
        format!("canary missed: {:e}", canary.max_relative_error)
    })?;
    Ok(format!(
        "max rel err {worst:.2e}; canary {:.3}",
        canary.max_relative_error
    ))
}

fn evaluate_once(seed: u64) -> Result<EvalReport, String> {
    let set = phantom_patient_set(4, seed, 256, 256, 8).map_err(|e| e.to_string())?;
    let records = set
        .iter()
        .map(|p| {
            prepare_patient(
                p.patient_id,
                &p.phantom.volume,
                &p.phantom.labels,
                Some(&p.phantom.lung_mask),
                &SegmentationParams::default(),
                &Default::default(),
            )
            .map(|prep| prep.record)
            .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    run_evaluation(&records, &TrainConfig::default()).map_err(|e| e.to_string())
}

fn learnability() -> Outcome {
    let first = evaluate_once(7)?;
    let mut worst = [f64::INFINITY; 3];
    for p in &first.patients {
        for (c, acc) in p.accuracy.iter().enumerate() {
            let acc = acc.ok_or_else(|| format!("patient {} lacks class {c}", p.patient_id))?;
            worst[c] = worst[c].min(acc);
        }
    }
    ensure(worst.iter().all(|&w| w >= 0.85) && worst[2] >= 0.90, || {
        format!("min recall hc/gg/healthy {worst:?}")
    })?;
    let second = evaluate_once(7)?;
    ensure(first.same_results(&second), || "rerun differs".into())?;
    Ok(format!(
        "min recall hc {:.3} gg {:.3} healthy {:.3}; rerun identical",
        worst[0], worst[1], worst[2]
    ))
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let plane = Plane::from_fn(9, 7, |_, _| rng.random_range(-2000..3000));
    let mut raw = RawSlice::new(plane, 3);
    raw.rescale_slope = 1.0;
    raw.rescale_intercept = -1024.0;
    raw.rescale_defaulted = false;
    raw.slice_location = Some(-12.5);
    raw.patient_id = Some("ANON".into());
    let bytes = encode_dicom_slice(&raw);
    let back = parse_dicom_slice(&bytes).map_err(|e| e.to_string())?;
    ensure(back == raw, || "DICOM slice differs".into())?;
    ensure(encode_dicom_slice(&back) == bytes, || {
        "DICOM bytes differ".into()
    })?;

    let dims = VolumeDims::new(3, 5, 4);
    let values: Vec<i32> = (0..60).map(|_| rng.random_range(-32768..32768)).collect();
    let nii = encode_nifti(dims, NiftiDatatype::I16, &values);
    let parsed = parse_nifti(&nii).map_err(|e| e.to_string())?;
    ensure(parsed.values == values && parsed.dims == dims, || {
        "NIfTI differs".into()
    })?;
    ensure(
        encode_nifti(parsed.dims, parsed.datatype, &parsed.values) == nii,
        || "NIfTI bytes differ".into(),
    )?;

    let blocks: Vec<Block> = (0..20)
        .map(|i| Block {
            patch: (0..144).map(|_| rng.random_range(0.0f32..1.0)).collect(),
            side: 12,
            label: Tissue::ALL[i % 3],
            patient_id: 2,
            slice_index: i as u16,
            grid_row: 3,
            grid_col: 4,
        })
        .collect();
    let ipfb = write_block_file(&blocks).map_err(|e| e.to_string())?;
    let read = read_block_file(&ipfb).map_err(|e| e.to_string())?;
    ensure(read == blocks, || "IPFB differs".into())?;
    ensure(write_block_file(&read).unwrap() == ipfb, || {
        "IPFB bytes differ".into()
    })?;

    let model = CnnModel::<f32>::he_init(&Architecture::standard(), 0.5, &mut rng)
        .map_err(|e| e.to_string())?;
    let ipfm = write_model(&model);
    let m2 = read_model(&ipfm).map_err(|e| e.to_string())?;
    ensure(m2 == model && write_model(&m2) == ipfm, || {
        "IPFM differs".into()
    })?;
    let mut corrupt = ipfm.clone();
    let n = corrupt.len();
    corrupt[n - 1] ^= 0xff;
    ensure(
        read_model(&corrupt) == Err(CnnError::ChecksumMismatch),
        || "corrupted checksum accepted".into(),
    )?;

    let cfg = PipelineConfig {
        seed: 123456789,
        learning_rate: 0.0123,
        ratio_healthy: 2.75,
        ..PipelineConfig::default()
    };
    let text = cfg.dump();
    let back = PipelineConfig::parse(&text).map_err(|e| e.to_string())?;
    ensure(back == cfg && back.dump() == text, || {
        "config differs".into()
    })?;
    Ok("DICOM, NIfTI, IPFB, IPFM, config exact; bad CRC rejected".into())
}

fn cli_contract() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    // Fixtures: a tiny series, a mismatched reference mask, block files.
    let patient = cli::cmd_phantom(&PipelineConfig::default(), 2, 64, 64, 1, dir)
        .map_err(|e| e.to_string())?
        .remove(0);
    let series = patient.join("dicom").to_string_lossy().into_owned();
    std::fs::write(
        p("wrong.nii"),
        encode_nifti(
            VolumeDims::new(1, 32, 32),
            NiftiDatatype::U8,
            &vec![0; 1024],
        ),
    )
    .unwrap();
    std::fs::write(p("bogus.cfg"), "roi=4\nflavour=vanilla\n").unwrap();
    std::fs::write(p("zero.cfg"), "batch_size=0\n").unwrap();
    std::fs::write(p("diverge.cfg"), "learning_rate=1e30\nepochs=2\n").unwrap();
    std::fs::write(
        p("healthy.ipfb"),
        write_block_file(&dummy_blocks([0, 0, 64])).unwrap(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mixed = dummy_blocks([40, 40, 40]);
    for b in &mut mixed {
        b.patch
            .iter_mut()
            .for_each(|v| *v = rng.random_range(0.0..1.0));
    }
    std::fs::write(p("mixed.ipfb"), write_block_file(&mixed).unwrap()).unwrap();
    std::fs::write(p("map.csv"), "1,1\n1,1\n").unwrap();

    let cases: Vec<(&str, Vec<String>, i32)> = vec![
        ("no subcommand", vec![], 2),
        ("unknown subcommand", vec!["frobnicate".into()], 2),
        (
            "missing input dir",
            vec![
                "segment".into(),
                "--input".into(),
                p("nope"),
                "--out-mask".into(),
                p("m.nii"),
            ],
            2,
        ),
        (
            "missing required flag",
            vec!["segment".into(), "--input".into(), series.clone()],
            2,
        ),
        (
            "predict without model",
            vec![
                "predict".into(),
                "--model".into(),
                p("none.ipfm"),
                "--input".into(),
                series.clone(),
                "--out-dir".into(),
                p("pred"),
            ],
            2,
        ),
        (
            "unknown config key",
            vec![
                "--config".into(),
                p("bogus.cfg"),
                "phantom".into(),
                "--out-dir".into(),
                p("ph"),
            ],
            2,
        ),
        (
            "invalid config value",
            vec![
                "--config".into(),
                p("zero.cfg"),
                "phantom".into(),
                "--out-dir".into(),
                p("ph"),
            ],
            2,
        ),
        (
            "reference mask dims mismatch",
            vec![
                "segment".into(),
                "--input".into(),
                series.clone(),
                "--out-mask".into(),
                p("m.nii"),
                "--ref-mask".into(),
                p("wrong.nii"),
            ],
            3,
        ),
        (
            "class map dims mismatch",
            vec![
                "overlay".into(),
                "--input".into(),
                series.clone(),
                "--class-map".into(),
                p("map.csv"),
                "--out".into(),
                p("o.png"),
            ],
            3,
        ),
        (
            "single-class training set",
            vec![
                "train".into(),
                "--blocks".into(),
                p("healthy.ipfb"),
                "--out-model".into(),
                p("m.ipfm"),
            ],
            3,
        ),
        (
            "training divergence",
            vec![
                "--config".into(),
                p("diverge.cfg"),
                "train".into(),
                "--blocks".into(),
                p("mixed.ipfb"),
                "--out-model".into(),
                p("m.ipfm"),
            ],
            4,
        ),
    ];
    for (name, args, expected) in &cases {
        let argv = std::iter::once("lungcad".to_string()).chain(args.iter().cloned());
        let code = cli::run(argv);
        ensure(code == *expected, || {
            format!("{name}: exit {code}, expected {expected}")
        })?;
    }

    // Overlay pixel formula on 16x16 fixtures.
    let slice = Plane::from_fn(16, 16, |r, c| -1000 + 6 * (r * 16 + c) as i32);
    let gray = window_enrich(&slice, -600.0, 1500.0).unwrap();
    let healthy = render_overlay(&slice, &Plane::filled(4, 4, 1), 4, -600.0, 1500.0).unwrap();
    ensure(healthy == gray.map(|&g| [g; 3]), || {
        "healthy map not pure gray".into()
    })?;
    let mut map = Plane::filled(4, 4, 1u8);
    map.set(0, 0, 3);
    map.set(2, 1, 2);
    let out = render_overlay(&slice, &map, 4, -600.0, 1500.0).unwrap();
    for r in 0..16 {
        for c in 0..16 {
            let g = f64::from(*gray.get(r, c));
            let color = match (r / 4, c / 4) {
                (0, 0) => Some([255.0, 0.0, 0.0]),
                (2, 1) => Some([0.0, 255.0, 0.0]),
                _ => None,
            };
            let want = color.map_or([g as u8; 3], |col: [f64; 3]| {
                col.map(|k| (0.6 * g + 0.4 * k).round() as u8)
            });
            ensure(*out.get(r, c) == want, || format!("pixel ({r},{c})"))?;
        }
    }
    Ok(format!(
        "{} misuse cases; overlay pixels exact",
        cases.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            1,
            "weighted-average reproduction",
            Duration::from_millis(1),
            weighted_averages,
        ),
        (
            2,
            "Dice oracle equivalence",
            Duration::from_secs(1),
            dice_oracle,
        ),
        (
            3,
            "segmentation on phantoms",
            Duration::from_secs(10),
            segmentation_on_phantoms,
        ),
        (
            4,
            "blocking closed forms",
            Duration::from_secs(1),
            blocking_closed_forms,
        ),
        (
            5,
            "gradient verification",
            Duration::from_secs(30),
            gradients,
        ),
        (
            6,
            "learnability end-to-end",
            Duration::from_secs(600),
            learnability,
        ),
        (7, "format round-trips", Duration::from_secs(1), round_trips),
        (8, "CLI contract", Duration::from_secs(5), cli_contract),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over runtime budget")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "acceptance {n} {status}: {name} ({:.3}s / {:.3}s) {detail}",
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
