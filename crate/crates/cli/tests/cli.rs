use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linenet_core::io::{self, ModelFile};
use linenet_core::ranking::{RankingModel, Standardizer};
use linenet_core::{BinaryMap, Pixel};

fn linenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linenet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small synthetic dataset under `dir/data`.
fn small_dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let o = linenet(&["synth", "--out", p(&data), "--train", "2", "--test", "2", "--size", "128", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    data
}

const FAST: [&str; 4] = ["--preset", "synthetic", "--set", "samples=600"];

fn train(dir: &Path, data: &Path, name: &str) -> PathBuf {
    let model = dir.join(name);
    let mut args = FAST.to_vec();
    let (imgs, gt) = (data.join("train/images"), data.join("train/gt"));
    args.extend(["train", "--images", p(&imgs), "--gt", p(&gt), "--out", p(&model)]);
    let o = linenet(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    model
}

#[test]
fn features_one_image_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let img = data.join("train/images/img_000.png");
    let out = dir.path().join("feat");
    let o = linenet(&["features", p(&img), "--out", p(&out), "--png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (raster, hash) = io::read_raster(&out.join("img_000.cfm")).unwrap();
    assert_eq!((raster.width(), raster.height()), (128, 128));
    assert!(hash.is_some());
    assert!(out.join("img_000.png").exists());

    let missing = dir.path().join("nope.png");
    let o = linenet(&["features", p(&missing), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.png"));
}

#[test]
fn features_batch_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let imgs: Vec<PathBuf> = ["train/images/img_000.png", "train/images/img_001.png", "test/images/img_000.png"]
        .iter()
        .map(|f| data.join(f))
        .collect();
    let run = |out: &Path| {
        let mut args = vec!["features"];
        args.extend(imgs.iter().map(|i| p(i)));
        args.extend(["--out", p(out)]);
        assert!(linenet(&args).status.success());
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    // two inputs share the stem img_000, the later one wins
    for name in ["img_000.cfm", "img_001.cfm"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn train_is_deterministic_and_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let a = train(dir.path(), &data, "a.crsv");
    let b = train(dir.path(), &data, "b.crsv");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let sidecar = io::Sidecar::read(&io::sidecar_path(&a)).unwrap();
    for key in ["config_hash", "rho", "slack", "iterations", "objective"] {
        assert!(sidecar.get(key).is_some(), "{key}");
    }
    let file = io::read_model(&a).unwrap();
    assert_eq!(file.model.dim(), 33 * 5);
}

#[test]
fn train_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let (imgs, gt) = (data.join("train/images"), data.join("train/gt"));
    let model = dir.path().join("m.crsv");
    let o = linenet(&["--set", "samples=1", "train", "--images", p(&imgs), "--gt", p(&gt), "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("insufficient samples"));

    let nogt = dir.path().join("missing_gt");
    let o = linenet(&["train", "--images", p(&imgs), "--gt", p(&nogt), "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));

    let partial = dir.path().join("partial_gt");
    std::fs::create_dir_all(&partial).unwrap();
    std::fs::copy(gt.join("img_000.png"), partial.join("img_000.png")).unwrap();
    let o = linenet(&["train", "--images", p(&imgs), "--gt", p(&partial), "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("img_001"));

    let o = linenet(&["--set", "bogus=1", "train", "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    let o = linenet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reconstruct_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let model = train(dir.path(), &data, "m.crsv");
    let img = data.join("test/images/img_000.png");
    let run = |out: &Path| {
        let mut args = FAST.to_vec();
        args.extend(["reconstruct", "--model", p(&model), p(&img), "--out", p(out)]);
        let o = linenet(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let (a, b) = (dir.path().join("ra"), dir.path().join("rb"));
    run(&a);
    run(&b);
    let ja = std::fs::read(a.join("img_000.json")).unwrap();
    assert_eq!(ja, std::fs::read(b.join("img_000.json")).unwrap());
    let rec: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    assert!(!rec["paths"].as_array().unwrap().is_empty());
    assert!(rec["config_hash"].is_string());
    let mask = io::read_mask(&a.join("img_000_mask.png")).unwrap();
    assert!(mask.count() > 0);
    assert!(a.join("img_000_overlay.png").exists());

    // infer writes the intermediate maps
    let inf = dir.path().join("inf");
    let mut args = FAST.to_vec();
    args.extend(["infer", "--model", p(&model), p(&img), "--out", p(&inf)]);
    assert!(linenet(&args).status.success());
    for f in ["img_000_scores.cfm", "img_000_pi.cfm", "img_000_selected.png"] {
        assert!(inf.join(f).exists(), "{f}");
    }
}

#[test]
fn blank_image_gives_empty_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let model = train(dir.path(), &data, "m.crsv");
    let blank = dir.path().join("blank.png");
    image::GrayImage::from_pixel(64, 64, image::Luma([128])).save(&blank).unwrap();
    let out = dir.path().join("out");
    let o = linenet(&["reconstruct", "--model", p(&model), p(&blank), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rec: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("blank.json")).unwrap()).unwrap();
    assert_eq!(rec["paths"].as_array().unwrap().len(), 0);
}

#[test]
fn model_dimension_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.crsv");
    let file = ModelFile {
        model: RankingModel::new(vec![1.0; 3], 0.1, Standardizer::identity(3)).unwrap(),
        patch_side: 33,
        thickness: 5,
        orientations: vec![0.0, 90.0],
        config_hash: None,
    };
    io::write_model(&model, &file, "x").unwrap();
    let img = dir.path().join("i.png");
    image::GrayImage::from_fn(40, 40, |x, _| image::Luma([(x * 6) as u8])).save(&img).unwrap();
    let o = linenet(&["--set", "rho=0.01", "reconstruct", "--model", p(&model), p(&img), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = linenet(&["reconstruct", "--model", p(&dir.path().join("none.crsv")), p(&img), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_masks(dir: &Path, n: usize) -> Vec<PathBuf> {
    (0..n)
        .map(|i| {
            let path = dir.join(format!("m{i}.png"));
            let mask = BinaryMap::from_pixels(20, 20, (0..5 + i).map(|c| Pixel::new(3 + i, c)));
            io::write_mask_png(&path, &mask, "same").unwrap();
            path
        })
        .collect()
}

#[test]
fn eval_identical_and_mean_row() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_masks(dir.path(), 4);
    let csv = dir.path().join("m.csv");
    let mut args = vec!["eval", "--pred"];
    args.extend(gt.iter().map(|g| p(g)));
    args.push("--gt");
    args.extend(gt.iter().map(|g| p(g)));
    args.extend(["--out", p(&csv)]);
    let o = linenet(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image,precision,recall,f1,rho_percent");
    assert_eq!(lines.len(), 6);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3].parse::<f64>().unwrap(), 1.0);
    }
    let rho: Vec<f64> = lines[1..5].iter().map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    let mean: f64 = lines[5].split(',').nth(4).unwrap().parse().unwrap();
    assert!((mean - rho.iter().sum::<f64>() / 4.0).abs() < 1e-6);
}

#[test]
fn eval_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_masks(dir.path(), 2);
    // no predictions at all
    let o = linenet(&["eval", "--gt", p(&gt[0])]);
    assert_eq!(o.status.code(), Some(2));
    // count mismatch
    let o = linenet(&["eval", "--pred", p(&gt[0]), "--gt", p(&gt[0]), p(&gt[1])]);
    assert_eq!(o.status.code(), Some(2));
    // mixed config hashes
    let other = dir.path().join("other.png");
    io::write_mask_png(&other, &io::read_mask(&gt[1]).unwrap(), "different").unwrap();
    let o = linenet(&["eval", "--pred", p(&gt[0]), p(&other), "--gt", p(&gt[0]), p(&gt[1])]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"));
    let o = linenet(&["eval", "--force", "--pred", p(&gt[0]), p(&other), "--gt", p(&gt[0]), p(&gt[1])]);
    assert!(o.status.success());
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let run = |out: &Path| {
        let mut args = FAST.to_vec();
        let (tr, te) = (data.join("train"), data.join("test"));
        args.extend(["pipeline", "--train", p(&tr), "--test", p(&te), "--out", p(out)]);
        let o = linenet(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let (a, b) = (dir.path().join("pa"), dir.path().join("pb"));
    run(&a);
    run(&b);
    for f in ["model.crsv", "model.txt", "metrics.csv", "img_000.json", "img_001_mask.png"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
