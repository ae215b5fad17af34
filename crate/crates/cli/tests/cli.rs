use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparseg::localization::{localize, LocalizationOptions};
use sparseg::metrics::voe;
use sparseg::phantom::{generate_phantom, PhantomSpec};
use sparseg::volume::{load_metaimage, save_metaimage, Geometry, Mask3D, Volume3D};

fn sparseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparseg")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes phantom `seed` as `<name>.mhd` and `<name>_liver.mhd`.
fn write_phantom(dir: &Path, name: &str, seed: u64, side: usize) -> (PathBuf, PathBuf) {
    let p = generate_phantom(&PhantomSpec {
        dims: [side; 3],
        seed,
        ..Default::default()
    })
    .unwrap();
    let v = dir.join(format!("{name}.mhd"));
    let m = dir.join(format!("{name}_liver.mhd"));
    save_metaimage(&p.volume, &v).unwrap();
    save_metaimage(&p.liver.to_volume(), &m).unwrap();
    (v, m)
}

fn load_mask(p: &Path) -> Mask3D {
    Mask3D::from_volume(&load_metaimage(p).unwrap())
}

/// Small dictionaries keep the CLI tests quick.
fn quick_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(
        &p,
        r#"{"dictionaries": {"feature_atoms": 16, "shape_atoms": 32, "iterations": 8}}"#,
    )
    .unwrap();
    p
}

fn train_into(dir: &Path, side: usize) -> PathBuf {
    let (v1, m1) = write_phantom(dir, "a", 1, side);
    let (v2, m2) = write_phantom(dir, "b", 2, side);
    let cfg = quick_config(dir);
    let out = dir.join("dicts");
    let o = sparseg(&["train", "--case", s(&v1), s(&m1), "--case", s(&v2), s(&m2), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn train_writes_three_dictionaries_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path(), 32);
    for f in ["liver_dictionary", "nonliver_dictionary", "shape_dictionary"] {
        assert!(out.join(format!("{f}.bin")).exists(), "{f}");
    }
    let log = std::fs::read_to_string(out.join("training_log.csv")).unwrap();
    let mut rows = 0;
    for line in log.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (coded, updated): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(updated <= coded * (1.0 + 1e-12), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 3 * 8);

    let first = std::fs::read(out.join("liver_dictionary.bin")).unwrap();
    let shape = std::fs::read(out.join("shape_dictionary.bin")).unwrap();
    let again = train_into(dir.path(), 32);
    assert_eq!(std::fs::read(again.join("liver_dictionary.bin")).unwrap(), first);
    assert_eq!(std::fs::read(again.join("shape_dictionary.bin")).unwrap(), shape);
}

#[test]
fn train_without_cases_is_a_usage_error() {
    let o = sparseg(&["train"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--case"));
    assert_eq!(code(&sparseg(&["no-such-command"])), 1);
}

#[test]
fn segment_end_to_end_and_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let dicts = train_into(dir.path(), 64);
    let (vol, truth) = write_phantom(dir.path(), "test", 0, 64);

    let out = dir.path().join("seg.mhd");
    let o = sparseg(&["segment", s(&vol), "--dictionaries", s(&dicts), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e = voe(&load_mask(&out), &load_mask(&truth)).unwrap();
    assert!(e <= 15.0, "VOE {e}");
    let trace = std::fs::read_to_string(dir.path().join("seg_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,energy,interior_volume"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("seg_trace.json")).unwrap()).unwrap();
    assert_eq!(summary["lambda"], 0.7);

    let out = dir.path().join("box.mhd");
    let o = sparseg(&[
        "segment", s(&vol), "--dictionaries", s(&dicts), "--out", s(&out), "--max-outer", "1", "--inner-steps", "0",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = load_metaimage(&vol).unwrap();
    let seed = localize(&v, &LocalizationOptions::default()).unwrap();
    assert_eq!(load_mask(&out), seed.mask(*v.geometry()));
}

#[test]
fn segment_failure_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (vol, _) = write_phantom(dir.path(), "p", 0, 32);
    let missing = dir.path().join("nowhere");
    let o = sparseg(&["segment", s(&vol), "--dictionaries", s(&missing)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));

    let dicts = train_into(dir.path(), 32);
    let air = dir.path().join("air.mhd");
    save_metaimage(&Volume3D::filled(Geometry::unit([32; 3]).unwrap(), -1000.0), &air).unwrap();
    let o = sparseg(&["segment", s(&air), "--dictionaries", s(&dicts), "--out", s(&dir.path().join("x.mhd"))]);
    assert_eq!(code(&o), 2);

    // a very stiff surface term collapses the seed box
    let out = dir.path().join("collapsed.mhd");
    let o = sparseg(&["segment", s(&vol), "--dictionaries", s(&dicts), "--out", s(&out), "--lambda", "100"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("collapsed_trace.csv").exists());
    assert!(!out.exists());
}

#[test]
fn evaluate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = write_phantom(dir.path(), "p", 0, 32);
    let o = sparseg(&["evaluate", s(&m), s(&m), "--json"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["total"], 100.0);

    // the averaged metric vector scores like the averaged scores except for
    // VD, whose signed mean hides the per-case magnitudes
    let o = sparseg(&["evaluate", "--metrics", "6.44,1.53,0.95,1.58,15.92", "--json"]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for (k, want) in [(0, 74.9), (2, 76.3), (3, 78.1), (4, 79.1)] {
        let got = r["scores"][k].as_f64().unwrap();
        assert!((got - want).abs() <= 0.3, "score {k}: {got}");
    }
    assert_eq!(code(&sparseg(&["evaluate", "--metrics", "1,2,3"])), 1);

    let table = String::from_utf8(sparseg(&["evaluate", s(&m), s(&m)]).stdout).unwrap();
    assert!(table.contains("VOE") && table.contains("Total") && table.contains("100.0"));

    let empty = dir.path().join("empty.mhd");
    save_metaimage(&Volume3D::filled(Geometry::unit([32; 3]).unwrap(), 0.0), &empty).unwrap();
    assert_eq!(code(&sparseg(&["evaluate", s(&m), s(&empty)])), 1);
    let other = dir.path().join("other.mhd");
    save_metaimage(&Volume3D::filled(Geometry::unit([8; 3]).unwrap(), 1.0), &other).unwrap();
    assert_eq!(code(&sparseg(&["evaluate", s(&m), s(&other)])), 1);
}

#[test]
fn evaluate_batch_appends_mean_row() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = write_phantom(dir.path(), "p", 0, 32);
    let list = dir.path().join("cases.csv");
    std::fs::write(&list, "case,result,truth\nself,p_liver.mhd,p_liver.mhd\nrow,6.44,1.53,0.95,1.58,15.92\n").unwrap();
    let o = sparseg(&["evaluate", "--batch", s(&list)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("self,0,100"));
    assert!(lines[3].starts_with("mean,"));
    let _ = m;
}

/// Per-case metric columns of a ten-case challenge evaluation.
const TEN_CASES: [[f64; 5]; 10] = [
    [6.74, 2.45, 0.94, 1.48, 14.98],
    [7.49, 3.35, 1.10, 2.18, 25.61],
    [5.30, 0.92, 1.01, 1.57, 22.21],
    [6.32, -0.81, 0.92, 1.55, 13.98],
    [6.20, 1.62, 1.02, 1.90, 19.40],
    [6.55, -0.15, 0.99, 1.51, 13.14],
    [6.30, 3.70, 0.89, 1.33, 10.34],
    [6.17, 3.39, 0.97, 1.51, 11.81],
    [7.53, 1.92, 0.88, 1.36, 17.09],
    [5.78, -1.05, 0.81, 1.40, 10.61],
];

#[test]
fn evaluate_batch_of_ten_cases_reproduces_average_row() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("ten_cases.csv");
    let mut text = String::new();
    for (i, v) in TEN_CASES.iter().enumerate() {
        let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!("{},{}\n", i + 1, vals.join(",")));
    }
    std::fs::write(&list, text).unwrap();
    let o = sparseg(&["evaluate", "--batch", s(&list)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    let mean: Vec<f64> = out.lines().last().unwrap().split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    // columns: voe, voe score, vd, vd score, ..., total
    let expected_scores = [74.9, 89.7, 76.3, 78.1, 79.1];
    for (k, want) in expected_scores.iter().enumerate() {
        assert!((mean[2 * k + 1] - want).abs() <= 0.3, "score {k}: {}", mean[2 * k + 1]);
    }
    assert!((mean[10] - 79.6).abs() <= 0.3, "total {}", mean[10]);
}

fn red_pixels(p: &Path) -> usize {
    let img = image::open(p).unwrap().to_rgb8();
    img.pixels().filter(|px| px.0 == [255, 0, 0]).count()
}

/// Mask pixels of one axial slice with a 4-neighbour outside the slice or the mask.
fn boundary_count(m: &Mask3D, z: usize) -> usize {
    let [nx, ny, _] = m.dims();
    let at = |x: isize, y: isize| x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny && m.get(x as usize, y as usize, z);
    let mut n = 0;
    for y in 0..ny as isize {
        for x in 0..nx as isize {
            if at(x, y) && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !at(x + dx, y + dy)) {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn export_slices_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let (v, m) = write_phantom(dir.path(), "p", 0, 64);
    let out = dir.path().join("png");
    let o = sparseg(&["export-slices", s(&v), s(&m), "--plane", "axial", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 64);
    let mask = load_mask(&m);
    for (z, f) in files.iter().enumerate() {
        assert_eq!(red_pixels(f), boundary_count(&mask, z), "slice {z}");
    }

    let empty = dir.path().join("empty.mhd");
    save_metaimage(&Mask3D::empty(*mask.geometry()).to_volume(), &empty).unwrap();
    let out = dir.path().join("plain");
    let o = sparseg(&["export-slices", s(&v), s(&empty), "--plane", "coronal", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 64);
    assert!(files.iter().all(|f| red_pixels(f) == 0));

    assert_eq!(code(&sparseg(&["export-slices", s(&v), s(&m), "--plane", "oblique", "--out", s(&out)])), 1);
}

#[test]
fn thread_cap_must_be_positive() {
    let o = Command::new(env!("CARGO_BIN_EXE_sparseg"))
        .args(["evaluate", "--metrics", "0,0,0,0,0"])
        .env("SPARSEG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_sparseg"))
        .args(["evaluate", "--metrics", "0,0,0,0,0"])
        .env("SPARSEG_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
