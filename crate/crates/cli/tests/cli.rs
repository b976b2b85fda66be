use std::path::Path;
use std::process::{Command, Output};

fn wavesplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavesplat"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = wavesplat(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, multispectral: bool) {
    let mut args = vec![
        "synth",
        "--seed",
        "3",
        "--gaussians",
        "6",
        "--views",
        "5",
        "--size",
        "32",
        "--out",
    ];
    args.push(dir.to_str().unwrap());
    if multispectral {
        args.push("--multispectral");
    }
    ok(&args);
}

fn short_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, format!(r#"{{"iterations": 30{extra}}}"#)).unwrap();
    path.to_str().unwrap().to_string()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn decompose_names_bands_by_level() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, false);
    let input = scene.join("images/0.png");
    let one = tmp.path().join("one");
    ok(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--levels",
        "1",
        "--out",
        one.to_str().unwrap(),
    ]);
    assert_eq!(
        files(&one),
        ["hh.png", "hl.png", "lh.png", "ll.png", "subbands.json"]
    );
    let two = tmp.path().join("two");
    ok(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--levels",
        "2",
        "--out",
        two.to_str().unwrap(),
    ]);
    let names = files(&two);
    assert_eq!(names.len(), 9);
    for l in 1..=2 {
        for b in ["ll", "lh", "hl", "hh"] {
            assert!(names.contains(&format!("l{l}_{b}.png")), "{names:?}");
        }
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(two.join("subbands.json")).unwrap()).unwrap();
    assert_eq!(meta["levels"], 2);
    assert_eq!(meta["bands"]["l2_ll"]["width"], 8);
}

#[test]
fn lfmap_writes_values_in_unit_range() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, false);
    let out = tmp.path().join("lf");
    ok(&[
        "lfmap",
        "--input",
        scene.join("images/1.png").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let raw = std::fs::read(out.join("lfmap.f32")).unwrap();
    assert_eq!(raw.len(), 16 * 16 * 4);
    for c in raw.chunks_exact(4) {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(out.join("lfmap.png").exists());
}

#[test]
fn missing_input_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wavesplat(&[
        "decompose",
        "--input",
        "/nonexistent/x.png",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = wavesplat(&[
        "train",
        "--scene",
        "/nonexistent",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, true);
    synth(&b, true);
    for rel in [
        "cameras.json",
        "points.json",
        "ground_truth.wspl",
        "images/2.png",
        "nir/4.png",
    ] {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn train_render_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, false);
    let cfg = short_config(tmp.path(), "");
    let run = tmp.path().join("run");
    let s = scene.to_str().unwrap();
    ok(&[
        "train",
        "--scene",
        s,
        "--config",
        &cfg,
        "--out",
        run.to_str().unwrap(),
        "--n-train",
        "3",
    ]);
    let ckpt = run.join("checkpoint.wspl");
    assert!(ckpt.exists());
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    assert_eq!(
        log.lines().next(),
        Some("iter,l1,ssim,gdwt,pdwt,total,n_gaussians,train_psnr")
    );
    assert_eq!(log.lines().count(), 31);

    let c = ckpt.to_str().unwrap();
    let png = tmp.path().join("view.png");
    ok(&[
        "render",
        "--checkpoint",
        c,
        "--scene",
        s,
        "--view",
        "1",
        "--out",
        png.to_str().unwrap(),
    ]);
    assert!(png.exists());
    let nir = wavesplat(&[
        "render",
        "--checkpoint",
        c,
        "--scene",
        s,
        "--view",
        "1",
        "--modality",
        "nir",
        "--out",
        png.to_str().unwrap(),
    ]);
    assert_eq!(nir.status.code(), Some(1));

    let md = ok(&[
        "eval",
        "--checkpoint",
        c,
        "--scene",
        s,
        "--n-train",
        "3",
        "--format",
        "markdown",
    ]);
    let text = String::from_utf8(md.stdout).unwrap();
    assert!(
        text.starts_with("| Scene | Config | Modality | PSNR | SSIM | LPIPS |"),
        "{text}"
    );
    assert!(text.contains("| scene | eval | rgb |"), "{text}");
    let csv = ok(&["eval", "--checkpoint", c, "--scene", s, "--n-train", "3"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
}

#[test]
fn benchmark_records_failed_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, false);
    let cfg = short_config(tmp.path(), "");
    let out = tmp.path().join("bench");
    let res = ok(&[
        "benchmark",
        "--scenes",
        scene.to_str().unwrap(),
        "--seeds",
        "0,1",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    // two single-modality presets, two seeds, one rgb row each
    assert_eq!(results.lines().count(), 1 + 4, "{results}");
    let failures = std::fs::read_to_string(out.join("failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 1 + 4, "{failures}");
    assert!(
        failures.lines().skip(1).all(|l| l.contains(",multi")),
        "{failures}"
    );
    let md = String::from_utf8(res.stdout).unwrap();
    assert!(md.contains("failed"), "{md}");
    assert!(out.join("scene/single/1/checkpoint.wspl").exists());
}
