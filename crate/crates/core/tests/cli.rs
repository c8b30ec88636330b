use std::path::Path;
use std::process::{Command, Output};

const OVERRIDES: [&str; 3] = [
    "cv.folds=3",
    "patch_forest.trees=10",
    "cascade.forest.trees=10",
];

fn spc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spcascade"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = spc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn with_overrides(mut args: Vec<&str>) -> Vec<&str> {
    for o in OVERRIDES {
        args.extend(["--set", o]);
    }
    args
}

fn same_file(a: &Path, b: &Path) {
    let (x, y) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(x == y, "{} differs from {}", a.display(), b.display());
}

#[test]
fn stagewise_commands_reproduce_crossval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let (cv, sw) = (dir.path().join("cv"), dir.path().join("sw"));
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let (corpus_s, cv_s, sw_s) = (s(&corpus), s(&cv), s(&sw));

    ok(&with_overrides(vec![
        "phantoms", "--count", "6", "--out", &corpus_s,
    ]));
    assert!(corpus.join("corpus.json").is_file());
    ok(&with_overrides(vec![
        "crossval", "--corpus", &corpus_s, "--work", &cv_s,
    ]));

    ok(&with_overrides(vec![
        "oversegment",
        "--corpus",
        &corpus_s,
        "--work",
        &sw_s,
    ]));
    for fold in ["0", "1", "2"] {
        for stage in ["train-patch-rf", "label", "train-cascade", "segment"] {
            ok(&with_overrides(vec![
                stage, "--corpus", &corpus_s, "--work", &sw_s, "--fold", fold,
            ]));
        }
    }
    let eval = ok(&with_overrides(vec![
        "evaluate", "--corpus", &corpus_s, "--work", &sw_s,
    ]));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("dice"));

    same_file(&cv.join("report.json"), &sw.join("report.json"));
    for fold in 0..3 {
        for f in ["kde.json", "patch_rf.csrf", "cascade.cscd"] {
            let rel = Path::new(&format!("fold_{fold}")).join(f);
            same_file(&cv.join(&rel), &sw.join(&rel));
        }
    }
}

#[test]
fn evaluate_pair_and_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let c = corpus.to_str().unwrap();
    ok(&["phantoms", "--count", "1", "--out", c]);
    let gt = corpus.join("phantom_000_gt");
    let gt_s = gt.to_str().unwrap();
    let report = dir.path().join("pair.json");
    let out = ok(&[
        "evaluate",
        "--pred",
        gt_s,
        "--gt",
        gt_s,
        "--out",
        report.to_str().unwrap(),
    ]);
    let csv = String::from_utf8_lossy(&out.stdout).into_owned();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    for metric in ["dice", "jaccard", "precision", "recall"] {
        let i = header.iter().position(|h| *h == metric).unwrap();
        assert_eq!(row[i].parse::<f64>().unwrap(), 1.0, "{metric}");
    }
    assert!(report.is_file());

    let png_dir = dir.path().join("png");
    let vol = corpus.join("phantom_000");
    ok(&[
        "overlay",
        "--volume",
        vol.to_str().unwrap(),
        "--gt",
        gt_s,
        "--pred",
        gt_s,
        "--slice",
        "8",
        "--out",
        png_dir.to_str().unwrap(),
    ]);
    let names: Vec<String> = std::fs::read_dir(&png_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 1);
    assert!(names[0].ends_with("_z008_dice1.0000.png"), "{}", names[0]);
    let bytes = std::fs::read(png_dir.join(&names[0])).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let m = missing.to_str().unwrap();
    assert_eq!(
        spc(&["crossval", "--corpus", m, "--work", m]).status.code(),
        Some(3)
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"no_such_field\": 1}").unwrap();
    let out = spc(&["--config", bad.to_str().unwrap(), "phantoms", "--out", m]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        spc(&["--set", "cv.folds=1", "phantoms", "--out", m])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        spc(&["--set", "nonsense", "phantoms", "--out", m])
            .status
            .code(),
        Some(2)
    );
}
