use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use spcascade::commands::{
    cmd_label, cmd_oversegment, cmd_phantoms, cmd_segment, cmd_train_cascade, cmd_train_patch_rf,
    Work,
};
use spcascade::config::PipelineConfig;
use spcascade::volume::load_mask;
use spcascade_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = spc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn phantom_metrics_and_mask_roundtrip() {
    unsafe {
        let (mut vol, mut gt) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            spc_phantom_generate(3, &mut vol, &mut gt),
            SpcStatus::SPC_OK
        );
        let mut dims = [0usize; 3];
        assert_eq!(spc_volume_dims(vol, dims.as_mut_ptr()), SpcStatus::SPC_OK);
        assert_eq!(dims, [64, 64, 16]);
        assert!(!spc_volume_data(vol).is_null());
        assert!(spc_mask_count(gt) > 0);

        let mut m = SpcMetrics::default();
        assert_eq!(spc_metrics(gt, gt, &mut m), SpcStatus::SPC_OK);
        assert_eq!(
            (m.dice, m.jaccard, m.precision, m.recall),
            (1.0, 1.0, 1.0, 1.0)
        );

        let mut body = ptr::null_mut();
        assert_eq!(spc_body_mask(vol, 500, &mut body), SpcStatus::SPC_OK);
        assert!(spc_mask_count(body) > spc_mask_count(gt));

        let dir = tempfile::tempdir().unwrap();
        let path = cstr(&dir.path().join("gt"));
        assert_eq!(spc_mask_save(gt, path.as_ptr()), SpcStatus::SPC_OK);
        let mut back = ptr::null_mut();
        assert_eq!(spc_mask_load(path.as_ptr(), &mut back), SpcStatus::SPC_OK);
        let n = spc_mask_count(gt);
        assert_eq!(spc_mask_count(back), n);
        let a = std::slice::from_raw_parts(spc_mask_data(gt), 64 * 64 * 16);
        let b = std::slice::from_raw_parts(spc_mask_data(back), 64 * 64 * 16);
        assert_eq!(a, b);

        for h in [back, body, gt] {
            spc_mask_free(h);
        }
        spc_volume_free(vol);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    unsafe {
        let mut vol = ptr::null_mut();
        let missing = CString::new("/nonexistent/volume").unwrap();
        assert_eq!(
            spc_volume_load(missing.as_ptr(), &mut vol),
            SpcStatus::SPC_MISSING_INPUT
        );
        assert!(vol.is_null());
        assert!(last_error().contains("missing input"));

        assert_eq!(
            spc_volume_load(ptr::null(), &mut vol),
            SpcStatus::SPC_NULL_POINTER
        );
        assert!(last_error().contains("path"));

        let mut m = SpcMetrics::default();
        assert_eq!(
            spc_metrics(ptr::null(), ptr::null(), &mut m),
            SpcStatus::SPC_NULL_POINTER
        );

        let (mut v1, mut g1) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(spc_phantom_generate(1, &mut v1, &mut g1), SpcStatus::SPC_OK);
        let mut small = ptr::null_mut();
        let dir = tempfile::tempdir().unwrap();
        let spec = spcascade::volume::PhantomSpec {
            dims: [32, 32, 8],
            ..Default::default()
        };
        let (_, g) = spcascade::volume::generate_phantom(&spec).unwrap();
        spcascade::volume::save_mask(&g, &dir.path().join("small")).unwrap();
        let p = cstr(&dir.path().join("small"));
        assert_eq!(spc_mask_load(p.as_ptr(), &mut small), SpcStatus::SPC_OK);
        assert_eq!(
            spc_metrics(small, g1, &mut m),
            SpcStatus::SPC_INVALID_ARGUMENT
        );
        assert!(last_error().contains("dimension"));

        spc_mask_free(small);
        spc_mask_free(g1);
        spc_volume_free(v1);
        spc_volume_free(ptr::null_mut());
        assert_eq!(spc_mask_count(ptr::null()), 0);
    }
}

#[test]
fn segmenter_matches_library_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default()
        .with_overrides(&[
            "patch_forest.trees=10".into(),
            "cascade.forest.trees=10".into(),
        ])
        .unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let corpus = cmd_phantoms(3, &cfg.phantom, &dir.path().join("corpus")).unwrap();
    let work = Work::new(&dir.path().join("work"));
    cmd_oversegment(&corpus, &work, &cfg).unwrap();
    cmd_train_patch_rf(&corpus, &work, &cfg, None).unwrap();
    cmd_label(&corpus, &work, &cfg, None).unwrap();
    cmd_train_cascade(&corpus, &work, &cfg, None).unwrap();
    cmd_segment(&corpus, &work, &cfg, None).unwrap();
    let expected = load_mask(&work.prediction(None, "phantom_001")).unwrap();

    unsafe {
        let mut seg = ptr::null_mut();
        let (c, w) = (cstr(&cfg_path), cstr(&work.dir));
        assert_eq!(
            spc_segmenter_load(c.as_ptr(), w.as_ptr(), -1, &mut seg),
            SpcStatus::SPC_OK
        );
        let mut vol = ptr::null_mut();
        let vp = cstr(&corpus.dir.join("phantom_001"));
        assert_eq!(spc_volume_load(vp.as_ptr(), &mut vol), SpcStatus::SPC_OK);
        let mut mask = ptr::null_mut();
        assert_eq!(spc_segment(seg, vol, &mut mask), SpcStatus::SPC_OK);
        let got = std::slice::from_raw_parts(spc_mask_data(mask), expected.values().len());
        assert_eq!(got, expected.values());

        let mut forest = ptr::null_mut();
        let fp = cstr(&work.patch_rf(None));
        assert_eq!(spc_forest_load(fp.as_ptr(), &mut forest), SpcStatus::SPC_OK);
        assert_eq!(spc_forest_n_features(forest), 46);
        let mut p = -1.0;
        let row = [0.5f32; 46];
        assert_eq!(
            spc_forest_predict(forest, row.as_ptr(), 46, &mut p),
            SpcStatus::SPC_OK
        );
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(
            spc_forest_predict(forest, row.as_ptr(), 45, &mut p),
            SpcStatus::SPC_INVALID_ARGUMENT
        );

        let bad = CString::new(dir.path().join("nowhere").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(
            spc_segmenter_load(ptr::null(), bad.as_ptr(), 0, &mut none),
            SpcStatus::SPC_MISSING_INPUT
        );

        spc_forest_free(forest);
        spc_mask_free(mask);
        spc_volume_free(vol);
        spc_segmenter_free(seg);
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/spcascade.h");
    let text = std::fs::read_to_string(&header).unwrap();
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|r| r.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for f in exports {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    let status = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-xc"])
        .arg(&header)
        .status();
    if let Ok(s) = status {
        assert!(s.success(), "header does not compile as C");
    }
}
