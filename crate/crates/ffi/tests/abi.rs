use std::ffi::{CStr, CString};
use std::ptr;

use fruitfield_ffi::*;

fn last_error() -> String {
    let p = ff_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Two well separated fruit shells of radius 0.04.
fn two_fruits() -> Vec<f64> {
    let mut xyz = Vec::new();
    for center in [[-0.2, 0.0, 0.0], [0.2, 0.0, 0.0]] {
        let n = 400;
        for i in 0..n {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = i as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for (k, v) in [r * phi.cos(), r * phi.sin(), z].into_iter().enumerate() {
                xyz.push(center[k] + 0.04 * v);
            }
        }
    }
    xyz
}

#[test]
fn config_round_trip_and_override() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ff_config_from_json(c(r#"{"seed": 3}"#).as_ptr(), &mut cfg), FfStatus::Ok);
        assert_eq!(ff_config_set(cfg, c("count.dbscan.eps=0.02").as_ptr()), FfStatus::Ok);
        assert_eq!(ff_config_validate(cfg), FfStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(ff_config_to_json(cfg, &mut json), FfStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        ff_string_free(json);
        assert_eq!(v["seed"], 3);
        assert_eq!(v["count"]["dbscan"]["eps"], 0.02);

        assert_eq!(ff_config_set(cfg, c("count.dbscan.epsilon=1").as_ptr()), FfStatus::InvalidConfig);
        assert!(last_error().contains("count.dbscan"), "{}", last_error());
        // A failed override leaves the handle untouched.
        assert_eq!(ff_config_validate(cfg), FfStatus::Ok);

        assert_eq!(ff_config_set(cfg, c("count.dbscan.eps=0").as_ptr()), FfStatus::Ok);
        assert_eq!(ff_config_validate(cfg), FfStatus::InvalidConfig);
        assert!(last_error().contains("count.dbscan.eps"));
        ff_config_free(cfg);
    }
}

#[test]
fn bad_arguments_are_reported_not_crashed() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ff_config_from_json(ptr::null(), &mut cfg), FfStatus::InvalidArgument);
        assert!(last_error().contains("json"));
        assert_eq!(ff_config_from_json(c("[1]").as_ptr(), &mut cfg), FfStatus::InvalidConfig);
        assert_eq!(ff_config_from_json(c("{}").as_ptr(), ptr::null_mut()), FfStatus::InvalidArgument);
        assert_eq!(ff_config_validate(ptr::null()), FfStatus::InvalidArgument);
        let nan = [f64::NAN, 0.0, 0.0];
        let mut cloud = ptr::null_mut();
        assert_eq!(ff_point_cloud_from_xyz(nan.as_ptr(), 1, &mut cloud), FfStatus::Numeric);
        assert_eq!(ff_point_cloud_len(ptr::null()), 0);
        assert_eq!(ff_count_report_total(ptr::null()), 0);
        ff_config_free(ptr::null_mut());
        ff_point_cloud_free(ptr::null_mut());
        ff_count_report_free(ptr::null_mut());
        ff_string_free(ptr::null_mut());
    }
}

#[test]
fn counts_two_fruits() {
    unsafe {
        let xyz = two_fruits();
        let mut cloud = ptr::null_mut();
        assert_eq!(ff_point_cloud_from_xyz(xyz.as_ptr(), xyz.len() / 3, &mut cloud), FfStatus::Ok);
        assert_eq!(ff_point_cloud_len(cloud), 800);
        let mut cfg = ptr::null_mut();
        assert_eq!(ff_config_default(&mut cfg), FfStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(ff_count(cloud, cfg, &mut report), FfStatus::Ok, "{}", last_error());
        assert_eq!(ff_count_report_total(report), 2);
        assert_eq!(ff_count_report_centers(report, ptr::null_mut(), 0), 2);
        let mut centers = [0.0; 6];
        assert_eq!(ff_count_report_centers(report, centers.as_mut_ptr(), 2), 2);
        assert!((centers[0] + 0.2).abs() < 1e-3 && (centers[3] - 0.2).abs() < 1e-3, "{centers:?}");

        let gt = [-0.2, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.3, 0.0];
        let mut m = FfMetrics::default();
        assert_eq!(ff_match_centers(centers.as_ptr(), 2, gt.as_ptr(), 3, 0.04, 0, &mut m), FfStatus::Ok);
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (2, 0, 1));
        assert!((m.f1 - 0.8).abs() < 1e-12);
        assert_eq!(ff_match_centers(centers.as_ptr(), 2, gt.as_ptr(), 3, 0.0, 1, &mut m), FfStatus::InvalidArgument);

        let mut json = ptr::null_mut();
        assert_eq!(ff_count_report_to_json(report, &mut json), FfStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"total\": 2"));
        ff_string_free(json);
        ff_count_report_free(report);
        ff_config_free(cfg);
        ff_point_cloud_free(cloud);
    }
}

#[test]
fn ply_round_trip_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("a.ply").to_str().unwrap());
    unsafe {
        let xyz = two_fruits();
        let mut cloud = ptr::null_mut();
        assert_eq!(ff_point_cloud_from_xyz(xyz.as_ptr(), 800, &mut cloud), FfStatus::Ok);
        assert_eq!(ff_point_cloud_write_ply(cloud, path.as_ptr()), FfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ff_point_cloud_read_ply(path.as_ptr(), &mut back), FfStatus::Ok);
        assert_eq!(ff_point_cloud_len(back), 800);
        ff_point_cloud_free(back);
        ff_point_cloud_free(cloud);
        let missing = c(dir.path().join("none.ply").to_str().unwrap());
        assert_eq!(ff_point_cloud_read_ply(missing.as_ptr(), &mut back), FfStatus::Io);
    }
}

#[test]
fn stage_errors_carry_codes() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ff_config_default(&mut cfg), FfStatus::Ok);
        let set = c(&format!("output_dir={}", dir.path().display()));
        assert_eq!(ff_config_set(cfg, set.as_ptr()), FfStatus::Ok);
        assert_eq!(ff_run_stage(cfg, c("count").as_ptr(), ptr::null_mut()), FfStatus::MissingArtifact);
        assert!(last_error().contains("export"), "{}", last_error());
        assert_eq!(ff_run_stage(cfg, c("bogus").as_ptr(), ptr::null_mut()), FfStatus::InvalidArgument);
        ff_config_free(cfg);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ff_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
