//! C ABI for the fruitfield pipeline.
//!
//! Objects cross the boundary as opaque handles created by `ff_*_new` style
//! constructors and released with the matching `ff_*_free`. Every fallible
//! call returns an [`FfStatus`]; on failure the message is available from
//! [`ff_last_error`] on the same thread until the next failing call.
//! Strings returned to the caller are owned by the caller and must be
//! released with [`ff_string_free`]. Panics never unwind into C: they are
//! reported as [`FfStatus::Panic`].
//!
//! The header `include/fruitfield.h` is generated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fruitfield::config::PipelineConfig;
use fruitfield::count::{self, CountReport};
use fruitfield::eval::{self, Matching};
use fruitfield::export::{self, FruitPointCloud};
use fruitfield::pipeline::{Pipeline, Stage};
use fruitfield::{Error, Vec3};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    /// A pointer was null, a string was not UTF-8, or a value was out of
    /// range.
    InvalidArgument = 1,
    /// Same meaning as the command-line exit code 2.
    InvalidConfig = 2,
    /// Same meaning as the command-line exit code 3.
    MissingArtifact = 3,
    Io = 4,
    /// Malformed PLY, JSON or checkpoint input.
    Parse = 5,
    /// Non-finite values or diverged training.
    Numeric = 6,
    EmptyPointSet = 7,
    /// The scene generator could not place the requested fruits.
    Packing = 8,
    Panic = 9,
}

/// Pipeline configuration.
pub struct FfConfig(PipelineConfig);

/// Fruit point cloud.
pub struct FfPointCloud(FruitPointCloud);

/// Result of counting a point cloud.
pub struct FfCountReport(CountReport);

/// Detection metrics of predicted centers against ground truth.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FfMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FfStatus {
    match e {
        Error::InvalidArgument(_) => FfStatus::InvalidArgument,
        Error::InvalidConfig(_) => FfStatus::InvalidConfig,
        Error::MissingArtifact { .. } => FfStatus::MissingArtifact,
        Error::Io { .. } | Error::Png(_) => FfStatus::Io,
        Error::Parse { .. } | Error::Checkpoint { .. } | Error::Json(_) => FfStatus::Parse,
        Error::NonFinite { .. } | Error::Diverged { .. } => FfStatus::Numeric,
        Error::EmptyPointSet => FfStatus::EmptyPointSet,
        Error::PackingFailure { .. } => FfStatus::Packing,
    }
}

struct Fail(FfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(FfStatus::InvalidArgument, msg.into())
}

/// Runs `f`, turning errors and panics into a status and the thread's last
/// error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn points_arg(xyz: *const f64, n: usize, name: &str) -> Result<Vec<Vec3>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if xyz.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    let flat = std::slice::from_raw_parts(xyz, 3 * n);
    Ok(flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn ff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ff_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_config_default(out: *mut *mut FfConfig) -> FfStatus {
    guard(|| {
        *out_arg(out, "out")? = boxed(FfConfig(PipelineConfig::default()));
        Ok(())
    })
}

/// Configuration from a JSON document; absent fields take defaults. Value
/// invariants are not checked here; see [`ff_config_validate`].
///
/// # Safety
/// `json` must be a nul-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_config_from_json(json: *const c_char, out: *mut *mut FfConfig) -> FfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = PipelineConfig::from_json_str(str_arg(json, "json")?, &[])?;
        *out = boxed(FfConfig(cfg));
        Ok(())
    })
}

/// Applies one `dotted.path=value` override, with the value read as JSON
/// when it parses and as a string otherwise. The configuration is left
/// unchanged on failure.
///
/// # Safety
/// `config` must be a live handle and `assignment` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ff_config_set(config: *mut FfConfig, assignment: *const c_char) -> FfStatus {
    guard(|| {
        let cfg = out_arg(config, "config")?;
        let assignment = str_arg(assignment, "assignment")?;
        let text = serde_json::to_string(&cfg.0).map_err(Error::from)?;
        cfg.0 = PipelineConfig::from_json_str(&text, &[assignment.to_string()])?;
        Ok(())
    })
}

/// Checks every value invariant. On failure the last error lists one
/// problem per line.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_config_validate(config: *const FfConfig) -> FfStatus {
    guard(|| Ok(ref_arg(config, "config")?.0.validate()?))
}

/// The configuration as JSON. Free the result with [`ff_string_free`].
///
/// # Safety
/// `config` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_config_to_json(config: *const FfConfig, out: *mut *mut c_char) -> FfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = serde_json::to_string_pretty(&ref_arg(config, "config")?.0).map_err(Error::from)?;
        *out = into_c_string(text);
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle; it is dangling afterwards.
#[no_mangle]
pub unsafe extern "C" fn ff_config_free(config: *mut FfConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs one pipeline stage (`synth`, `train`, `export`, `count`, `eval`,
/// `e2e` or `sweep`) in the configuration's output directory. On success
/// `manifest_out`, when not null, receives the run manifest as JSON.
///
/// # Safety
/// `config` must be a live handle, `stage` a nul-terminated string and
/// `manifest_out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_run_stage(
    config: *const FfConfig,
    stage: *const c_char,
    manifest_out: *mut *mut c_char,
) -> FfStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        let name = str_arg(stage, "stage")?;
        let stage = Stage::parse(name).ok_or_else(|| invalid(format!("unknown stage `{name}`")))?;
        let manifest = Pipeline::new(cfg.0.clone())?.quiet(true).run(stage)?;
        if let Some(out) = manifest_out.as_mut() {
            *out = into_c_string(serde_json::to_string(&manifest).map_err(Error::from)?);
        }
        Ok(())
    })
}

/// Point cloud from `n` packed `x, y, z` triples.
///
/// # Safety
/// `xyz` must point to `3 * n` doubles (it may be null when `n` is 0) and
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_point_cloud_from_xyz(xyz: *const f64, n: usize, out: *mut *mut FfPointCloud) -> FfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pts = points_arg(xyz, n, "xyz")?;
        if !pts.iter().all(|p| p.is_finite()) {
            return Err(Fail(FfStatus::Numeric, "non-finite coordinate".into()));
        }
        *out = boxed(FfPointCloud(FruitPointCloud::from_points(pts)));
        Ok(())
    })
}

/// Reads an ASCII PLY point cloud.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_point_cloud_read_ply(path: *const c_char, out: *mut *mut FfPointCloud) -> FfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cloud = export::read_ply(Path::new(str_arg(path, "path")?))?;
        *out = boxed(FfPointCloud(cloud));
        Ok(())
    })
}

/// Writes the cloud as ASCII PLY.
///
/// # Safety
/// `cloud` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ff_point_cloud_write_ply(cloud: *const FfPointCloud, path: *const c_char) -> FfStatus {
    guard(|| {
        let cloud = ref_arg(cloud, "cloud")?;
        Ok(export::write_ply(&cloud.0, Path::new(str_arg(path, "path")?))?)
    })
}

/// Number of points; 0 for null.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_point_cloud_len(cloud: *const FfPointCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `cloud` must be null or a live handle; it is dangling afterwards.
#[no_mangle]
pub unsafe extern "C" fn ff_point_cloud_free(cloud: *mut FfPointCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Counts fruits in `cloud` with the configuration's counting section.
///
/// # Safety
/// `cloud` and `config` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_count(
    cloud: *const FfPointCloud,
    config: *const FfConfig,
    out: *mut *mut FfCountReport,
) -> FfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let report = count::count(&ref_arg(cloud, "cloud")?.0, &ref_arg(config, "config")?.0.count)?;
        *out = boxed(FfCountReport(report));
        Ok(())
    })
}

/// Number of counted fruits; 0 for null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_count_report_total(report: *const FfCountReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.total)
}

/// Copies up to `capacity` fruit centers as packed `x, y, z` triples into
/// `xyz` and returns the total number of centers. Call with `capacity` 0
/// to query the size.
///
/// # Safety
/// `report` must be null or a live handle; `xyz` must have room for
/// `3 * capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ff_count_report_centers(report: *const FfCountReport, xyz: *mut f64, capacity: usize) -> usize {
    let Some(r) = report.as_ref() else { return 0 };
    let centers = &r.0.fruit_centers;
    if !xyz.is_null() {
        let out = std::slice::from_raw_parts_mut(xyz, 3 * capacity.min(centers.len()));
        for (dst, c) in out.chunks_exact_mut(3).zip(centers) {
            dst.copy_from_slice(&c.0);
        }
    }
    centers.len()
}

/// The full report as JSON. Free the result with [`ff_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_count_report_to_json(report: *const FfCountReport, out: *mut *mut c_char) -> FfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = serde_json::to_string_pretty(&ref_arg(report, "report")?.0).map_err(Error::from)?;
        *out = into_c_string(text);
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle; it is dangling afterwards.
#[no_mangle]
pub unsafe extern "C" fn ff_count_report_free(report: *mut FfCountReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Matches predicted centers to ground-truth centers within distance `tau`
/// and reports precision, recall and F1. `optimal` nonzero selects the
/// minimum-cost one-to-one matching instead of the greedy nearest-first
/// rule.
///
/// # Safety
/// `pred` and `gt` must point to `3 * n_pred` and `3 * n_gt` doubles (null
/// is allowed for zero counts); `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ff_match_centers(
    pred: *const f64,
    n_pred: usize,
    gt: *const f64,
    n_gt: usize,
    tau: f64,
    optimal: i32,
    out: *mut FfMetrics,
) -> FfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pred = points_arg(pred, n_pred, "pred")?;
        let gt = points_arg(gt, n_gt, "gt")?;
        let method = if optimal != 0 { Matching::Optimal } else { Matching::Greedy };
        let r = eval::match_centers(&pred, &gt, tau, method)?;
        *out = FfMetrics {
            true_positives: r.true_positives,
            false_positives: r.false_positives,
            false_negatives: r.false_negatives,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        };
        Ok(())
    })
}
