//! C ABI bindings.
//!
//! Objects cross the boundary as opaque handles (`FsCloud`, `FsModel`) created and
//! destroyed by this library. Every fallible call returns an [`FsStatus`]; on failure
//! a human-readable message is available from [`fs_last_error_message`] on the same
//! thread until the next failing call. Label outputs use `-1` for outliers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use facetseg::linalg::Mat;
use facetseg::matchlift::solve_matchlift;
use facetseg::pipeline::segment;
use facetseg::rgs::{rgs_segment, RgsParams};
use facetseg::rounding::round_clusters;
use facetseg::{AnalyticPredictor, Clustering, Error, MlpModel, PairMatrix, PairPredictor, PipelineConfig, Point, PointCloud, SolverParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// Empty, degenerate or non-finite geometry.
    Degenerate = 5,
    /// The solver hit its iteration limit. Outputs hold the last iterate.
    NotConverged = 6,
    /// The output buffer length does not match the input.
    SizeMismatch = 7,
    Panic = 8,
    Internal = 9,
}

/// Opaque point cloud.
pub struct FsCloud(PointCloud);

/// Opaque trained pair predictor.
pub struct FsModel(MlpModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: FsStatus, msg: impl Into<String>) -> FsStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> FsStatus {
    match e {
        Error::Io { .. } => FsStatus::Io,
        Error::Format { .. } | Error::Json(_) => FsStatus::Format,
        Error::EmptyCloud
        | Error::DegenerateCloud
        | Error::NonFinitePoint(_)
        | Error::DegenerateNeighborhood(_)
        | Error::DegeneratePatch(_)
        | Error::DegenerateSpec(_) => FsStatus::Degenerate,
        Error::NotConverged(_) => FsStatus::NotConverged,
        Error::SizeMismatch(..) | Error::DimensionMismatch { .. } | Error::IndexMismatch(_) => FsStatus::SizeMismatch,
        Error::InvalidInput(_) | Error::InvalidParameter(_) | Error::InvalidIndex { .. } | Error::NegativeSigma(_) => {
            FsStatus::InvalidArgument
        }
        _ => FsStatus::Internal,
    }
}

fn from_error(e: Error) -> FsStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

/// Runs `f`, converting panics into [`FsStatus::Panic`].
fn guard(f: impl FnOnce() -> FsStatus) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(FsStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<String, FsStatus> {
    if path.is_null() {
        return Err(fail(FsStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(FsStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn write_labels(c: &Clustering, out: *mut i64, len: usize) -> FsStatus {
    if out.is_null() {
        return fail(FsStatus::NullPointer, "label buffer is null");
    }
    if len != c.len() {
        return fail(FsStatus::SizeMismatch, format!("label buffer holds {len} entries, need {}", c.len()));
    }
    let out = unsafe { std::slice::from_raw_parts_mut(out, len) };
    out.copy_from_slice(&c.to_labels());
    FsStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the next
/// failing call on this thread.
#[no_mangle]
pub extern "C" fn fs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Reads an ASCII PLY file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_cloud_read_ply(path: *const c_char, out: *mut *mut FsCloud) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return fail(FsStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match facetseg::ply::read_cloud(&path) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(FsCloud(c)));
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Builds a cloud from `n` points stored as `x0 y0 z0 x1 ...`.
///
/// # Safety
/// `xyz` must point to `3 * n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fs_cloud_from_xyz(xyz: *const f64, n: usize, out: *mut *mut FsCloud) -> FsStatus {
    guard(|| {
        if out.is_null() || (xyz.is_null() && n > 0) {
            return fail(FsStatus::NullPointer, "xyz or out is null");
        }
        let coords = if n == 0 { &[][..] } else { std::slice::from_raw_parts(xyz, 3 * n) };
        let points: Vec<Point> = coords.chunks_exact(3).map(|c| Point::new(c[0], c[1], c[2])).collect();
        let cloud = PointCloud::new("ffi", points);
        if let Err(e) = cloud.validate() {
            return from_error(e);
        }
        *out = Box::into_raw(Box::new(FsCloud(cloud)));
        FsStatus::Ok
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_cloud_len(cloud: *const FsCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies the coordinates into `xyz`, which must hold `3 * len` doubles.
///
/// # Safety
/// `cloud` must be a live handle and `xyz` must point to `3 * len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_cloud_points(cloud: *const FsCloud, xyz: *mut f64, len: usize) -> FsStatus {
    guard(|| {
        let Some(c) = cloud.as_ref() else {
            return fail(FsStatus::NullPointer, "cloud is null");
        };
        if xyz.is_null() {
            return fail(FsStatus::NullPointer, "xyz is null");
        }
        if len != c.0.len() {
            return fail(FsStatus::SizeMismatch, format!("buffer holds {len} points, cloud has {}", c.0.len()));
        }
        let out = std::slice::from_raw_parts_mut(xyz, 3 * len);
        for (dst, p) in out.chunks_exact_mut(3).zip(&c.0.points) {
            dst.copy_from_slice(&p.to_array());
        }
        FsStatus::Ok
    })
}

/// Translates and scales the cloud in place into the unit box.
///
/// # Safety
/// `cloud` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_cloud_normalize(cloud: *mut FsCloud) -> FsStatus {
    guard(|| {
        let Some(c) = cloud.as_mut() else {
            return fail(FsStatus::NullPointer, "cloud is null");
        };
        match facetseg::geometry::normalize(&c.0) {
            Ok(n) => {
                c.0 = n;
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a cloud. Null is ignored.
///
/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_cloud_free(cloud: *mut FsCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Loads a model saved by `facetseg train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_model_load(path: *const c_char, out: *mut *mut FsModel) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return fail(FsStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match MlpModel::load(&path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(FsModel(m)));
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_model_free(model: *mut FsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Region-growing baseline. `alpha_deg` is the normal angle threshold in degrees;
/// `min_cluster == 0` selects the default minimum size. Writes one label per point.
///
/// # Safety
/// `cloud` must be a live handle and `labels` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn fs_rgs_segment(
    cloud: *const FsCloud,
    k: usize,
    alpha_deg: f64,
    gamma: f64,
    min_cluster: usize,
    labels: *mut i64,
    len: usize,
) -> FsStatus {
    guard(|| {
        let Some(c) = cloud.as_ref() else {
            return fail(FsStatus::NullPointer, "cloud is null");
        };
        let params = RgsParams { min_cluster_size: (min_cluster > 0).then_some(min_cluster), ..RgsParams::from_degrees(k, alpha_deg, gamma) };
        match rgs_segment(&c.0, &params) {
            Ok(cl) => write_labels(&cl, labels, len),
            Err(e) => from_error(e),
        }
    })
}

fn run_segment(cloud: *const FsCloud, predictor: &dyn PairPredictor, m: usize, labels: *mut i64, len: usize) -> FsStatus {
    let Some(c) = (unsafe { cloud.as_ref() }) else {
        return fail(FsStatus::NullPointer, "cloud is null");
    };
    let config = PipelineConfig { m, ..PipelineConfig::default() };
    match segment(&c.0, predictor, &config) {
        Ok(s) => {
            let status = write_labels(&s.points, labels, len);
            match s.result.lifted {
                Some(l) if !l.converged && status == FsStatus::Ok => fail(
                    FsStatus::NotConverged,
                    format!("solver stopped after {} iterations; labels come from the last iterate", l.iterations),
                ),
                _ => status,
            }
        }
        Err(e) => from_error(e),
    }
}

/// Full pipeline with the geometric predictor. Writes one label per point; returns
/// `NotConverged` (labels still written) if the solver hit its iteration limit.
///
/// # Safety
/// `cloud` must be a live handle and `labels` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn fs_segment_analytic(cloud: *const FsCloud, m: usize, labels: *mut i64, len: usize) -> FsStatus {
    guard(|| run_segment(cloud, &AnalyticPredictor::default(), m, labels, len))
}

/// Full pipeline with a trained model. Same outputs as [`fs_segment_analytic`].
///
/// # Safety
/// `cloud` and `model` must be live handles and `labels` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn fs_segment_with_model(
    cloud: *const FsCloud,
    model: *const FsModel,
    m: usize,
    labels: *mut i64,
    len: usize,
) -> FsStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(FsStatus::NullPointer, "model is null");
        };
        run_segment(cloud, &model.0, m, labels, len)
    })
}

unsafe fn square_arg(x: *const f64, n: usize) -> Result<Mat, FsStatus> {
    if x.is_null() {
        return Err(fail(FsStatus::NullPointer, "matrix is null"));
    }
    if n == 0 {
        return Err(fail(FsStatus::InvalidArgument, "matrix is empty"));
    }
    Ok(Mat::from_row_major(n, n, std::slice::from_raw_parts(x, n * n).to_vec()))
}

/// Solves the lifted problem for the `n x n` row-major soft matrix `x_in` and writes
/// the `n x n` solution to `x_out`. `tol <= 0` or `max_iter == 0` select defaults.
/// `NotConverged` still writes the last iterate.
///
/// # Safety
/// `x_in` must point to `n * n` doubles and `x_out` to `n * n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_matchlift_solve(
    x_in: *const f64,
    n: usize,
    m: usize,
    tol: f64,
    max_iter: usize,
    x_out: *mut f64,
) -> FsStatus {
    guard(|| {
        let x = match square_arg(x_in, n) {
            Ok(x) => x,
            Err(s) => return s,
        };
        if x_out.is_null() {
            return fail(FsStatus::NullPointer, "x_out is null");
        }
        let input = match PairMatrix::soft(n, x.into_vec()) {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        let defaults = SolverParams::default();
        let params = SolverParams {
            tol: if tol > 0.0 { tol } else { defaults.tol },
            max_iter: if max_iter > 0 { max_iter } else { defaults.max_iter },
            ..defaults
        };
        let (solution, status) = match solve_matchlift(&input, m, &params) {
            Ok(s) => (s, FsStatus::Ok),
            Err(e) => {
                let status = status_of(&e);
                let msg = e.to_string();
                match e.into_partial_solution() {
                    Ok(s) => {
                        set_error(msg);
                        (s, status)
                    }
                    Err(e) => return from_error(e),
                }
            }
        };
        std::slice::from_raw_parts_mut(x_out, n * n).copy_from_slice(solution.x.as_slice());
        status
    })
}

/// Rounds an `n x n` row-major matrix into clusters, one label per row.
///
/// # Safety
/// `x` must point to `n * n` doubles and `labels` to `n` writable values.
#[no_mangle]
pub unsafe extern "C" fn fs_round_clusters(x: *const f64, n: usize, m: usize, labels: *mut i64) -> FsStatus {
    guard(|| {
        let x = match square_arg(x, n) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match round_clusters(&x, m) {
            Ok(c) => write_labels(&c, labels, n),
            Err(e) => from_error(e),
        }
    })
}
