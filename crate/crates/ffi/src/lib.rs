//! C ABI over the `riskmap` library.
//!
//! Every fallible function returns an [`RmStatus`]; on failure the message
//! is available from [`rm_last_error_message`] on the same thread. Handles
//! are opaque, created by `*_new`-style functions and released with the
//! matching `*_free`. Arrays are caller-owned; matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DMatrix;
use riskmap::cli::config::parse as parse_config;
use riskmap::cli::{data::ingest, predict_surfaces, PredictedSurface};
use riskmap::clustering::cluster_surface;
use riskmap::inference::{diagnose, fit, summary_stats, waic, PosteriorDraws};
use riskmap::model::{build_time_grid, Dataset, Model, SpatialMode};
use riskmap::simulate::{generate_dataset, SimConfig};
use riskmap::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    InvalidState = 4,
    OutOfDomain = 5,
    DegenerateInput = 6,
    Numerical = 7,
    Diverged = 8,
    Initialization = 9,
    Data = 10,
    Config = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

impl From<&Error> for RmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => RmStatus::InvalidArgument,
            Error::OutOfRange(_) => RmStatus::OutOfRange,
            Error::InvalidState(_) => RmStatus::InvalidState,
            Error::OutOfDomain(_) => RmStatus::OutOfDomain,
            Error::DegenerateInput(_) => RmStatus::DegenerateInput,
            Error::Numerical(_) => RmStatus::Numerical,
            Error::Diverged(_) => RmStatus::Diverged,
            Error::Initialization(_) => RmStatus::Initialization,
            Error::Data(_) | Error::Csv(_) => RmStatus::Data,
            Error::Config(_) => RmStatus::Config,
            Error::Io(_) | Error::Json(_) => RmStatus::Io,
        }
    }
}

/// Posterior summary of one scalar quantity.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RmSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Observed subjects.
pub struct RmDataset(Dataset);

/// A model ready for sampling.
pub struct RmModel(Model);

/// Posterior draws of a fitted model.
pub struct RmDraws {
    draws: PosteriorDraws,
    names: Vec<CString>,
}

/// Kriged surfaces at prediction locations.
pub struct RmSurfaces(Vec<PredictedSurface>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(RmStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Fail>;

fn null(what: &str) -> Fail {
    Fail(RmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(RmStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics to a status plus last-error message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RmStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| invalid(format!("{what} is not UTF-8: {e}")))
}

unsafe fn optional_config(p: *const c_char) -> FfiResult<riskmap::cli::RunConfig> {
    let text = if p.is_null() { "" } else { string(p, "config")? };
    Ok(parse_config(text)?)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn rm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from arrays. `x` is `n x p`, `coords` is `n x 2`; `w`
/// may be null. Event codes are `0` (censored) to `n_risks`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_new(
    n: usize,
    times: *const f64,
    events: *const u8,
    n_risks: usize,
    p: usize,
    x: *const f64,
    w: *const f64,
    coords: *const f64,
    out: *mut *mut RmDataset,
) -> RmStatus {
    guard(|| {
        let times = slice(times, n, "times")?.to_vec();
        let events = slice(events, n, "events")?.to_vec();
        let x = DMatrix::from_row_slice(n, p, slice(x, n * p, "x")?);
        let w = if w.is_null() { None } else { Some(slice(w, n, "w")?.to_vec()) };
        let coords = slice(coords, 2 * n, "coords")?.chunks(2).map(|c| [c[0], c[1]]).collect();
        put(out, RmDataset(Dataset::new(times, events, n_risks, x, w, coords)?))
    })
}

/// Reads and standardizes a subject CSV (`id,time,event,[w],x1..,coord_x,coord_y`).
/// Coordinates are normalized when `normalize_coords` is true.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_read_csv(
    path: *const c_char,
    normalize_coords: bool,
    out: *mut *mut RmDataset,
) -> RmStatus {
    guard(|| {
        let path = string(path, "path")?;
        put(out, RmDataset(ingest(Path::new(path), normalize_coords)?.dataset))
    })
}

/// Simulates a study from the built-in two-risk design.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_simulate(n: usize, seed: u64, censoring: f64, out: *mut *mut RmDataset) -> RmStatus {
    guard(|| {
        let mut cfg = SimConfig::default_design(n, seed);
        cfg.truth.censoring = censoring;
        put(out, RmDataset(generate_dataset(&cfg)?.dataset))
    })
}

/// Number of subjects.
///
/// # Safety
/// `data` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_n(data: *const RmDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n())
}

/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rm_dataset_free(data: *mut RmDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Builds a model for `data`. `config_toml` uses the CLI configuration
/// format (`[model]`, `[hsgp]`, `[hyper]`); null means defaults. The
/// dataset is copied.
///
/// # Safety
/// `data` must be a live handle; `config_toml` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rm_model_new(
    data: *const RmDataset,
    config_toml: *const c_char,
    out: *mut *mut RmModel,
) -> RmStatus {
    guard(|| {
        let data = reference(data, "data")?;
        let cfg = optional_config(config_toml)?;
        let spec = cfg.model_spec();
        let grid = build_time_grid(data.0.max_time(), spec.intervals)?;
        put(out, RmModel(Model::new(data.0.clone(), spec, cfg.hyper, grid)?))
    })
}

/// Dimension of the unconstrained parameter vector.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rm_model_dim(model: *const RmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Log posterior (including the change-of-variables term) at unconstrained
/// `u`; writes the gradient when `grad` is non-null.
///
/// # Safety
/// `u` and `grad` must hold `len` values; `len` must equal the model dimension.
#[no_mangle]
pub unsafe extern "C" fn rm_model_log_posterior(
    model: *const RmModel,
    u: *const f64,
    len: usize,
    grad: *mut f64,
    out_lp: *mut f64,
) -> RmStatus {
    guard(|| {
        let model = reference(model, "model")?;
        if len != model.0.dim() {
            return Err(invalid(format!("expected {} values, got {len}", model.0.dim())));
        }
        let (lp, g) = model.0.log_posterior_grad(slice(u, len, "u")?)?;
        if !grad.is_null() {
            slice_mut(grad, len, "grad")?.copy_from_slice(&g);
        }
        *out_lp.as_mut().ok_or_else(|| null("out_lp"))? = lp;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rm_model_free(model: *mut RmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the sampler. `config_toml` supplies the `[sampler]` section (null
/// means defaults); `seed` is the master seed.
///
/// # Safety
/// `model` must be a live handle; `config_toml` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rm_fit(
    model: *const RmModel,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut RmDraws,
) -> RmStatus {
    guard(|| {
        let model = reference(model, "model")?;
        let cfg = optional_config(config_toml)?;
        let draws = fit(&model.0, &cfg.sampler_config(seed))?;
        let names = draws
            .names()
            .iter()
            .map(|n| CString::new(n.as_str()).expect("parameter names have no nul"))
            .collect();
        put(out, RmDraws { draws, names })
    })
}

/// Number of stored parameters.
///
/// # Safety
/// `draws` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_n_params(draws: *const RmDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.names.len())
}

/// Retained draws over all chains.
///
/// # Safety
/// `draws` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_total(draws: *const RmDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.draws.total_draws())
}

/// Name of parameter `i`, owned by the handle; null when out of range.
///
/// # Safety
/// `draws` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_param_name(draws: *const RmDraws, i: usize) -> *const c_char {
    draws.as_ref().and_then(|d| d.names.get(i)).map_or(ptr::null(), |c| c.as_ptr())
}

/// Copies the pooled draws (chain order) of a parameter or derived hazard
/// rate `lambda[j,l]` into `buf`, which must hold `rm_draws_total` values.
///
/// # Safety
/// `name` NUL-terminated; `buf` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_quantity(
    draws: *const RmDraws,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> RmStatus {
    guard(|| {
        let d = reference(draws, "draws")?;
        let values: Vec<f64> = d.draws.quantity(string(name, "name")?)?.into_iter().flatten().collect();
        if len < values.len() {
            return Err(Fail(RmStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", values.len())));
        }
        slice_mut(buf, values.len(), "buf")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Summary of a quantity; with `exp_scale` draws are exponentiated first.
///
/// # Safety
/// `name` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_summary(
    draws: *const RmDraws,
    name: *const c_char,
    exp_scale: bool,
    out: *mut RmSummary,
) -> RmStatus {
    guard(|| {
        let d = reference(draws, "draws")?;
        let mut values: Vec<f64> = d.draws.quantity(string(name, "name")?)?.into_iter().flatten().collect();
        if exp_scale {
            values.iter_mut().for_each(|v| *v = v.exp());
        }
        let s = summary_stats(&values)?;
        *out.as_mut().ok_or_else(|| null("out"))? =
            RmSummary { mean: s.mean, sd: s.sd, q025: s.q025, q50: s.q50, q975: s.q975 };
        Ok(())
    })
}

/// WAIC with its log pointwise predictive density and effective number of
/// parameters. `lppd` and `p_waic` may be null.
///
/// # Safety
/// Output pointers must be valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_waic(
    draws: *const RmDraws,
    out_waic: *mut f64,
    out_lppd: *mut f64,
    out_p_waic: *mut f64,
) -> RmStatus {
    guard(|| {
        let d = reference(draws, "draws")?;
        let r = waic(&d.draws.loglik_rows())?;
        *out_waic.as_mut().ok_or_else(|| null("out_waic"))? = r.waic;
        if let Some(v) = out_lppd.as_mut() {
            *v = r.lppd;
        }
        if let Some(v) = out_p_waic.as_mut() {
            *v = r.p_waic;
        }
        Ok(())
    })
}

/// Largest split R-hat over parameters (NaN when every parameter is
/// constant) and the number of divergent post-warmup transitions.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_diagnostics(
    draws: *const RmDraws,
    out_max_rhat: *mut f64,
    out_divergences: *mut usize,
) -> RmStatus {
    guard(|| {
        let d = reference(draws, "draws")?;
        let r = diagnose(&d.draws)?;
        *out_max_rhat.as_mut().ok_or_else(|| null("out_max_rhat"))? = r.max_rhat().unwrap_or(f64::NAN);
        *out_divergences.as_mut().ok_or_else(|| null("out_divergences"))? = r.divergences;
        Ok(())
    })
}

/// # Safety
/// `draws` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rm_draws_free(draws: *mut RmDraws) {
    if !draws.is_null() {
        drop(Box::from_raw(draws));
    }
}

/// Kriges every spatial surface of `model` to `q` normalized locations
/// (`coords` is `q x 2`). Slopes are on the hazard-ratio scale.
///
/// # Safety
/// Handles must be live and belong together; `coords` holds `2q` values.
#[no_mangle]
pub unsafe extern "C" fn rm_krige(
    model: *const RmModel,
    draws: *const RmDraws,
    coords: *const f64,
    q: usize,
    seed: u64,
    out: *mut *mut RmSurfaces,
) -> RmStatus {
    guard(|| {
        let model = reference(model, "model")?;
        let d = reference(draws, "draws")?;
        if model.0.spec().spatial == SpatialMode::None {
            return Err(invalid("the model has no spatial surfaces"));
        }
        let coords: Vec<[f64; 2]> = slice(coords, 2 * q, "coords")?.chunks(2).map(|c| [c[0], c[1]]).collect();
        put(out, RmSurfaces(predict_surfaces(&model.0, &d.draws, &coords, seed)?))
    })
}

/// Number of kriged surfaces.
///
/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rm_surfaces_count(s: *const RmSurfaces) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Describes surface `i`: `is_slope` (0 intercept, 1 slope), 1-based
/// `risk`, and draw and location counts.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rm_surfaces_info(
    s: *const RmSurfaces,
    i: usize,
    is_slope: *mut bool,
    risk: *mut usize,
    n_draws: *mut usize,
    n_locations: *mut usize,
) -> RmStatus {
    guard(|| {
        let s = reference(s, "surfaces")?;
        let surf = s.0.get(i).ok_or_else(|| Fail(RmStatus::OutOfRange, format!("surface {i} of {}", s.0.len())))?;
        *is_slope.as_mut().ok_or_else(|| null("is_slope"))? = surf.kind == "slope";
        *risk.as_mut().ok_or_else(|| null("risk"))? = surf.risk;
        *n_draws.as_mut().ok_or_else(|| null("n_draws"))? = surf.draws.len();
        *n_locations.as_mut().ok_or_else(|| null("n_locations"))? = surf.draws.first().map_or(0, Vec::len);
        Ok(())
    })
}

/// Copies the draws × locations matrix of surface `i` into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn rm_surfaces_copy(s: *const RmSurfaces, i: usize, buf: *mut f64, len: usize) -> RmStatus {
    guard(|| {
        let s = reference(s, "surfaces")?;
        let surf = s.0.get(i).ok_or_else(|| Fail(RmStatus::OutOfRange, format!("surface {i} of {}", s.0.len())))?;
        let flat: Vec<f64> = surf.draws.concat();
        if len < flat.len() {
            return Err(Fail(RmStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", flat.len())));
        }
        slice_mut(buf, flat.len(), "buf")?.copy_from_slice(&flat);
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rm_surfaces_free(s: *mut RmSurfaces) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// K-means clustering of an `s x q` draw matrix. Writes 1-based `labels`
/// (length `q`), ascending `centers` (length `k`), optionally assignment
/// probabilities (`q x k`, may be null) and the expected loss.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rm_cluster(
    draws: *const f64,
    s: usize,
    q: usize,
    k: usize,
    restarts: usize,
    seed: u64,
    labels: *mut u32,
    centers: *mut f64,
    probs: *mut f64,
    loss: *mut f64,
) -> RmStatus {
    guard(|| {
        let m = slice(draws, s * q, "draws")?;
        let rows: Vec<&[f64]> = if q == 0 { Vec::new() } else { m.chunks(q).collect() };
        let r = cluster_surface(&rows, k, restarts, seed)?;
        for (o, &l) in slice_mut(labels, q, "labels")?.iter_mut().zip(&r.labels) {
            *o = l as u32;
        }
        slice_mut(centers, k, "centers")?.copy_from_slice(&r.centers);
        if !probs.is_null() {
            slice_mut(probs, q * k, "probs")?.copy_from_slice(&r.assignment_probs.concat());
        }
        if let Some(l) = loss.as_mut() {
            *l = r.loss;
        }
        Ok(())
    })
}
