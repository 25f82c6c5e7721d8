//! C ABI over the `thzdt` engine.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load` function and released with the matching `*_free`. Every
//! fallible call returns a [`ThzdtStatus`]; on failure the message is kept per
//! thread and can be copied out with [`thzdt_last_error_message`]. Results are
//! written through out-pointers, which are left untouched on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use thzdt::calib::CalibrationTable;
use thzdt::inf::{self, InfModel, RtConditioning};
use thzdt::raytrace;
use thzdt::scene::{self, Scene};
use thzdt::sysperf::{self, Deployment, GridSpec, LinkBudget, MapSource, RadioMap};
use thzdt::{Error, Vec3};

/// Outcome of an FFI call. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThzdtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Invalid = 5,
    Dimension = 6,
    Numerical = 7,
    NoDetection = 8,
    InsufficientData = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

impl From<&Error> for ThzdtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => ThzdtStatus::Io,
            Error::Parse { .. } => ThzdtStatus::Parse,
            Error::Validation { .. } | Error::StaleMatching(_) => ThzdtStatus::Invalid,
            Error::Dimension(_) => ThzdtStatus::Dimension,
            Error::Numerical(_) => ThzdtStatus::Numerical,
            Error::NoDetection => ThzdtStatus::NoDetection,
            Error::InsufficientData(_) => ThzdtStatus::InsufficientData,
        }
    }
}

/// A validated indoor scene.
pub struct ThzdtScene(Scene);

/// A trained neural field together with its RT conditioning.
pub struct ThzdtModel(InfModel);

/// Per-cell channel attributes of one transmitter over a receiver plane.
pub struct ThzdtRadioMap(RadioMap);

/// One multipath component as seen at the receiver.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThzdtMpc {
    /// Received power relative to transmit power, dB.
    pub power_db: f64,
    pub delay_ns: f64,
    pub az_deg: f64,
    pub el_deg: f64,
    /// 0 for the direct path.
    pub bounce_order: u8,
}

/// Channel prediction at one location.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThzdtChannel {
    pub p_db: f64,
    pub tau_ns: f64,
    pub az_deg: f64,
    pub el_deg: f64,
    pub los: bool,
    /// The NLoS fallback replaced missing direct-path features.
    pub fallback: bool,
    pub n_rt_paths: u32,
}

/// Link budget for SINR and coverage.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThzdtLinkBudget {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub noise_density_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl From<LinkBudget> for ThzdtLinkBudget {
    fn from(b: LinkBudget) -> Self {
        Self {
            tx_power_dbm: b.tx_power_dbm,
            tx_gain_dbi: b.tx_gain_dbi,
            rx_gain_dbi: b.rx_gain_dbi,
            noise_density_dbm_hz: b.noise_density_dbm_hz,
            bandwidth_hz: b.bandwidth_hz,
            noise_figure_db: b.noise_figure_db,
        }
    }
}

impl From<ThzdtLinkBudget> for LinkBudget {
    fn from(b: ThzdtLinkBudget) -> Self {
        Self {
            tx_power_dbm: b.tx_power_dbm,
            tx_gain_dbi: b.tx_gain_dbi,
            rx_gain_dbi: b.rx_gain_dbi,
            noise_density_dbm_hz: b.noise_density_dbm_hz,
            bandwidth_hz: b.bandwidth_hz,
            noise_figure_db: b.noise_figure_db,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(ThzdtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

fn fail(status: ThzdtStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

/// Runs `f`, records its error message and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ThzdtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ThzdtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            ThzdtStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(ThzdtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(ThzdtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(ThzdtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ThzdtStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(ThzdtStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `src` into a caller buffer of `capacity` elements and reports the
/// full length through `len`, so a short buffer can be resized and retried.
unsafe fn fill<T: Copy>(src: &[T], buf: *mut T, capacity: usize, len: *mut usize) -> Result<(), Fail> {
    *out(len, "len")? = src.len();
    if src.len() > capacity {
        return Err(fail(
            ThzdtStatus::BufferTooSmall,
            format!("need {} elements, buffer holds {capacity}", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(fail(ThzdtStatus::NullPointer, "buf is null"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn thzdt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to fit) into `buf`. Returns the message length in bytes without the NUL.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn thzdt_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default link budget of the engine.
#[no_mangle]
pub extern "C" fn thzdt_link_budget_default() -> ThzdtLinkBudget {
    LinkBudget::default().into()
}

/// Builds the built-in data-center hall.
///
/// # Safety
/// `scene` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn thzdt_scene_canonical(scene: *mut *mut ThzdtScene) -> ThzdtStatus {
    guard(|| {
        *out(scene, "scene")? = boxed(ThzdtScene(scene::canonical_scene()));
        Ok(())
    })
}

/// Loads and validates a scene file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `scene` writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_scene_load(path: *const c_char, scene: *mut *mut ThzdtScene) -> ThzdtStatus {
    guard(|| {
        let path = string(path, "path")?;
        let out = out(scene, "scene")?;
        *out = boxed(ThzdtScene(scene::load_scene(Path::new(path))?));
        Ok(())
    })
}

/// Writes a scene file.
///
/// # Safety
/// `scene` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn thzdt_scene_save(scene: *const ThzdtScene, path: *const c_char) -> ThzdtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        scene::save_scene(&s.0, Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// Releases a scene. Null is ignored.
///
/// # Safety
/// `scene` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn thzdt_scene_free(scene: *mut ThzdtScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of declared nodes.
///
/// # Safety
/// `scene` must come from this library and `count` be writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_scene_node_count(scene: *const ThzdtScene, count: *mut usize) -> ThzdtStatus {
    guard(|| {
        *out(count, "count")? = deref(scene, "scene")?.0.nodes().len();
        Ok(())
    })
}

/// Position `[x, y, z]` in meters of the node named `name`.
///
/// # Safety
/// `scene` must come from this library, `name` be NUL-terminated and
/// `xyz` point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn thzdt_scene_node_position(
    scene: *const ThzdtScene,
    name: *const c_char,
    xyz: *mut f64,
) -> ThzdtStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        let p = s.0.node(string(name, "name")?)?.position;
        out(xyz, "xyz")?;
        ptr::copy_nonoverlapping([p.x, p.y, p.z].as_ptr(), xyz, 3);
        Ok(())
    })
}

/// Traces every path from node `tx` to node `rx` up to `max_order` bounces.
/// Writes up to `capacity` components to `paths` and the full count to `len`;
/// returns `BufferTooSmall` when they do not fit.
///
/// # Safety
/// Pointers must be valid; `paths` must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn thzdt_trace(
    scene: *const ThzdtScene,
    tx: *const c_char,
    rx: *const c_char,
    max_order: u8,
    paths: *mut ThzdtMpc,
    capacity: usize,
    len: *mut usize,
) -> ThzdtStatus {
    guard(|| {
        let s = &deref(scene, "scene")?.0;
        let tx = s.node(string(tx, "tx")?)?;
        let rx = s.node(string(rx, "rx")?)?;
        let mpcs: Vec<ThzdtMpc> = raytrace::trace(s, tx, rx, max_order)
            .into_iter()
            .map(|m| ThzdtMpc {
                power_db: m.power_db,
                delay_ns: m.delay_ns,
                az_deg: m.az_deg,
                el_deg: m.el_deg,
                bounce_order: m.bounce_order,
            })
            .collect();
        fill(&mpcs, paths, capacity, len)
    })
}

/// Loads a trained model file.
///
/// # Safety
/// `path` must be NUL-terminated and `model` writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_model_load(path: *const c_char, model: *mut *mut ThzdtModel) -> ThzdtStatus {
    guard(|| {
        let path = string(path, "path")?;
        let out = out(model, "model")?;
        *out = boxed(ThzdtModel(inf::load_model(Path::new(path))?));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn thzdt_model_free(model: *mut ThzdtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicts the channel from node `tx` to the point `(x, y, z)`.
///
/// # Safety
/// Handles must come from this library, `tx` be NUL-terminated and
/// `channel` writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_model_predict(
    model: *const ThzdtModel,
    scene: *const ThzdtScene,
    tx: *const c_char,
    x: f64,
    y: f64,
    z: f64,
    channel: *mut ThzdtChannel,
) -> ThzdtStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let s = &deref(scene, "scene")?.0;
        let node = s.node(string(tx, "tx")?)?;
        let out = out(channel, "channel")?;
        let a = inf::predict(m, s, node, Vec3::new(x, y, z))?;
        *out = ThzdtChannel {
            p_db: a.p_db,
            tau_ns: a.tau_ns,
            az_deg: a.az_deg,
            el_deg: a.el_deg,
            los: a.los,
            fallback: a.fallback,
            n_rt_paths: a.n_rt_paths as u32,
        };
        Ok(())
    })
}

unsafe fn build_map(
    scene: *const ThzdtScene,
    tx: *const c_char,
    cell_m: f64,
    z: f64,
    map: *mut *mut ThzdtRadioMap,
    source: MapSource<'_>,
) -> Result<(), Fail> {
    let s = &deref(scene, "scene")?.0;
    let tx = string(tx, "tx")?;
    let node = s.node(tx)?;
    let out = out(map, "map")?;
    let grid = GridSpec::covering(s, cell_m, z)?;
    *out = boxed(ThzdtRadioMap(sysperf::build_radio_map(source, s, tx, node, &grid)?));
    Ok(())
}

/// Radio map of node `tx` from the uncalibrated ray tracer, over the floor
/// plan tiled with cells of at most `cell_m` at height `z`.
///
/// # Safety
/// `scene` must come from this library, `tx` be NUL-terminated and `map` writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_radio_map_rt(
    scene: *const ThzdtScene,
    tx: *const c_char,
    max_order: u8,
    cell_m: f64,
    z: f64,
    map: *mut *mut ThzdtRadioMap,
) -> ThzdtStatus {
    guard(|| {
        let rt = RtConditioning {
            max_order,
            calibration: CalibrationTable::default(),
        };
        build_map(scene, tx, cell_m, z, map, MapSource::Rt(&rt))
    })
}

/// Radio map of node `tx` from the ray tracer with the calibration carried
/// by `model`.
///
/// # Safety
/// Handles must come from this library, `tx` be NUL-terminated and `map` writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_radio_map_calibrated_rt(
    model: *const ThzdtModel,
    scene: *const ThzdtScene,
    tx: *const c_char,
    cell_m: f64,
    z: f64,
    map: *mut *mut ThzdtRadioMap,
) -> ThzdtStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        build_map(scene, tx, cell_m, z, map, MapSource::Rt(&m.spec.rt))
    })
}

/// Radio map of node `tx` from the neural field.
///
/// # Safety
/// Handles must come from this library, `tx` be NUL-terminated and `map` writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_radio_map_inf(
    model: *const ThzdtModel,
    scene: *const ThzdtScene,
    tx: *const c_char,
    cell_m: f64,
    z: f64,
    map: *mut *mut ThzdtRadioMap,
) -> ThzdtStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        build_map(scene, tx, cell_m, z, map, MapSource::Inf(m))
    })
}

/// Releases a radio map. Null is ignored.
///
/// # Safety
/// `map` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn thzdt_radio_map_free(map: *mut ThzdtRadioMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Grid size of a map.
///
/// # Safety
/// `map` must come from this library; `nx` and `ny` must be writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_radio_map_dims(map: *const ThzdtRadioMap, nx: *mut usize, ny: *mut usize) -> ThzdtStatus {
    guard(|| {
        let g = deref(map, "map")?.0.grid;
        *out(nx, "nx")? = g.nx;
        *out(ny, "ny")? = g.ny;
        Ok(())
    })
}

/// Propagation gain (dB) of every cell in row-major order (`iy * nx + ix`).
///
/// # Safety
/// `map` must come from this library; `buf` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn thzdt_radio_map_power(
    map: *const ThzdtRadioMap,
    buf: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> ThzdtStatus {
    guard(|| {
        let p: Vec<f64> = deref(map, "map")?.0.cells.iter().map(|c| c.p_db).collect();
        fill(&p, buf, capacity, len)
    })
}

unsafe fn deployment(maps: *const *const ThzdtRadioMap, n_maps: usize) -> Result<Deployment, Fail> {
    let handles = slice(maps, n_maps, "maps")?;
    if handles.is_empty() {
        return Err(fail(ThzdtStatus::Invalid, "at least the serving map is required"));
    }
    let mut owned = Vec::with_capacity(handles.len());
    for (i, &h) in handles.iter().enumerate() {
        owned.push(deref(h, &format!("maps[{i}]"))?.0.clone());
    }
    let ids: Vec<String> = owned.iter().map(|m| m.tx_id.clone()).collect();
    let interferers: Vec<&str> = ids[1..].iter().map(String::as_str).collect();
    Ok(Deployment::new(&ids[0], &interferers, owned)?)
}

/// SINR (dB) of every cell with `maps[0]` serving and the rest interfering.
/// All maps must share one grid and have distinct transmitters.
///
/// # Safety
/// `maps` must hold `n_maps` handles from this library; `budget` must be
/// valid and `buf` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn thzdt_sinr_map(
    maps: *const *const ThzdtRadioMap,
    n_maps: usize,
    budget: *const ThzdtLinkBudget,
    buf: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> ThzdtStatus {
    guard(|| {
        let lb: LinkBudget = (*deref(budget, "budget")?).into();
        lb.validate()?;
        let d = deployment(maps, n_maps)?;
        fill(&sysperf::sinr_map(&d, &lb), buf, capacity, len)
    })
}

/// Fraction of cells whose SINR reaches `threshold_db`, with `maps[0]` serving.
/// When `scene` is non-null, cells inside obstacles are excluded.
///
/// # Safety
/// As for [`thzdt_sinr_map`]; `scene` may be null; `coverage` must be writable.
#[no_mangle]
pub unsafe extern "C" fn thzdt_coverage(
    maps: *const *const ThzdtRadioMap,
    n_maps: usize,
    scene: *const ThzdtScene,
    budget: *const ThzdtLinkBudget,
    threshold_db: f64,
    coverage: *mut f64,
) -> ThzdtStatus {
    guard(|| {
        let lb: LinkBudget = (*deref(budget, "budget")?).into();
        lb.validate()?;
        let out = out(coverage, "coverage")?;
        let mut d = deployment(maps, n_maps)?;
        if let Some(s) = scene.as_ref() {
            let region = sysperf::free_space_region(&s.0, d.grid());
            d = d.with_region(region)?;
        }
        *out = sysperf::coverage_probability(&d, &lb, threshold_db);
        Ok(())
    })
}

/// SINR (dB) from a serving power and `n` interferer powers, all in dBm,
/// summed in the linear domain.
///
/// # Safety
/// `interferers_dbm` must hold `n` doubles (may be null when `n` is 0).
#[no_mangle]
pub unsafe extern "C" fn thzdt_sinr_from_powers(
    signal_dbm: f64,
    interferers_dbm: *const f64,
    n: usize,
    noise_dbm: f64,
    sinr_db: *mut f64,
) -> ThzdtStatus {
    guard(|| {
        let i = slice(interferers_dbm, n, "interferers_dbm")?;
        *out(sinr_db, "sinr_db")? = sysperf::sinr_from_powers_db(signal_dbm, i, noise_dbm);
        Ok(())
    })
}
