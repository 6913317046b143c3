//! C interface to `discseg`.
//!
//! Every fallible function returns a [`DsegStatus`]; on failure the message
//! is available from [`dseg_last_error`] on the same thread. Arrays are
//! caller-owned and row-major: embeddings are `height × width × dims`,
//! images `height × width × 3` with channels in `[0, 1]`, masks one byte per
//! pixel (nonzero is foreground). Networks and scenes are opaque handles
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use discseg::clustering::{cluster_by_known_centers, mean_shift_cluster, ClusterConfig, SeedPolicy};
use discseg::loss::{loss_backward, ClassReduction, LossConfig, Norm};
use discseg::maps::{EmbeddingMap, LabelMap, Mask};
use discseg::metrics::score_image;
use discseg::synthdata::{generate_scene, RgbImage, Scene, SticksConfig};
use discseg::toynet::{forward, network_input, NetParams};
use discseg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NonFinite = 4,
    Io = 5,
    Format = 6,
    Diverged = 7,
    /// A panic was caught at the boundary.
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsegNorm {
    L1 = 1,
    L2 = 2,
}

impl From<DsegNorm> for Norm {
    fn from(n: DsegNorm) -> Self {
        match n {
            DsegNorm::L1 => Norm::L1,
            DsegNorm::L2 => Norm::L2,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsegLossConfig {
    pub delta_v: f64,
    pub delta_d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub norm: DsegNorm,
}

impl From<&DsegLossConfig> for LossConfig {
    fn from(c: &DsegLossConfig) -> Self {
        LossConfig {
            delta_v: c.delta_v,
            delta_d: c.delta_d,
            alpha: c.alpha,
            beta: c.beta,
            gamma: c.gamma,
            norm: c.norm.into(),
            class_reduction: ClassReduction::Sum,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsegLossBreakdown {
    pub l_var: f64,
    pub l_dist: f64,
    pub l_reg: f64,
    pub total: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsegClusterConfig {
    pub bandwidth: f64,
    /// Negative selects the automatic size (0.5% of the foreground).
    pub min_cluster_size: i64,
    pub max_shift_iters: usize,
    pub shift_tolerance: f64,
    /// Zero seeds in scan order; otherwise seeds are drawn at random.
    pub random_seeds: u8,
    pub seed: u64,
}

impl From<&DsegClusterConfig> for ClusterConfig {
    fn from(c: &DsegClusterConfig) -> Self {
        ClusterConfig {
            bandwidth: c.bandwidth,
            min_cluster_size: usize::try_from(c.min_cluster_size).ok(),
            max_shift_iters: c.max_shift_iters,
            shift_tolerance: c.shift_tolerance,
            seed_policy: if c.random_seeds != 0 { SeedPolicy::SeededRandom(c.seed) } else { SeedPolicy::ScanOrder },
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsegSticksConfig {
    pub image_size: usize,
    pub stick_count_min: usize,
    pub stick_count_max: usize,
    pub stick_length: f64,
    pub stick_width: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsegImageScore {
    pub sbd: f64,
    pub ap50: f64,
    pub pred_count: usize,
    pub gt_count: usize,
}

/// Trained network loaded from a checkpoint directory.
pub struct DsegNet {
    params: NetParams,
}

/// Generated scene: an image and its instance labels.
pub struct DsegScene {
    scene: Scene,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DsegStatus {
    match e {
        Error::ShapeMismatch { .. } | Error::NonSquare { .. } => DsegStatus::ShapeMismatch,
        Error::NonFinite(_) => DsegStatus::NonFinite,
        Error::Io { .. } => DsegStatus::Io,
        Error::Format { .. } => DsegStatus::Format,
        Error::Diverged { .. } => DsegStatus::Diverged,
        _ => DsegStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DsegStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            DsegStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("{what} is null"));
            DsegStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal error");
            DsegStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn reference<'a, T>(ptr: *const T, what: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(what))
}

unsafe fn embedding(ptr: *const f64, height: usize, width: usize, dims: usize) -> Result<EmbeddingMap, Failure> {
    let n = height
        .checked_mul(width)
        .and_then(|p| p.checked_mul(dims))
        .ok_or(Failure::Lib(Error::InvalidInput("embedding size overflows".into())))?;
    Ok(EmbeddingMap::from_vec(height, width, dims, slice(ptr, n, "embedding")?.to_vec())?)
}

unsafe fn labels(ptr: *const u32, height: usize, width: usize, what: &'static str) -> Result<LabelMap, Failure> {
    Ok(LabelMap::from_vec(height, width, slice(ptr, height * width, what)?.to_vec())?)
}

unsafe fn mask(ptr: *const u8, height: usize, width: usize) -> Result<Mask, Failure> {
    let bytes = slice(ptr, height * width, "foreground mask")?;
    Ok(Mask::new(height, width, bytes.iter().map(|&b| b != 0).collect())?)
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn dseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn dseg_loss_config_default() -> DsegLossConfig {
    let d = LossConfig::default();
    DsegLossConfig {
        delta_v: d.delta_v,
        delta_d: d.delta_d,
        alpha: d.alpha,
        beta: d.beta,
        gamma: d.gamma,
        norm: DsegNorm::L2,
    }
}

#[no_mangle]
pub extern "C" fn dseg_cluster_config_default() -> DsegClusterConfig {
    let d = ClusterConfig::default();
    DsegClusterConfig {
        bandwidth: d.bandwidth,
        min_cluster_size: -1,
        max_shift_iters: d.max_shift_iters,
        shift_tolerance: d.shift_tolerance,
        random_seeds: 0,
        seed: 0,
    }
}

#[no_mangle]
pub extern "C" fn dseg_sticks_config_default() -> DsegSticksConfig {
    let d = SticksConfig::default();
    DsegSticksConfig {
        image_size: d.image_size,
        stick_count_min: d.stick_count_min,
        stick_count_max: d.stick_count_max,
        stick_length: d.stick_length,
        stick_width: d.stick_width,
        seed: d.seed,
    }
}

/// Loss of an embedding map against instance labels (0 is background).
/// `grad`, if not null, receives the gradient with the embedding's layout.
///
/// # Safety
/// Pointers must be valid for the sizes implied by `height`, `width`, `dims`.
#[no_mangle]
pub unsafe extern "C" fn dseg_loss(
    emb: *const f64,
    instance_labels: *const u32,
    height: usize,
    width: usize,
    dims: usize,
    config: *const DsegLossConfig,
    out: *mut DsegLossBreakdown,
    grad: *mut f64,
) -> DsegStatus {
    guard(|| {
        let emb = embedding(emb, height, width, dims)?;
        let labels = labels(instance_labels, height, width, "instance labels")?;
        let config = LossConfig::from(reference(config, "config")?);
        let out = out_ref(out, "out")?;
        let (b, g) = loss_backward(&emb, &labels, &config)?;
        *out = DsegLossBreakdown { l_var: b.l_var, l_dist: b.l_dist, l_reg: b.l_reg, total: b.total };
        if !grad.is_null() {
            slice_mut(grad, g.as_slice().len(), "grad")?.copy_from_slice(g.as_slice());
        }
        Ok(())
    })
}

/// Mean-shift clustering of the foreground embeddings. Writes labels
/// 1..K (0 for background and dissolved pixels) and K.
///
/// # Safety
/// Pointers must be valid for the sizes implied by `height`, `width`, `dims`.
#[no_mangle]
pub unsafe extern "C" fn dseg_mean_shift(
    emb: *const f64,
    foreground: *const u8,
    height: usize,
    width: usize,
    dims: usize,
    config: *const DsegClusterConfig,
    norm: DsegNorm,
    out_labels: *mut u32,
    out_count: *mut usize,
) -> DsegStatus {
    guard(|| {
        let emb = embedding(emb, height, width, dims)?;
        let fg = mask(foreground, height, width)?;
        let config = ClusterConfig::from(reference(config, "config")?);
        let out = slice_mut(out_labels, height * width, "out_labels")?;
        let count = out_ref(out_count, "out_count")?;
        let a = mean_shift_cluster(&emb, &fg, &config, norm.into())?;
        out.copy_from_slice(a.labels.as_slice());
        *count = a.num_clusters();
        Ok(())
    })
}

/// Assigns each foreground pixel to the nearest of `num_centers` centers
/// (`num_centers × dims` values) within `bandwidth`.
///
/// # Safety
/// Pointers must be valid for the sizes implied by the dimensions.
#[no_mangle]
pub unsafe extern "C" fn dseg_cluster_known_centers(
    emb: *const f64,
    foreground: *const u8,
    height: usize,
    width: usize,
    dims: usize,
    centers: *const f64,
    num_centers: usize,
    bandwidth: f64,
    norm: DsegNorm,
    out_labels: *mut u32,
    out_count: *mut usize,
) -> DsegStatus {
    guard(|| {
        let emb = embedding(emb, height, width, dims)?;
        let fg = mask(foreground, height, width)?;
        let flat = slice(centers, num_centers * dims, "centers")?;
        let centers: Vec<Vec<f64>> = flat.chunks(dims.max(1)).map(<[f64]>::to_vec).collect();
        let out = slice_mut(out_labels, height * width, "out_labels")?;
        let count = out_ref(out_count, "out_count")?;
        let a = cluster_by_known_centers(&emb, &fg, &centers, bandwidth, norm.into())?;
        out.copy_from_slice(a.labels.as_slice());
        *count = a.num_clusters();
        Ok(())
    })
}

/// Symmetric best dice, AP at IoU 0.5 and instance counts of one prediction.
///
/// # Safety
/// Both label arrays must hold `height × width` values.
#[no_mangle]
pub unsafe extern "C" fn dseg_score(
    pred: *const u32,
    gt: *const u32,
    height: usize,
    width: usize,
    out: *mut DsegImageScore,
) -> DsegStatus {
    guard(|| {
        let pred = labels(pred, height, width, "pred")?;
        let gt = labels(gt, height, width, "gt")?;
        let out = out_ref(out, "out")?;
        let s = score_image("", &pred, &gt)?;
        *out = DsegImageScore { sbd: s.sbd, ap50: s.ap50, pred_count: s.pred_count, gt_count: s.gt_count };
        Ok(())
    })
}

/// # Safety
/// `config` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dseg_scene_generate(config: *const DsegSticksConfig, out: *mut *mut DsegScene) -> DsegStatus {
    guard(|| {
        let c = reference(config, "config")?;
        let out = out_ref(out, "out")?;
        let scene = generate_scene(&SticksConfig {
            image_size: c.image_size,
            stick_count_min: c.stick_count_min,
            stick_count_max: c.stick_count_max,
            stick_length: c.stick_length,
            stick_width: c.stick_width,
            seed: c.seed,
        })?;
        *out = Box::into_raw(Box::new(DsegScene { scene }));
        Ok(())
    })
}

/// Side length of the square scene, or 0 for a null handle.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dseg_scene_size(scene: *const DsegScene) -> usize {
    scene.as_ref().map_or(0, |s| s.scene.image.height())
}

/// Copies the image (`size × size × 3`) and labels (`size × size`); either
/// output may be null.
///
/// # Safety
/// `scene` must be a live handle and outputs large enough.
#[no_mangle]
pub unsafe extern "C" fn dseg_scene_copy(
    scene: *const DsegScene,
    rgb: *mut f64,
    instance_labels: *mut u32,
) -> DsegStatus {
    guard(|| {
        let s = &reference(scene, "scene")?.scene;
        if !rgb.is_null() {
            slice_mut(rgb, s.image.as_slice().len(), "rgb")?.copy_from_slice(s.image.as_slice());
        }
        if !instance_labels.is_null() {
            slice_mut(instance_labels, s.instances.num_pixels(), "labels")?.copy_from_slice(s.instances.as_slice());
        }
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dseg_scene_free(scene: *mut DsegScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Loads a checkpoint directory written by `discseg train`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dseg_net_load(path: *const c_char, out: *mut *mut DsegNet) -> DsegStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| Error::InvalidInput("path is not UTF-8".into()))?;
        let out = out_ref(out, "out")?;
        let params = discseg::io::load_params(Path::new(path))?;
        *out = Box::into_raw(Box::new(DsegNet { params }));
        Ok(())
    })
}

/// Embedding dimension of the network, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dseg_net_out_dims(net: *const DsegNet) -> usize {
    net.as_ref().map_or(0, |n| n.params.config().out_dims)
}

/// Embeds an RGB image; `out_emb` receives `height × width × out_dims` values.
///
/// # Safety
/// `net` must be live and the arrays sized as described.
#[no_mangle]
pub unsafe extern "C" fn dseg_net_embed(
    net: *const DsegNet,
    rgb: *const f64,
    height: usize,
    width: usize,
    out_emb: *mut f64,
) -> DsegStatus {
    guard(|| {
        let net = reference(net, "net")?;
        let image = RgbImage::from_vec(height, width, slice(rgb, height * width * 3, "rgb")?.to_vec())?;
        let (emb, _) = forward(&net.params, &network_input(&image))?;
        slice_mut(out_emb, emb.as_slice().len(), "out_emb")?.copy_from_slice(emb.as_slice());
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dseg_net_free(net: *mut DsegNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}
