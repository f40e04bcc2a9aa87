//! C ABI for the anybow retrieval engine.
//!
//! Datasets, vocabularies, indexes, and query results are opaque handles
//! created and destroyed through paired `*_free` functions. Every fallible
//! call returns an [`AnybowStatus`]; on failure a human-readable message is
//! available from [`anybow_last_error`] until the next call on the same
//! thread. The generated header lands in `include/anybow.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use anybow::dataset::Dataset;
use anybow::query::{run_query, QueryResult, StopReason};
use anybow::stopping::{race_simulate, StoppingRule};
use anybow::synth::{synthesize, SynthConfig};
use anybow::vocab::{KMeansConfig, Vocabulary};
use anybow::{Error, InvertedIndex};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnybowStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Format = 3,
    DimensionMismatch = 4,
    OutOfRange = 5,
    MissingGroundTruth = 6,
    NullPointer = 7,
    InvalidUtf8 = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let owned = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

fn fail(status: AnybowStatus, msg: &str) -> AnybowStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> AnybowStatus {
    let status = match e {
        Error::Io(_) => AnybowStatus::Io,
        Error::Format { .. } => AnybowStatus::Format,
        Error::DimensionMismatch { .. } => AnybowStatus::DimensionMismatch,
        Error::WordOutOfRange { .. } => AnybowStatus::OutOfRange,
        Error::MissingGroundTruth(_) => AnybowStatus::MissingGroundTruth,
        Error::InvalidConfig(_) | Error::InconsistentState(_) | Error::EmptyQuery => {
            AnybowStatus::InvalidArgument
        }
    };
    set_error(e.to_string());
    status
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// is valid until the next API call from the same thread.
#[no_mangle]
pub extern "C" fn anybow_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn anybow_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

unsafe fn path_from(ptr: *const c_char) -> Result<PathBuf, AnybowStatus> {
    if ptr.is_null() {
        return Err(fail(AnybowStatus::NullPointer, "path is NULL"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(AnybowStatus::InvalidUtf8, "path is not valid UTF-8")),
    }
}

macro_rules! deref {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return fail(AnybowStatus::NullPointer, "handle is NULL"),
        }
    };
}

macro_rules! out_slot {
    ($ptr:expr) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => return fail(AnybowStatus::NullPointer, "output pointer is NULL"),
        }
    };
}

pub struct AnybowDataset(Dataset);
pub struct AnybowVocabulary(Vocabulary);
pub struct AnybowIndex(InvertedIndex);
pub struct AnybowQueryResult(QueryResult);

/// Synthetic dataset parameters, mirroring the `synth` CLI flags.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AnybowSynthConfig {
    pub num_images: u64,
    pub features_per_image: u64,
    pub dimension: u64,
    pub num_clusters: u64,
    pub hard_fraction: f64,
    pub confuser_count: u64,
    pub sigma: f64,
}

/// Stopping rule selector. Only the field matching `kind` is read.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AnybowRule {
    pub kind: AnybowRuleKind,
    pub threshold: f64,
    pub patience: u64,
    pub delta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnybowRuleKind {
    Rule1,
    Rule2,
    Rule3,
    Hoeffding,
    Never,
}

fn convert_rule(rule: &AnybowRule) -> StoppingRule {
    match rule.kind {
        AnybowRuleKind::Rule1 => StoppingRule::Rule1 {
            threshold: rule.threshold,
        },
        AnybowRuleKind::Rule2 => StoppingRule::Rule2 {
            threshold: rule.threshold,
        },
        AnybowRuleKind::Rule3 => StoppingRule::Rule3 {
            patience: rule.patience as usize,
        },
        AnybowRuleKind::Hoeffding => StoppingRule::Hoeffding { delta: rule.delta },
        AnybowRuleKind::Never => StoppingRule::Never,
    }
}

/// Generates a synthetic dataset.
///
/// # Safety
/// `cfg` and `out` must be valid pointers; `*out` receives an owned handle
/// that must be released with [`anybow_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn anybow_dataset_synthesize(
    cfg: *const AnybowSynthConfig,
    seed: u64,
    out: *mut *mut AnybowDataset,
) -> AnybowStatus {
    let cfg = deref!(cfg);
    let out = out_slot!(out);
    let synth_cfg = SynthConfig {
        num_images: cfg.num_images as usize,
        features_per_image: cfg.features_per_image as usize,
        dimension: cfg.dimension as usize,
        num_clusters: cfg.num_clusters as usize,
        hard_fraction: cfg.hard_fraction,
        confuser_count: cfg.confuser_count as usize,
        sigma: cfg.sigma,
    };
    match synthesize(&synth_cfg, seed) {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(AnybowDataset(ds)));
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// Loads a dataset container plus its ground-truth sidecar when present.
///
/// # Safety
/// `path` must be a NUL-terminated string; `*out` receives an owned handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_dataset_load(
    path: *const c_char,
    out: *mut *mut AnybowDataset,
) -> AnybowStatus {
    let out = out_slot!(out);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match Dataset::load(&path) {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(AnybowDataset(ds)));
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn anybow_dataset_save(
    ds: *const AnybowDataset,
    path: *const c_char,
) -> AnybowStatus {
    let ds = deref!(ds);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match ds.0.save(&path) {
        Ok(()) => AnybowStatus::Ok,
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `ds` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn anybow_dataset_free(ds: *mut AnybowDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of images; 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_dataset_num_images(ds: *const AnybowDataset) -> u32 {
    ds.as_ref().map_or(0, |d| d.0.num_images() as u32)
}

/// Descriptor dimension; 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_dataset_dimension(ds: *const AnybowDataset) -> u32 {
    ds.as_ref().map_or(0, |d| d.0.dimension as u32)
}

/// Number of query-half images; 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_dataset_num_queries(ds: *const AnybowDataset) -> u32 {
    ds.as_ref().map_or(0, |d| d.0.queries().len() as u32)
}

/// Trains a k-means vocabulary on the dataset's database half and computes
/// idf over it.
///
/// # Safety
/// `ds` must be a live handle; `*out` receives an owned handle for
/// [`anybow_vocab_free`].
#[no_mangle]
pub unsafe extern "C" fn anybow_vocab_train(
    ds: *const AnybowDataset,
    k: u32,
    seed: u64,
    out: *mut *mut AnybowVocabulary,
) -> AnybowStatus {
    let ds = deref!(ds);
    let out = out_slot!(out);
    let database = ds.0.database();
    let descriptors: Vec<_> = database
        .iter()
        .flat_map(|im| im.descriptors.iter().cloned())
        .collect();
    let trained = match Vocabulary::train(&descriptors, &KMeansConfig::new(k as usize, seed)) {
        Ok(t) => t,
        Err(e) => return from_error(&e),
    };
    match trained.vocabulary.compute_idf(database) {
        Ok(v) => {
            *out = Box::into_raw(Box::new(AnybowVocabulary(v)));
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `*out` receives an owned handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_vocab_load(
    path: *const c_char,
    out: *mut *mut AnybowVocabulary,
) -> AnybowStatus {
    let out = out_slot!(out);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match Vocabulary::load(&path) {
        Ok(v) => {
            *out = Box::into_raw(Box::new(AnybowVocabulary(v)));
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `v` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn anybow_vocab_save(
    v: *const AnybowVocabulary,
    path: *const c_char,
) -> AnybowStatus {
    let v = deref!(v);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match v.0.save(&path) {
        Ok(()) => AnybowStatus::Ok,
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `v` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn anybow_vocab_free(v: *mut AnybowVocabulary) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Vocabulary size; 0 for a NULL handle.
///
/// # Safety
/// `v` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_vocab_k(v: *const AnybowVocabulary) -> u32 {
    v.as_ref().map_or(0, |v| v.0.k() as u32)
}

/// Descriptor dimension; 0 for a NULL handle.
///
/// # Safety
/// `v` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_vocab_dimension(v: *const AnybowVocabulary) -> u32 {
    v.as_ref().map_or(0, |v| v.0.dimension() as u32)
}

/// Maps one descriptor to its nearest word by exact scan.
///
/// # Safety
/// `values` must point to `len` readable floats; `word` and `distance` must
/// be valid output pointers.
#[no_mangle]
pub unsafe extern "C" fn anybow_vocab_quantize(
    v: *const AnybowVocabulary,
    values: *const f32,
    len: usize,
    word: *mut u32,
    distance: *mut f64,
) -> AnybowStatus {
    let v = deref!(v);
    if values.is_null() {
        return fail(AnybowStatus::NullPointer, "values is NULL");
    }
    let word = out_slot!(word);
    let distance = out_slot!(distance);
    let slice = std::slice::from_raw_parts(values, len);
    match v.0.quantize(slice) {
        Ok((w, d)) => {
            *word = w as u32;
            *distance = d;
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// Builds the inverted index over the dataset's database half.
///
/// # Safety
/// `v` and `ds` must be live handles; `*out` receives an owned handle for
/// [`anybow_index_free`].
#[no_mangle]
pub unsafe extern "C" fn anybow_index_build(
    v: *const AnybowVocabulary,
    ds: *const AnybowDataset,
    out: *mut *mut AnybowIndex,
) -> AnybowStatus {
    let v = deref!(v);
    let ds = deref!(ds);
    let out = out_slot!(out);
    match InvertedIndex::build(&v.0, ds.0.database()) {
        Ok(ix) => {
            *out = Box::into_raw(Box::new(AnybowIndex(ix)));
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `*out` receives an owned handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_index_load(
    path: *const c_char,
    out: *mut *mut AnybowIndex,
) -> AnybowStatus {
    let out = out_slot!(out);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match InvertedIndex::load(&path) {
        Ok(ix) => {
            *out = Box::into_raw(Box::new(AnybowIndex(ix)));
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `ix` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn anybow_index_save(
    ix: *const AnybowIndex,
    path: *const c_char,
) -> AnybowStatus {
    let ix = deref!(ix);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match ix.0.save(&path) {
        Ok(()) => AnybowStatus::Ok,
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `ix` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn anybow_index_free(ix: *mut AnybowIndex) {
    if !ix.is_null() {
        drop(Box::from_raw(ix));
    }
}

/// Indexed database size; 0 for a NULL handle.
///
/// # Safety
/// `ix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_index_num_images(ix: *const AnybowIndex) -> u32 {
    ix.as_ref().map_or(0, |ix| ix.0.num_images() as u32)
}

/// Runs one anytime query against the image with the given dataset id.
///
/// # Safety
/// All handles must be live; `rule` must point to a filled [`AnybowRule`];
/// `*out` receives an owned handle for [`anybow_result_free`].
#[no_mangle]
pub unsafe extern "C" fn anybow_query_run(
    ix: *const AnybowIndex,
    v: *const AnybowVocabulary,
    ds: *const AnybowDataset,
    query_image_id: u32,
    rule: *const AnybowRule,
    n: u32,
    seed: u64,
    out: *mut *mut AnybowQueryResult,
) -> AnybowStatus {
    let ix = deref!(ix);
    let v = deref!(v);
    let ds = deref!(ds);
    let rule = deref!(rule);
    let out = out_slot!(out);
    let record = match ds.0.image_by_id(query_image_id) {
        Some(r) => r,
        None => {
            return fail(
                AnybowStatus::OutOfRange,
                "query image id not found in dataset",
            )
        }
    };
    match run_query(&ix.0, &v.0, record, &convert_rule(rule), n as usize, seed) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(AnybowQueryResult(result)));
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// # Safety
/// `res` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn anybow_result_free(res: *mut AnybowQueryResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of ranked entries; 0 for a NULL handle.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_result_len(res: *const AnybowQueryResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.ranked.len())
}

/// Database image id at the given rank.
///
/// # Safety
/// `res` must be a live handle; `out` a valid output pointer.
#[no_mangle]
pub unsafe extern "C" fn anybow_result_image_id(
    res: *const AnybowQueryResult,
    rank: usize,
    out: *mut u32,
) -> AnybowStatus {
    let res = deref!(res);
    let out = out_slot!(out);
    match res.0.ranked.get(rank) {
        Some(&(id, _)) => {
            *out = id;
            AnybowStatus::Ok
        }
        None => fail(AnybowStatus::OutOfRange, "rank out of range"),
    }
}

/// Accumulated score at the given rank.
///
/// # Safety
/// `res` must be a live handle; `out` a valid output pointer.
#[no_mangle]
pub unsafe extern "C" fn anybow_result_score(
    res: *const AnybowQueryResult,
    rank: usize,
    out: *mut f64,
) -> AnybowStatus {
    let res = deref!(res);
    let out = out_slot!(out);
    match res.0.ranked.get(rank) {
        Some(&(_, score)) => {
            *out = score;
            AnybowStatus::Ok
        }
        None => fail(AnybowStatus::OutOfRange, "rank out of range"),
    }
}

/// Features quantized before stopping; 0 for a NULL handle.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_result_features_processed(res: *const AnybowQueryResult) -> u64 {
    res.as_ref().map_or(0, |r| r.0.features_processed as u64)
}

/// Fraction of the query's features processed; 0 for a NULL handle.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_result_fraction_processed(res: *const AnybowQueryResult) -> f64 {
    res.as_ref().map_or(0.0, |r| r.0.fraction_processed)
}

/// True when the stopping rule fired before exhaustion.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anybow_result_rule_fired(res: *const AnybowQueryResult) -> bool {
    res.as_ref()
        .is_some_and(|r| r.0.stop_reason == StopReason::RuleFired)
}

/// Simulates the two-distribution stopping race; see the CLI `race` command.
///
/// # Safety
/// `error_rate` and `mean_stop_time` must be valid output pointers.
#[no_mangle]
pub unsafe extern "C" fn anybow_race_simulate(
    mu1: f64,
    mu2: f64,
    delta: f64,
    trials: u64,
    seed: u64,
    error_rate: *mut f64,
    mean_stop_time: *mut f64,
) -> AnybowStatus {
    let error_rate = out_slot!(error_rate);
    let mean_stop_time = out_slot!(mean_stop_time);
    match race_simulate(mu1, mu2, delta, trials as usize, seed) {
        Ok(report) => {
            *error_rate = report.error_rate;
            *mean_stop_time = report.mean_stop_time;
            AnybowStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}
