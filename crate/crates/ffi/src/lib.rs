//! C ABI over `utopk`.
//!
//! Every function returns a [`UtopkStatus`]; on failure the message is kept per
//! thread and read with [`utopk_last_error`]. Handles are opaque and must be
//! released with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use utopk::distribution::{quantize, Component, DiscreteScoreDist, GaussianMixture, ScoreGrid};
use utopk::engine::{expected_conf, run_query, topk_prob, QueryConfig};
use utopk::relation::{FrameId, RelationEntry, UncertainRelation};
use utopk::simulation::Oracle;
use utopk::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtopkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    InvalidMixture = 4,
    DuplicateFrame = 5,
    UnknownFrame = 6,
    AlreadyCertain = 7,
    NotUncertain = 8,
    InsufficientCertain = 9,
    InsufficientFrames = 10,
    BufferTooSmall = 11,
    OracleFailed = 12,
    Internal = 13,
    Panic = 14,
}

/// Collects tuples for a relation on one score grid.
pub struct UtopkBuilder {
    grid: ScoreGrid,
    entries: Vec<RelationEntry>,
}

pub struct UtopkRelation {
    inner: UncertainRelation,
}

/// Scores `n` frames: writes `n` values to `scores` and returns 0, or non-zero on failure.
pub type UtopkOracleFn =
    Option<unsafe extern "C" fn(user_data: *mut c_void, frame_ids: *const u64, n: usize, scores: *mut f64) -> i32>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> UtopkStatus {
    match err {
        Error::InvalidGrid(_) => UtopkStatus::InvalidGrid,
        Error::InvalidMixture(_) | Error::EmptySupport => UtopkStatus::InvalidMixture,
        Error::DuplicateFrame(_) => UtopkStatus::DuplicateFrame,
        Error::UnknownFrame(_) => UtopkStatus::UnknownFrame,
        Error::AlreadyCertain(_) => UtopkStatus::AlreadyCertain,
        Error::NotUncertain(_) => UtopkStatus::NotUncertain,
        Error::InsufficientCertain { .. } => UtopkStatus::InsufficientCertain,
        Error::InsufficientFrames { .. } => UtopkStatus::InsufficientFrames,
        Error::Oracle(_) => UtopkStatus::OracleFailed,
        Error::InvalidParams(_) | Error::GridMismatch(_) => UtopkStatus::InvalidArgument,
        _ => UtopkStatus::Internal,
    }
}

fn fail(status: UtopkStatus, msg: impl Into<String>) -> UtopkStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), UtopkStatus>) -> UtopkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UtopkStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(UtopkStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, UtopkStatus>;
}

impl<T> OrStatus<T> for Result<T, Error> {
    fn or_status(self) -> Result<T, UtopkStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn mut_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, UtopkStatus> {
    p.as_mut().ok_or_else(|| fail(UtopkStatus::NullPointer, format!("{what} is null")))
}

unsafe fn const_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, UtopkStatus> {
    p.as_ref().ok_or_else(|| fail(UtopkStatus::NullPointer, format!("{what} is null")))
}

unsafe fn input<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], UtopkStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(UtopkStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn utopk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// New builder on the grid `origin + i * step`, `i < bins`. With `counting`, mass
/// below the origin folds into the first bin.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn utopk_builder_new(
    origin: f64,
    step: f64,
    bins: usize,
    counting: bool,
    out: *mut *mut UtopkBuilder,
) -> UtopkStatus {
    guard(|| {
        let out = mut_ref(out, "out")?;
        let mut grid = ScoreGrid::new(origin, step, bins).or_status()?;
        grid.counting = counting;
        *out = Box::into_raw(Box::new(UtopkBuilder { grid, entries: Vec::new() }));
        Ok(())
    })
}

/// Adds an uncertain frame with probabilities `probs[i]` on bin `first_bin + i`.
///
/// # Safety
/// `builder` must come from `utopk_builder_new`; `probs` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn utopk_builder_add_uncertain(
    builder: *mut UtopkBuilder,
    frame_id: u64,
    timestamp: i64,
    first_bin: i64,
    probs: *const f64,
    n: usize,
) -> UtopkStatus {
    guard(|| {
        let b = mut_ref(builder, "builder")?;
        let probs = input(probs, n, "probs")?;
        let dist = DiscreteScoreDist::from_dense(b.grid, first_bin, probs.to_vec()).or_status()?;
        b.entries.push(RelationEntry::uncertain(frame_id, timestamp, dist));
        Ok(())
    })
}

/// Adds an uncertain frame from a Gaussian mixture, quantized onto the builder's grid.
///
/// # Safety
/// `builder` must come from `utopk_builder_new`; each array must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn utopk_builder_add_mixture(
    builder: *mut UtopkBuilder,
    frame_id: u64,
    timestamp: i64,
    weights: *const f64,
    means: *const f64,
    sds: *const f64,
    n: usize,
) -> UtopkStatus {
    guard(|| {
        let b = mut_ref(builder, "builder")?;
        let (w, m, s) = (input(weights, n, "weights")?, input(means, n, "means")?, input(sds, n, "sds")?);
        let comps = (0..n).map(|i| Component::new(w[i], m[i], s[i])).collect();
        let mix = GaussianMixture::new(comps).or_status()?;
        let dist = quantize(&mix, &b.grid).or_status()?;
        b.entries.push(RelationEntry::uncertain(frame_id, timestamp, dist));
        Ok(())
    })
}

/// Adds a frame whose score bin is already known.
///
/// # Safety
/// `builder` must come from `utopk_builder_new`.
#[no_mangle]
pub unsafe extern "C" fn utopk_builder_add_certain(
    builder: *mut UtopkBuilder,
    frame_id: u64,
    timestamp: i64,
    bin: i64,
) -> UtopkStatus {
    guard(|| {
        let b = mut_ref(builder, "builder")?;
        b.entries.push(RelationEntry::certain(frame_id, timestamp, bin));
        Ok(())
    })
}

/// Consumes the builder and creates a relation. The builder is freed even on failure.
///
/// # Safety
/// `builder` must come from `utopk_builder_new` and not be used afterwards; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn utopk_builder_build(builder: *mut UtopkBuilder, out: *mut *mut UtopkRelation) -> UtopkStatus {
    guard(|| {
        if builder.is_null() {
            return Err(fail(UtopkStatus::NullPointer, "builder is null"));
        }
        let b = Box::from_raw(builder);
        let out = mut_ref(out, "out")?;
        let inner = UncertainRelation::build(b.entries, b.grid).or_status()?;
        *out = Box::into_raw(Box::new(UtopkRelation { inner }));
        Ok(())
    })
}

/// # Safety
/// `builder` must come from `utopk_builder_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn utopk_builder_free(builder: *mut UtopkBuilder) {
    if !builder.is_null() {
        drop(Box::from_raw(builder));
    }
}

/// # Safety
/// `relation` must come from `utopk_builder_build` or be null.
#[no_mangle]
pub unsafe extern "C" fn utopk_relation_free(relation: *mut UtopkRelation) {
    if !relation.is_null() {
        drop(Box::from_raw(relation));
    }
}

/// Number of frames and of still-uncertain frames.
///
/// # Safety
/// `relation` must be valid; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn utopk_relation_counts(
    relation: *const UtopkRelation,
    total: *mut usize,
    uncertain: *mut usize,
) -> UtopkStatus {
    guard(|| {
        let r = &const_ref(relation, "relation")?.inner;
        if let Some(t) = total.as_mut() {
            *t = r.len();
        }
        if let Some(u) = uncertain.as_mut() {
            *u = r.uncertain_len();
        }
        Ok(())
    })
}

/// Records the oracle's exact bin for an uncertain frame.
///
/// # Safety
/// `relation` must be valid.
#[no_mangle]
pub unsafe extern "C" fn utopk_relation_clean(relation: *mut UtopkRelation, frame_id: u64, bin: i64) -> UtopkStatus {
    guard(|| {
        let r = &mut mut_ref(relation, "relation")?.inner;
        r.clean(frame_id, bin).or_status()
    })
}

unsafe fn write_answer(
    members: &[(FrameId, i64)],
    ids: *mut u64,
    bins: *mut i64,
    capacity: usize,
) -> Result<(), UtopkStatus> {
    if capacity < members.len() {
        return Err(fail(UtopkStatus::BufferTooSmall, format!("need room for {} members", members.len())));
    }
    if ids.is_null() || bins.is_null() {
        return Err(fail(UtopkStatus::NullPointer, "output buffers are null"));
    }
    let ids = slice::from_raw_parts_mut(ids, capacity);
    let bins = slice::from_raw_parts_mut(bins, capacity);
    for (i, &(id, bin)) in members.iter().enumerate() {
        ids[i] = id;
        bins[i] = bin;
    }
    Ok(())
}

/// Certain Top-K by descending bin, ties by frame id. Writes `k` entries.
///
/// # Safety
/// `relation` must be valid; `ids` and `bins` must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn utopk_relation_topk(
    relation: *const UtopkRelation,
    k: usize,
    ids: *mut u64,
    bins: *mut i64,
    capacity: usize,
) -> UtopkStatus {
    guard(|| {
        let r = &const_ref(relation, "relation")?.inner;
        let answer = r.topk_certain(k).or_status()?;
        write_answer(&answer.members, ids, bins, capacity)
    })
}

/// Confidence that the certain Top-K is the exact Top-K.
///
/// # Safety
/// `relation` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn utopk_relation_topk_prob(relation: *const UtopkRelation, k: usize, out: *mut f64) -> UtopkStatus {
    guard(|| {
        let r = &const_ref(relation, "relation")?.inner;
        let out = mut_ref(out, "out")?;
        let answer = r.topk_certain(k).or_status()?;
        *out = topk_prob(r, &answer);
        Ok(())
    })
}

/// Expected confidence of the certain Top-K after cleaning `frame_id`.
///
/// # Safety
/// `relation` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn utopk_relation_expected_conf(
    relation: *const UtopkRelation,
    k: usize,
    frame_id: u64,
    out: *mut f64,
) -> UtopkStatus {
    guard(|| {
        let r = &const_ref(relation, "relation")?.inner;
        let out = mut_ref(out, "out")?;
        let answer = r.topk_certain(k).or_status()?;
        *out = expected_conf(r, &answer, frame_id).or_status()?;
        Ok(())
    })
}

struct CallbackOracle {
    callback: unsafe extern "C" fn(*mut c_void, *const u64, usize, *mut f64) -> i32,
    user_data: *mut c_void,
    calls: std::cell::Cell<u64>,
}

impl Oracle for CallbackOracle {
    fn score(&self, frame_ids: &[FrameId]) -> utopk::Result<Vec<f64>> {
        let mut scores = vec![f64::NAN; frame_ids.len()];
        if frame_ids.is_empty() {
            return Ok(scores);
        }
        // SAFETY: the caller of utopk_run_query vouches for the callback.
        let rc = unsafe { (self.callback)(self.user_data, frame_ids.as_ptr(), frame_ids.len(), scores.as_mut_ptr()) };
        if rc != 0 {
            return Err(Error::Oracle(format!("callback returned {rc}")));
        }
        self.calls.set(self.calls.get() + frame_ids.len() as u64);
        Ok(scores)
    }

    fn invocations(&self) -> u64 {
        self.calls.get()
    }
}

/// Query results.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UtopkQueryResult {
    pub confidence: f64,
    pub iterations: u64,
    pub frames_cleaned: u64,
    pub oracle_batches: u64,
}

/// Cleans frames through `oracle` until the certain Top-K reaches `thres`
/// confidence, then writes the answer. Oracle scores are rounded to the grid.
///
/// # Safety
/// `relation` must be valid; `ids` and `bins` must hold `capacity` values;
/// `oracle` must be safe to call with `user_data`; `result` may be null.
#[no_mangle]
pub unsafe extern "C" fn utopk_run_query(
    relation: *mut UtopkRelation,
    k: usize,
    thres: f64,
    batch: usize,
    oracle: UtopkOracleFn,
    user_data: *mut c_void,
    ids: *mut u64,
    bins: *mut i64,
    capacity: usize,
    result: *mut UtopkQueryResult,
) -> UtopkStatus {
    guard(|| {
        let r = &mut mut_ref(relation, "relation")?.inner;
        let callback = oracle.ok_or_else(|| fail(UtopkStatus::NullPointer, "oracle is null"))?;
        if capacity < k {
            return Err(fail(UtopkStatus::BufferTooSmall, format!("need room for {k} members")));
        }
        let oracle = CallbackOracle { callback, user_data, calls: std::cell::Cell::new(0) };
        let cfg = QueryConfig::new(k, thres).with_batch(batch);
        let outcome = run_query(r, &oracle, &cfg).or_status()?;
        write_answer(&outcome.answer.members, ids, bins, capacity)?;
        if let Some(res) = result.as_mut() {
            *res = UtopkQueryResult {
                confidence: outcome.answer.confidence.unwrap_or(0.0),
                iterations: outcome.stats.iterations,
                frames_cleaned: outcome.stats.frames_cleaned,
                oracle_batches: outcome.stats.oracle_batches,
            };
        }
        Ok(())
    })
}
