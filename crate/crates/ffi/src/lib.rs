//! C interface to `ivf-rabitq`.
//!
//! Every function returns an [`IvrqStatus`]. On failure a message is kept per
//! thread and can be read with [`ivrq_last_error_message`] until the next
//! call on that thread. Indexes are opaque and owned by the caller once
//! created; release them with [`ivrq_index_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ivf_rabitq::{search_batch, BuildParams, Error, IpMode, IvfRabitqIndex, QuantizationParams, SearchParams, VectorMatrix};

/// Opaque index handle.
pub struct IvrqIndex {
    inner: IvfRabitqIndex,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvrqStatus {
    Ok = 0,
    InvalidArgument = 1,
    DimensionMismatch = 2,
    Format = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvrqIpMode {
    Lut = 0,
    Bitwise = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvrqBuildParams {
    /// Number of clusters; 0 picks ceil(sqrt(rows)).
    pub n_clusters: usize,
    pub kmeans_iters: usize,
    pub train_fraction: f64,
    /// Bits per dimension, 1 to 8.
    pub bits: u8,
    pub c_eps: f32,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvrqSearchParams {
    pub k: usize,
    pub n_probe: usize,
    pub ip_mode: IvrqIpMode,
    /// Query bits in bitwise mode, 2 to 8.
    pub query_bits: u8,
    pub refine: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(IvrqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) => IvrqStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => IvrqStatus::DimensionMismatch,
            Error::Format { .. } => IvrqStatus::Format,
            Error::Io(_) => IvrqStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IvrqStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IvrqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IvrqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
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
            IvrqStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(IvrqStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn index_ref<'a>(index: *const IvrqIndex) -> Result<&'a IvfRabitqIndex, Failure> {
    index.as_ref().map(|i| &i.inner).ok_or_else(|| null("index"))
}

unsafe fn matrix_arg(data: *const f32, rows: usize, dims: usize) -> Result<VectorMatrix, Failure> {
    if data.is_null() {
        return Err(null("data"));
    }
    let len = rows
        .checked_mul(dims)
        .ok_or_else(|| Failure(IvrqStatus::InvalidArgument, "rows * dims overflows".into()))?;
    let values = std::slice::from_raw_parts(data, len).to_vec();
    Ok(VectorMatrix::new(rows, dims, values)?)
}

#[no_mangle]
pub extern "C" fn ivrq_build_params_default() -> IvrqBuildParams {
    let p = BuildParams::default();
    IvrqBuildParams {
        n_clusters: 0,
        kmeans_iters: p.kmeans_iters,
        train_fraction: p.train_fraction,
        bits: p.quantization.bits,
        c_eps: p.quantization.c_eps,
        seed: p.seed,
    }
}

#[no_mangle]
pub extern "C" fn ivrq_search_params_default() -> IvrqSearchParams {
    let p = SearchParams::new(10, 1);
    IvrqSearchParams {
        k: p.k,
        n_probe: p.n_probe,
        ip_mode: IvrqIpMode::Lut,
        query_bits: p.query_bits,
        refine: p.refine,
    }
}

/// Builds an index over `rows` row-major vectors of `dims` floats. Row `i`
/// gets id `i`. `params` may be null for defaults.
///
/// # Safety
/// `data` must point to `rows * dims` floats and `out` to writable storage
/// for one pointer. `params`, if not null, must point to a valid struct.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_build(
    data: *const f32,
    rows: usize,
    dims: usize,
    params: *const IvrqBuildParams,
    out: *mut *mut IvrqIndex,
) -> IvrqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let x = matrix_arg(data, rows, dims)?;
        let p = params.as_ref().copied().unwrap_or_else(|| ivrq_build_params_default());
        let bp = BuildParams {
            n_clusters: (p.n_clusters > 0).then_some(p.n_clusters),
            kmeans_iters: p.kmeans_iters,
            train_fraction: p.train_fraction,
            quantization: QuantizationParams {
                bits: p.bits,
                c_eps: p.c_eps,
                ..QuantizationParams::default()
            },
            seed: p.seed,
        };
        let (inner, _) = IvfRabitqIndex::build(&x, &bp)?;
        *out = Box::into_raw(Box::new(IvrqIndex { inner }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_load(path: *const c_char, out: *mut *mut IvrqIndex) -> IvrqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let inner = IvfRabitqIndex::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(IvrqIndex { inner }));
        Ok(())
    })
}

/// # Safety
/// `index` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_save(index: *const IvrqIndex, path: *const c_char) -> IvrqStatus {
    guard(|| {
        let idx = index_ref(index)?;
        idx.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Releases an index. Null is ignored.
///
/// # Safety
/// `index` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_free(index: *mut IvrqIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Vector dimension, or 0 for a null index.
///
/// # Safety
/// `index` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_dims(index: *const IvrqIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.dims())
}

/// Number of indexed vectors, or 0 for a null index.
///
/// # Safety
/// `index` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_len(index: *const IvrqIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// Bits per dimension, or 0 for a null index.
///
/// # Safety
/// `index` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_bits(index: *const IvrqIndex) -> u8 {
    index.as_ref().map_or(0, |i| i.inner.bits())
}

/// Number of clusters, or 0 for a null index.
///
/// # Safety
/// `index` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_n_clusters(index: *const IvrqIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.n_clusters())
}

/// Searches `n_queries` row-major queries. Writes `n_queries * k` ids and
/// estimated squared distances, ascending per query. Rows with fewer than
/// `k` results are padded with id -1 and distance +inf.
///
/// # Safety
/// `queries` must hold `n_queries * dims` floats, `ids` and `dists` must
/// each have room for `n_queries * params->k` elements.
#[no_mangle]
pub unsafe extern "C" fn ivrq_index_search(
    index: *const IvrqIndex,
    queries: *const f32,
    n_queries: usize,
    dims: usize,
    params: *const IvrqSearchParams,
    ids: *mut i64,
    dists: *mut f32,
) -> IvrqStatus {
    guard(|| {
        let idx = index_ref(index)?;
        let p = params.as_ref().copied().ok_or_else(|| null("params"))?;
        if ids.is_null() || dists.is_null() {
            return Err(null("output buffer"));
        }
        let q = matrix_arg(queries, n_queries, dims)?;
        let sp = SearchParams {
            query_bits: p.query_bits,
            refine: p.refine,
            ..SearchParams::new(p.k, p.n_probe).with_mode(match p.ip_mode {
                IvrqIpMode::Lut => IpMode::Lut,
                IvrqIpMode::Bitwise => IpMode::Bitwise,
            })
        };
        let res = search_batch(&q, idx, &sp)?;
        let total = n_queries * p.k;
        let ids = std::slice::from_raw_parts_mut(ids, total);
        let dists = std::slice::from_raw_parts_mut(dists, total);
        ids.fill(-1);
        dists.fill(f32::INFINITY);
        for (i, n) in res.iter().enumerate() {
            for (j, (&id, &d)) in n.ids.iter().zip(&n.dists).take(p.k).enumerate() {
                ids[i * p.k + j] = id as i64;
                dists[i * p.k + j] = d;
            }
        }
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ivrq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
