//! C ABI over `ecpec-core`.
//!
//! An [`EcpecEngine`] holds model parameters and hyperparameters. Corpora go
//! in and results come out as JSON strings in the same schema the CLI writes.
//! Every call returns an [`EcpecStatus`]; on failure the message is available
//! from [`ecpec_last_error`] on the same thread until the next failing call.
//! Strings returned through out-pointers must be released with
//! [`ecpec_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ecpec_core::align::sinkhorn_with_stats;
use ecpec_core::pipeline::{evaluate, process_corpus, PredictionRecord};
use ecpec_core::{Corpus, DenseMatrix, Error, HyperParams, ModelParams, Space};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcpecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Corpus = 4,
    Params = 5,
    Config = 6,
    Eval = 7,
    Json = 8,
    Io = 9,
    Panic = 10,
}

/// Opaque engine handle.
pub struct EcpecEngine {
    params: ModelParams,
    hyper: HyperParams,
    threads: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EcpecStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Contract(_) => EcpecStatus::InvalidArgument,
            Error::Corpus { .. } => EcpecStatus::Corpus,
            Error::Config(_) => EcpecStatus::Config,
            Error::Params { .. } => EcpecStatus::Params,
            Error::Eval(_) => EcpecStatus::Eval,
            Error::Io { .. } => EcpecStatus::Io,
            Error::Json(_) => EcpecStatus::Json,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(EcpecStatus::Json, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EcpecStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EcpecStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EcpecStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(EcpecStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EcpecStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn engine_ref<'a>(engine: *const EcpecEngine) -> Result<&'a EcpecEngine, Failure> {
    engine.as_ref().ok_or_else(|| null("engine"))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(EcpecStatus::Json, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn corpus_for(engine: &EcpecEngine, json: &str) -> Result<Corpus, Failure> {
    let corpus = Corpus::from_json_str(json)?;
    if corpus.d_u != engine.params.d_u {
        return Err(Failure(
            EcpecStatus::InvalidArgument,
            format!(
                "corpus d_u {} does not match engine d_u {}",
                corpus.d_u, engine.params.d_u
            ),
        ));
    }
    Ok(corpus)
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ecpec_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates an engine. `params_path` may be null for seeded parameters.
///
/// # Safety
/// `params_path` must be null or a valid NUL-terminated string; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ecpec_engine_new(
    params_path: *const c_char,
    d_u: usize,
    seed: u64,
    out: *mut *mut EcpecEngine,
) -> EcpecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = if params_path.is_null() {
            None
        } else {
            Some(Path::new(read_str(params_path, "params_path")?))
        };
        let hyper = HyperParams::default();
        let params = ModelParams::load(path, d_u, hyper.layers, seed)?;
        *out = Box::into_raw(Box::new(EcpecEngine {
            params,
            hyper,
            threads: 1,
        }));
        Ok(())
    })
}

/// # Safety
/// `engine` must be null or a handle from [`ecpec_engine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ecpec_engine_free(engine: *mut EcpecEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Replaces the hyperparameters with a JSON object; missing fields take their
/// defaults. Changing `layers` is rejected.
///
/// # Safety
/// `engine` must be a live handle and `json` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ecpec_engine_set_hyperparams(
    engine: *mut EcpecEngine,
    json: *const c_char,
) -> EcpecStatus {
    guard(|| {
        let engine = engine.as_mut().ok_or_else(|| null("engine"))?;
        let hyper: HyperParams = serde_json::from_str(read_str(json, "json")?)?;
        hyper.validate()?;
        let built = engine.params.layers(Space::Emotion).len();
        if hyper.layers != built {
            return Err(Failure(
                EcpecStatus::InvalidArgument,
                format!("engine was built with {built} layers"),
            ));
        }
        engine.hyper = hyper;
        Ok(())
    })
}

/// Worker threads for corpus calls; 0 lets the pool decide. Output does not
/// depend on this value.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecpec_engine_set_threads(
    engine: *mut EcpecEngine,
    threads: usize,
) -> EcpecStatus {
    guard(|| {
        engine.as_mut().ok_or_else(|| null("engine"))?.threads = threads;
        Ok(())
    })
}

/// Runs the model over a corpus and returns `{"conversations": [...]}` in the
/// `predictions.json` schema.
///
/// # Safety
/// `engine` must be a live handle, `corpus_json` a valid NUL-terminated
/// string and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ecpec_engine_predict(
    engine: *const EcpecEngine,
    corpus_json: *const c_char,
    out_json: *mut *mut c_char,
) -> EcpecStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let engine = engine_ref(engine)?;
        let corpus = corpus_for(engine, read_str(corpus_json, "corpus_json")?)?;
        let results = process_corpus(&corpus, &engine.params, &engine.hyper, engine.threads)?;
        let records: Vec<PredictionRecord> = results.iter().map(PredictionRecord::from).collect();
        let json = serde_json::to_string(&serde_json::json!({ "conversations": records }))?;
        write_string(out_json, json)
    })
}

/// Runs the model and scores it against the corpus gold pairs; returns the
/// `eval.json` object.
///
/// # Safety
/// Same as [`ecpec_engine_predict`].
#[no_mangle]
pub unsafe extern "C" fn ecpec_engine_evaluate(
    engine: *const EcpecEngine,
    corpus_json: *const c_char,
    out_json: *mut *mut c_char,
) -> EcpecStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let engine = engine_ref(engine)?;
        let corpus = corpus_for(engine, read_str(corpus_json, "corpus_json")?)?;
        let results = process_corpus(&corpus, &engine.params, &engine.hyper, engine.threads)?;
        let preds: Vec<_> = results.iter().map(|r| r.to_prediction()).collect();
        let json = serde_json::to_string(&evaluate(&preds, &corpus)?)?;
        write_string(out_json, json)
    })
}

/// Entropic OT with uniform marginals on a row-major `n x n` cost. Writes the
/// plan to `out_plan` (n*n values) and, if non-null, the sweep count to
/// `out_iterations`.
///
/// # Safety
/// `cost` and `out_plan` must point to `n * n` doubles; `out_iterations` must
/// be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ecpec_sinkhorn(
    cost: *const f64,
    n: usize,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
    out_plan: *mut f64,
    out_iterations: *mut usize,
) -> EcpecStatus {
    guard(|| {
        if cost.is_null() {
            return Err(null("cost"));
        }
        if out_plan.is_null() {
            return Err(null("out_plan"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Failure(EcpecStatus::InvalidArgument, "n * n overflows".into()))?;
        let c = DenseMatrix::from_vec(n, n, std::slice::from_raw_parts(cost, len).to_vec())?;
        let sol = sinkhorn_with_stats(&c, epsilon, max_iters, tol)?;
        std::slice::from_raw_parts_mut(out_plan, len).copy_from_slice(sol.plan.as_slice());
        if !out_iterations.is_null() {
            *out_iterations = sol.iterations;
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ecpec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn ecpec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
