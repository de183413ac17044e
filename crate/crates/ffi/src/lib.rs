//! C interface to the bugsgraph engine.
//!
//! Every handle is opaque and owned by the caller, who releases it with the
//! matching `*_free` function. Functions return a [`BgStatus`]; on failure
//! [`bg_last_error_message`] describes the problem for the calling thread.
//! Strings are NUL-terminated UTF-8. Node lists are `;`-separated specs
//! such as `"alpha;theta[1:3]"`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use bugsgraph::algorithms::{
    Mcem, McemControl, Mcmc, McmcConfiguration, SamplerControl, SamplerKind,
};
use bugsgraph::data::{parse_json, NamedArrays};
use bugsgraph::graph::ModelDefinition;
use bugsgraph::runtime::{Model, ModelValues};
use bugsgraph::{Error, ErrorClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad argument, unknown name or configuration problem.
    Usage = 3,
    /// The model failed to parse, build or initialize.
    Model = 4,
    /// A numerical failure during computation.
    Numeric = 5,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

/// A model instance with its own values and random number generator.
pub struct BgModel {
    inner: Model,
}

/// An MCMC sampler configuration built against a model.
pub struct BgMcmcConfig {
    inner: McmcConfiguration,
}

/// A running MCMC chain. It owns a copy of the model it was built from.
pub struct BgMcmc {
    inner: Mcmc,
}

/// A table of samples: one row per saved iteration.
pub struct BgSamples {
    inner: ModelValues,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(BgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Usage => BgStatus::Usage,
            ErrorClass::Model => BgStatus::Model,
            ErrorClass::Numeric => BgStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> BgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            BgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(BgStatus::NullPointer, format!("`{what}` is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            BgStatus::InvalidUtf8,
            format!("`{what}` is not valid UTF-8"),
        )
    })
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn json_arg(p: *const c_char, what: &str) -> FfiResult<NamedArrays> {
    match opt_str_arg(p, what)? {
        Some(text) => Ok(parse_json(text)?),
        None => Ok(BTreeMap::new()),
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

fn split_specs(s: &str) -> Vec<&str> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect()
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_buffer(
    values: &[f64],
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> FfiResult {
    write_out(out_len, values.len(), "out_len")?;
    if values.len() > capacity {
        return Err(Failure(
            BgStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", values.len()),
        ));
    }
    if !values.is_empty() {
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    }
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Compiles `source` and creates a model. `constants`, `data` and `inits`
/// are JSON objects of named arrays and may be NULL.
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bg_model_new(
    source: *const c_char,
    constants: *const c_char,
    data: *const c_char,
    inits: *const c_char,
    seed: u64,
    out: *mut *mut BgModel,
) -> BgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let src = str_arg(source, "source")?;
        let constants = json_arg(constants, "constants")?;
        let data = json_arg(data, "data")?;
        let inits = json_arg(inits, "inits")?;
        let def = Arc::new(ModelDefinition::from_source(src, &constants)?);
        let inner = Model::new(def, &data, &inits, seed)?;
        out.write(Box::into_raw(Box::new(BgModel { inner })));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`bg_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_model_free(model: *mut BgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of nodes in the model graph.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_model_node_count(model: *const BgModel, out: *mut usize) -> BgStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        write_out(out, m.inner.definition().len(), "out")
    })
}

unsafe fn nodes_of(m: &Model, specs: *const c_char) -> FfiResult<Vec<usize>> {
    match opt_str_arg(specs, "nodes")? {
        None => Ok(m.all_nodes()),
        Some(s) => Ok(m.expand_all(&split_specs(s))?),
    }
}

/// Recomputes the given nodes (all nodes when `nodes` is NULL) and writes
/// the sum of their log probabilities.
///
/// # Safety
/// `model` must be a live handle, `nodes` NULL or a C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_model_calculate(
    model: *mut BgModel,
    nodes: *const c_char,
    out: *mut f64,
) -> BgStatus {
    guard(|| {
        let m = mut_arg(model, "model")?;
        let ids = nodes_of(&m.inner, nodes)?;
        let lp = m.inner.calculate(&ids);
        write_out(out, lp, "out")
    })
}

/// Sum of the stored log probabilities of the given nodes.
///
/// # Safety
/// As for [`bg_model_calculate`].
#[no_mangle]
pub unsafe extern "C" fn bg_model_get_log_prob(
    model: *const BgModel,
    nodes: *const c_char,
    out: *mut f64,
) -> BgStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let ids = nodes_of(&m.inner, nodes)?;
        write_out(out, m.inner.get_log_prob(&ids), "out")
    })
}

/// Draws new values for the given non-data nodes (all when NULL).
///
/// # Safety
/// As for [`bg_model_calculate`].
#[no_mangle]
pub unsafe extern "C" fn bg_model_simulate(model: *mut BgModel, nodes: *const c_char) -> BgStatus {
    guard(|| {
        let m = mut_arg(model, "model")?;
        let ids = nodes_of(&m.inner, nodes)?;
        m.inner.simulate(&ids, false);
        Ok(())
    })
}

/// Copies the values of `spec` (e.g. `"theta[2:4]"`) into `buf`. The
/// number of values is written to `out_len` even when `capacity` is too
/// small.
///
/// # Safety
/// `buf` must hold `capacity` doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bg_model_get_values(
    model: *const BgModel,
    spec: *const c_char,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BgStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let values = m.inner.get(str_arg(spec, "spec")?)?;
        write_buffer(&values, buf, capacity, out_len)
    })
}

/// Sets the values of `spec`; a single value is broadcast. Log
/// probabilities are not recomputed.
///
/// # Safety
/// `values` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_model_set_values(
    model: *mut BgModel,
    spec: *const c_char,
    values: *const f64,
    len: usize,
) -> BgStatus {
    guard(|| {
        let m = mut_arg(model, "model")?;
        let spec = str_arg(spec, "spec")?;
        if values.is_null() && len > 0 {
            return Err(null("values"));
        }
        let vals = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(values, len)
        };
        Ok(m.inner.set(spec, vals)?)
    })
}

/// Default configuration: one scalar random-walk sampler per unobserved
/// stochastic node, monitoring the top-level variables.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_config_new(
    model: *const BgModel,
    out: *mut *mut BgMcmcConfig,
) -> BgStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let inner = McmcConfiguration::new(&m.inner);
        write_out(out, Box::into_raw(Box::new(BgMcmcConfig { inner })), "out")
    })
}

/// # Safety
/// `config` must come from [`bg_mcmc_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_config_free(config: *mut BgMcmcConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Adds a sampler of `kind` (`"RW"` or `"RW_block"`) on `targets` with
/// default controls.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_config_add_sampler(
    config: *mut BgMcmcConfig,
    kind: *const c_char,
    targets: *const c_char,
) -> BgStatus {
    guard(|| {
        let c = mut_arg(config, "config")?;
        let kind: SamplerKind = str_arg(kind, "kind")?.parse()?;
        let targets = split_specs(str_arg(targets, "targets")?);
        Ok(c.inner
            .add_sampler(kind, &targets, SamplerControl::default())?)
    })
}

/// Removes every sampler acting on `targets`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_config_remove_samplers(
    config: *mut BgMcmcConfig,
    targets: *const c_char,
) -> BgStatus {
    guard(|| {
        let c = mut_arg(config, "config")?;
        for t in split_specs(str_arg(targets, "targets")?) {
            c.inner.remove_samplers_for(t)?;
        }
        Ok(())
    })
}

/// Number of samplers in the configuration.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_config_sampler_count(
    config: *const BgMcmcConfig,
    out: *mut usize,
) -> BgStatus {
    guard(|| {
        let c = ref_arg(config, "config")?;
        write_out(out, c.inner.samplers().len(), "out")
    })
}

/// Replaces the monitored variables.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_config_set_monitors(
    config: *mut BgMcmcConfig,
    variables: *const c_char,
) -> BgStatus {
    guard(|| {
        let c = mut_arg(config, "config")?;
        let names = split_specs(str_arg(variables, "variables")?);
        Ok(c.inner.set_monitors(&names)?)
    })
}

/// Builds a chain from a copy of `model` and `config`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_new(
    model: *const BgModel,
    config: *const BgMcmcConfig,
    out: *mut *mut BgMcmc,
) -> BgStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let c = ref_arg(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Mcmc::new(m.inner.clone(), &c.inner)?;
        out.write(Box::into_raw(Box::new(BgMcmc { inner })));
        Ok(())
    })
}

/// # Safety
/// `mcmc` must come from [`bg_mcmc_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_free(mcmc: *mut BgMcmc) {
    if !mcmc.is_null() {
        drop(Box::from_raw(mcmc));
    }
}

/// Runs `niter` iterations, keeping every `thin`-th one after `burnin`.
/// The chain continues from where a previous run stopped.
///
/// # Safety
/// `mcmc` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_run(
    mcmc: *mut BgMcmc,
    niter: usize,
    burnin: usize,
    thin: usize,
    out: *mut *mut BgSamples,
) -> BgStatus {
    guard(|| {
        let r = mut_arg(mcmc, "mcmc")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = r.inner.run(niter, burnin, thin)?;
        out.write(Box::into_raw(Box::new(BgSamples { inner })));
        Ok(())
    })
}

/// Acceptance rate of sampler `index` over all iterations so far.
///
/// # Safety
/// `mcmc` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_mcmc_acceptance_rate(
    mcmc: *const BgMcmc,
    index: usize,
    out: *mut f64,
) -> BgStatus {
    guard(|| {
        let r = ref_arg(mcmc, "mcmc")?;
        let stats = r.inner.sampler_stats();
        let s = stats.get(index).ok_or_else(|| {
            Failure(
                BgStatus::Usage,
                format!("sampler {index} out of range ({} samplers)", stats.len()),
            )
        })?;
        write_out(out, s.acceptance_rate(), "out")
    })
}

/// # Safety
/// `samples` must come from [`bg_mcmc_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_samples_free(samples: *mut BgSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

/// # Safety
/// `samples` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bg_samples_rows(samples: *const BgSamples, out: *mut usize) -> BgStatus {
    guard(|| {
        let s = ref_arg(samples, "samples")?;
        write_out(out, s.inner.rows(), "out")
    })
}

/// Copies the column of element `name` (e.g. `"theta[3]"`) into `buf`.
///
/// # Safety
/// `buf` must hold `capacity` doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bg_samples_column(
    samples: *const BgSamples,
    name: *const c_char,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> BgStatus {
    guard(|| {
        let s = ref_arg(samples, "samples")?;
        let col = s.inner.column(str_arg(name, "name")?)?;
        write_buffer(&col, buf, capacity, out_len)
    })
}

/// Writes the samples as CSV with element names in the header.
///
/// # Safety
/// `samples` must be a live handle and `path` a C string.
#[no_mangle]
pub unsafe extern "C" fn bg_samples_write_csv(
    samples: *const BgSamples,
    path: *const c_char,
) -> BgStatus {
    guard(|| {
        let s = ref_arg(samples, "samples")?;
        Ok(s.inner.save_csv(str_arg(path, "path")?)?)
    })
}

/// Runs Monte Carlo EM on a copy of `model` with default controls, taking
/// the top-level nodes as parameters. Estimates are written in the order of
/// the model's top-level nodes.
///
/// # Safety
/// `buf` must hold `capacity` doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bg_mcem_run(
    model: *const BgModel,
    max_iter: usize,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
    out_converged: *mut bool,
) -> BgStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let control = McemControl {
            max_iter,
            ..McemControl::default()
        };
        let mut mcem = Mcem::new(m.inner.clone(), None, None, control)?;
        let res = mcem.run()?;
        write_out(out_converged, res.converged, "out_converged")?;
        write_buffer(&res.estimates, buf, capacity, out_len)
    })
}
