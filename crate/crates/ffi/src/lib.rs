//! C ABI over the eegshield library.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns an [`EsStatus`]; on failure the message is
//! available from [`es_last_error`] on the same thread until the next call.
//! Panics are caught at the boundary and reported as `ES_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eegshield::data::{self, Dataset, PerturbationMode, PerturbationSet, SynthConfig};
use eegshield::eval::{self, Condition, EvalConfig, ExperimentReport};
use eegshield::nets::{ExtractorConfig, OptimizerConfig, TrainConfig};
use eegshield::shield::{self, SampleHyper, UserHyper};
use eegshield::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Format = 4,
    Corruption = 5,
    Validation = 6,
    Protocol = 7,
    Io = 8,
    Panic = 9,
}

pub struct EsDataset(Dataset);
pub struct EsPerturbation(PerturbationSet);
pub struct EsReport(ExperimentReport);

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct EsSynthConfig {
    pub users: usize,
    pub sessions: usize,
    pub trials_per_user_per_session: usize,
    pub channels: usize,
    pub len: usize,
    pub classes: usize,
    pub identity_amplitude: f64,
    pub task_amplitude: f64,
    pub session_amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EsDims {
    pub trials: usize,
    pub channels: usize,
    pub samples: usize,
    pub classes: usize,
    pub users: usize,
    pub sessions: usize,
}

/// `extractor`: 0 selects cfgA, 1 selects cfgB.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct EsSampleParams {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub n_iter: usize,
    pub model_epochs: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub extractor: u32,
}

/// A negative `gamma` selects the default `1e-6 / beta`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct EsUserParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub init_std: f64,
    pub m_model: usize,
    pub m_pert: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub extractor: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct EsEvalParams {
    pub extractor: u32,
    pub epochs: usize,
    pub head_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub repeats: usize,
    pub seed: u64,
    pub curves: bool,
    pub perturb_test: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EsPerturbationInfo {
    /// 0 sample-wise, 1 user-wise.
    pub mode: u32,
    pub count: usize,
    pub channels: usize,
    pub samples: usize,
    pub epsilon: f64,
    pub max_abs: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EsAggregate {
    pub bca_mean: f64,
    pub bca_std: f64,
    pub uia_mean: f64,
    pub uia_std: f64,
    pub folds: usize,
}

/// Condition codes for [`es_eval_loso`].
pub const ES_CONDITION_SAMPLE_WISE: u32 = 0;
pub const ES_CONDITION_USER_WISE: u32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension(_) | Error::Label(_) | Error::Parameter(_) | Error::Contract(_) => {
                EsStatus::InvalidArgument
            }
            Error::Numerical(_) => EsStatus::Numerical,
            Error::Format(_) | Error::Json(_) => EsStatus::Format,
            Error::Corruption(_) => EsStatus::Corruption,
            Error::Validation(_) => EsStatus::Validation,
            Error::Protocol(_) => EsStatus::Protocol,
            Error::Io(_) => EsStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EsStatus::InvalidArgument, msg.into())
}

fn set_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            EsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(Some(format!("panic: {msg}")));
            EsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(EsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<T>(p: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure(EsStatus::NullPointer, format!("{what} is null")));
    }
    *p = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure(EsStatus::NullPointer, format!("{what} is null")));
    }
    *p = value;
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(EsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(EsStatus::NullPointer, "path is null".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not UTF-8"))
}

fn extractor(code: u32) -> Result<ExtractorConfig, Failure> {
    match code {
        0 => Ok(ExtractorConfig::cfg_a()),
        1 => Ok(ExtractorConfig::cfg_b()),
        other => Err(invalid(format!("unknown extractor code {other}"))),
    }
}

fn labels(values: &[u32]) -> Vec<usize> {
    values.iter().map(|&v| v as usize).collect()
}

/// Message of the last failed call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn es_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn es_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn es_synth_config_reference() -> EsSynthConfig {
    let c = SynthConfig::reference();
    EsSynthConfig {
        users: c.users,
        sessions: c.sessions,
        trials_per_user_per_session: c.trials_per_user_per_session,
        channels: c.channels,
        len: c.len,
        classes: c.classes,
        identity_amplitude: c.identity_amplitude,
        task_amplitude: c.task_amplitude,
        session_amplitude: c.session_amplitude,
        noise_std: c.noise_std,
        seed: c.seed,
    }
}

#[no_mangle]
pub unsafe extern "C" fn es_synth_generate(
    cfg: *const EsSynthConfig,
    out_dataset: *mut *mut EsDataset,
) -> EsStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let cfg = SynthConfig {
            users: c.users,
            sessions: c.sessions,
            trials_per_user_per_session: c.trials_per_user_per_session,
            channels: c.channels,
            len: c.len,
            classes: c.classes,
            identity_amplitude: c.identity_amplitude,
            task_amplitude: c.task_amplitude,
            session_amplitude: c.session_amplitude,
            noise_std: c.noise_std,
            seed: c.seed,
        };
        out(
            out_dataset,
            EsDataset(data::synth_generate(&cfg)?),
            "out_dataset",
        )
    })
}

/// Builds a dataset from `trials × channels × samples` row-major values and
/// per-trial labels.
#[no_mangle]
pub unsafe extern "C" fn es_dataset_new(
    dims: *const EsDims,
    values: *const f64,
    task_labels: *const u32,
    user_labels: *const u32,
    session_labels: *const u32,
    out_dataset: *mut *mut EsDataset,
) -> EsStatus {
    guard(|| {
        let d = deref(dims, "dims")?;
        let size = d
            .trials
            .checked_mul(d.channels)
            .and_then(|v| v.checked_mul(d.samples))
            .ok_or_else(|| invalid("dataset size overflows"))?;
        let values = slice(values, size, "values")?;
        let ds = Dataset::new(
            d.channels,
            d.samples,
            d.classes,
            d.users,
            d.sessions,
            values.to_vec(),
            labels(slice(task_labels, d.trials, "task_labels")?),
            labels(slice(user_labels, d.trials, "user_labels")?),
            labels(slice(session_labels, d.trials, "session_labels")?),
        )?;
        out(out_dataset, EsDataset(ds), "out_dataset")
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_dataset_read(
    path_utf8: *const c_char,
    out_dataset: *mut *mut EsDataset,
) -> EsStatus {
    guard(|| {
        out(
            out_dataset,
            EsDataset(data::read_dataset(path(path_utf8)?)?),
            "out_dataset",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_dataset_write(
    dataset: *const EsDataset,
    path_utf8: *const c_char,
) -> EsStatus {
    guard(|| {
        Ok(data::write_dataset(
            &deref(dataset, "dataset")?.0,
            path(path_utf8)?,
        )?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_dataset_dims(
    dataset: *const EsDataset,
    out_dims: *mut EsDims,
) -> EsStatus {
    guard(|| {
        let d = &deref(dataset, "dataset")?.0;
        let dims = EsDims {
            trials: d.len(),
            channels: d.channels(),
            samples: d.samples(),
            classes: d.classes(),
            users: d.users(),
            sessions: d.sessions(),
        };
        write(out_dims, dims, "out_dims")
    })
}

/// Copies all trial values; `len` must equal `trials × channels × samples`.
#[no_mangle]
pub unsafe extern "C" fn es_dataset_values(
    dataset: *const EsDataset,
    buf: *mut f64,
    len: usize,
) -> EsStatus {
    guard(|| {
        let d = &deref(dataset, "dataset")?.0;
        copy_out(d.data(), buf, len)
    })
}

/// Copies per-trial labels; `kind` is 0 task, 1 user, 2 session.
#[no_mangle]
pub unsafe extern "C" fn es_dataset_labels(
    dataset: *const EsDataset,
    kind: u32,
    buf: *mut u32,
    len: usize,
) -> EsStatus {
    guard(|| {
        let d = &deref(dataset, "dataset")?.0;
        let src = match kind {
            0 => d.task_labels(),
            1 => d.user_labels(),
            2 => d.session_labels(),
            other => return Err(invalid(format!("unknown label kind {other}"))),
        };
        let v: Vec<u32> = src.iter().map(|&l| l as u32).collect();
        copy_out(&v, buf, len)
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize) -> Result<(), Failure> {
    if len != src.len() {
        return Err(invalid(format!(
            "buffer holds {len} values, need {}",
            src.len()
        )));
    }
    if len > 0 {
        if buf.is_null() {
            return Err(Failure(EsStatus::NullPointer, "buf is null".into()));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    }
    Ok(())
}

#[no_mangle]
pub unsafe extern "C" fn es_dataset_free(dataset: *mut EsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn es_perturbation_read(
    path_utf8: *const c_char,
    out_pert: *mut *mut EsPerturbation,
) -> EsStatus {
    guard(|| {
        out(
            out_pert,
            EsPerturbation(data::read_perturbation(path(path_utf8)?)?),
            "out_pert",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_perturbation_write(
    pert: *const EsPerturbation,
    path_utf8: *const c_char,
) -> EsStatus {
    guard(|| {
        Ok(data::write_perturbation(
            &deref(pert, "pert")?.0,
            path(path_utf8)?,
        )?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_perturbation_info(
    pert: *const EsPerturbation,
    out_info: *mut EsPerturbationInfo,
) -> EsStatus {
    guard(|| {
        let p = &deref(pert, "pert")?.0;
        let info = EsPerturbationInfo {
            mode: match p.mode() {
                PerturbationMode::SampleWise => 0,
                PerturbationMode::UserWise => 1,
            },
            count: p.count(),
            channels: p.channels(),
            samples: p.samples(),
            epsilon: p.epsilon(),
            max_abs: p.max_abs(),
        };
        write(out_info, info, "out_info")
    })
}

/// Copies all deltas; `len` must equal `count × channels × samples`.
#[no_mangle]
pub unsafe extern "C" fn es_perturbation_values(
    pert: *const EsPerturbation,
    buf: *mut f64,
    len: usize,
) -> EsStatus {
    guard(|| copy_out(deref(pert, "pert")?.0.data(), buf, len))
}

#[no_mangle]
pub unsafe extern "C" fn es_perturbation_free(pert: *mut EsPerturbation) {
    if !pert.is_null() {
        drop(Box::from_raw(pert));
    }
}

#[no_mangle]
pub unsafe extern "C" fn es_apply(
    dataset: *const EsDataset,
    pert: *const EsPerturbation,
    out_dataset: *mut *mut EsDataset,
) -> EsStatus {
    guard(|| {
        let d = data::apply_perturbation(&deref(dataset, "dataset")?.0, &deref(pert, "pert")?.0)?;
        out(out_dataset, EsDataset(d), "out_dataset")
    })
}

#[no_mangle]
pub extern "C" fn es_sample_params_default() -> EsSampleParams {
    let h = SampleHyper::default();
    EsSampleParams {
        alpha: h.alpha,
        beta: h.beta,
        epsilon: h.epsilon,
        eta: h.eta,
        n_iter: h.n_iter,
        model_epochs: h.model_epochs,
        rounds: h.rounds,
        batch_size: h.batch_size,
        lr: h.optimizer.lr,
        seed: h.seed,
        extractor: 0,
    }
}

/// Crafts bounded per-trial deltas. Either output may be null if unwanted.
#[no_mangle]
pub unsafe extern "C" fn es_shield_sample(
    dataset: *const EsDataset,
    params: *const EsSampleParams,
    out_pert: *mut *mut EsPerturbation,
    out_dataset: *mut *mut EsDataset,
) -> EsStatus {
    guard(|| {
        let d = &deref(dataset, "dataset")?.0;
        let p = deref(params, "params")?;
        let hyper = SampleHyper {
            alpha: p.alpha,
            beta: p.beta,
            epsilon: p.epsilon,
            eta: p.eta,
            n_iter: p.n_iter,
            model_epochs: p.model_epochs,
            rounds: p.rounds,
            batch_size: p.batch_size,
            optimizer: OptimizerConfig::adam(p.lr),
            seed: p.seed,
            ..SampleHyper::default()
        };
        let o = shield::generate_sample_wise(d, &extractor(p.extractor)?, &hyper)?;
        store_outputs(o.perturbation, o.perturbed, out_pert, out_dataset)
    })
}

#[no_mangle]
pub extern "C" fn es_user_params_default() -> EsUserParams {
    let h = UserHyper::default();
    EsUserParams {
        alpha: h.alpha,
        beta: h.beta,
        gamma: -1.0,
        init_std: h.init_std,
        m_model: h.m_model,
        m_pert: h.m_pert,
        batch_size: h.batch_size,
        lr: h.model_optimizer.lr,
        seed: h.seed,
        extractor: 0,
    }
}

/// Crafts one template per user. Either output may be null if unwanted.
#[no_mangle]
pub unsafe extern "C" fn es_shield_user(
    dataset: *const EsDataset,
    params: *const EsUserParams,
    out_pert: *mut *mut EsPerturbation,
    out_dataset: *mut *mut EsDataset,
) -> EsStatus {
    guard(|| {
        let d = &deref(dataset, "dataset")?.0;
        let p = deref(params, "params")?;
        let hyper = UserHyper {
            alpha: p.alpha,
            beta: p.beta,
            gamma: (p.gamma >= 0.0).then_some(p.gamma),
            init_std: p.init_std,
            m_model: p.m_model,
            m_pert: p.m_pert,
            batch_size: p.batch_size,
            model_optimizer: OptimizerConfig::adam(p.lr),
            template_optimizer: OptimizerConfig::adam(p.lr),
            seed: p.seed,
        };
        let o = shield::generate_user_wise(d, &extractor(p.extractor)?, &hyper)?;
        store_outputs(o.perturbation, o.perturbed, out_pert, out_dataset)
    })
}

unsafe fn store_outputs(
    p: PerturbationSet,
    d: Dataset,
    out_pert: *mut *mut EsPerturbation,
    out_dataset: *mut *mut EsDataset,
) -> Result<(), Failure> {
    if !out_pert.is_null() {
        *out_pert = Box::into_raw(Box::new(EsPerturbation(p)));
    }
    if !out_dataset.is_null() {
        *out_dataset = Box::into_raw(Box::new(EsDataset(d)));
    }
    Ok(())
}

#[no_mangle]
pub unsafe extern "C" fn es_bca(
    predictions: *const u32,
    labels_: *const u32,
    n: usize,
    classes: usize,
    out_value: *mut f64,
) -> EsStatus {
    guard(|| {
        let p = labels(slice(predictions, n, "predictions")?);
        let l = labels(slice(labels_, n, "labels")?);
        write(out_value, eval::bca(&p, &l, classes)?, "out_value")
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_uia(
    predictions: *const u32,
    labels_: *const u32,
    n: usize,
    out_value: *mut f64,
) -> EsStatus {
    guard(|| {
        let p = labels(slice(predictions, n, "predictions")?);
        let l = labels(slice(labels_, n, "labels")?);
        write(out_value, eval::uia(&p, &l)?, "out_value")
    })
}

#[no_mangle]
pub extern "C" fn es_eval_params_default() -> EsEvalParams {
    let e = EvalConfig::default();
    EsEvalParams {
        extractor: 0,
        epochs: e.train.epochs,
        head_epochs: e.train.head_epochs,
        batch_size: e.train.batch_size,
        lr: e.train.optimizer.lr,
        repeats: e.repeats,
        seed: e.train.seed,
        curves: e.curves,
        perturb_test: e.perturb_test,
    }
}

/// Leave-one-session-out evaluation. `perturbed` may be null for a clean run,
/// in which case `condition` is ignored.
#[no_mangle]
pub unsafe extern "C" fn es_eval_loso(
    clean: *const EsDataset,
    perturbed: *const EsDataset,
    condition: u32,
    params: *const EsEvalParams,
    out_report: *mut *mut EsReport,
) -> EsStatus {
    guard(|| {
        let c = &deref(clean, "clean")?.0;
        let p = deref(params, "params")?;
        let cfg = EvalConfig {
            extractor: extractor(p.extractor)?,
            train: TrainConfig {
                alpha: 0.0,
                batch_size: p.batch_size,
                epochs: p.epochs,
                head_epochs: p.head_epochs,
                seed: p.seed,
                optimizer: OptimizerConfig::adam(p.lr),
            },
            repeats: p.repeats,
            curves: p.curves,
            perturb_test: p.perturb_test,
        };
        let pert = match perturbed.as_ref() {
            None => None,
            Some(d) => Some((
                &d.0,
                match condition {
                    ES_CONDITION_SAMPLE_WISE => Condition::SampleWise,
                    ES_CONDITION_USER_WISE => Condition::UserWise,
                    other => return Err(invalid(format!("unknown condition code {other}"))),
                },
            )),
        };
        out(
            out_report,
            EsReport(eval::run_loso(c, pert, &cfg)?),
            "out_report",
        )
    })
}

/// Attaches a clean baseline so the report carries reductions.
#[no_mangle]
pub unsafe extern "C" fn es_report_pair(
    report: *mut EsReport,
    baseline: *const EsReport,
) -> EsStatus {
    guard(|| {
        let b = &deref(baseline, "baseline")?.0;
        let r = report
            .as_mut()
            .ok_or_else(|| Failure(EsStatus::NullPointer, "report is null".into()))?;
        r.0 = r.0.clone().paired_with(b)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_report_aggregate(
    report: *const EsReport,
    out_aggregate: *mut EsAggregate,
) -> EsStatus {
    guard(|| {
        let r = &deref(report, "report")?.0;
        let a = r.aggregate;
        let agg = EsAggregate {
            bca_mean: a.bca_mean,
            bca_std: a.bca_std,
            uia_mean: a.uia_mean,
            uia_std: a.uia_std,
            folds: r.folds.len(),
        };
        write(out_aggregate, agg, "out_aggregate")
    })
}

/// Report as JSON; release the string with [`es_string_free`].
#[no_mangle]
pub unsafe extern "C" fn es_report_json(
    report: *const EsReport,
    out_json: *mut *mut c_char,
) -> EsStatus {
    guard(|| {
        let json = deref(report, "report")?.0.to_json()?;
        let c = CString::new(json).map_err(|_| invalid("report contains NUL"))?;
        write(out_json, c.into_raw(), "out_json")
    })
}

/// Writes `report.json` and `curves.csv` into `dir`.
#[no_mangle]
pub unsafe extern "C" fn es_report_write(
    report: *const EsReport,
    dir_utf8: *const c_char,
) -> EsStatus {
    guard(|| {
        Ok(eval::write_report(
            &deref(report, "report")?.0,
            path(dir_utf8)?,
        )?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn es_report_free(report: *mut EsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[no_mangle]
pub unsafe extern "C" fn es_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
