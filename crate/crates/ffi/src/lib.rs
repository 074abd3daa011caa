//! C ABI over the stackelberg simulation engine.
//!
//! Games and traces are opaque handles created and freed by this library.
//! Every fallible call returns a [`StkStatus`]; on failure the message is
//! available from [`stk_last_error`] on the same thread. Vectors cross the
//! boundary as `(pointer, length)` pairs of `double`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_int, size_t};

use stackelberg::config::{GameSpec, RunSpec};
use stackelberg::equilibria::{self, OracleSettings};
use stackelberg::{dynamics, Error, StrategicGame, Trace, Vector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Config = 4,
    DegenerateGame = 5,
    Diverged = 6,
    NonFinite = 7,
    Unavailable = 8,
    Io = 9,
    Panic = 10,
}

/// Opaque game handle.
pub struct StkGame {
    inner: Box<dyn StrategicGame>,
}

/// Opaque trace handle.
pub struct StkTrace {
    inner: Trace,
}

/// Risks of both players at both equilibria.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StkRisks {
    pub dm_leads_risk_dm: f64,
    pub dm_leads_risk_agents: f64,
    pub agents_lead_risk_dm: f64,
    pub agents_lead_risk_agents: f64,
}

/// Scalar fields of one trace epoch.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StkEpoch {
    pub epoch: size_t,
    pub loss_dm: f64,
    pub loss_agents: f64,
    pub running_avg_dm: f64,
    pub running_avg_agents: f64,
    /// NaN when `has_br_gap` is 0.
    pub br_gap: f64,
    pub has_br_gap: c_int,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(error: &Error) -> StkStatus {
    match error {
        Error::DimensionMismatch { .. } => StkStatus::DimensionMismatch,
        Error::Config(_) | Error::Validation(_) | Error::Json(_) | Error::ZeroPerturbation { .. } => StkStatus::Config,
        Error::DegenerateGame(_) => StkStatus::DegenerateGame,
        Error::Diverged { .. } => StkStatus::Diverged,
        Error::NonFinite(_) => StkStatus::NonFinite,
        Error::DiagnosticUnavailable(_) => StkStatus::Unavailable,
        Error::Io(_) | Error::Csv(_) => StkStatus::Io,
    }
}

struct Failure(StkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(StkStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> StkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            StkStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            StkStatus::Panic
        }
    }
}

unsafe fn vector<'a>(data: *const f64, len: size_t, what: &str) -> Result<Vector, Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    if len == 0 {
        return Err(Failure(StkStatus::InvalidArgument, format!("{what} has length 0")));
    }
    // SAFETY: caller promises `data` points to `len` readable doubles.
    let slice: &'a [f64] = unsafe { std::slice::from_raw_parts(data, len) };
    Ok(Vector::from_column_slice(slice))
}

unsafe fn string<'a>(text: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if text.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller promises a NUL-terminated string.
    unsafe { CStr::from_ptr(text) }
        .to_str()
        .map_err(|_| Failure(StkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn game_ref<'a>(game: *const StkGame) -> Result<&'a StkGame, Failure> {
    // SAFETY: non-null handles come from `stk_game_*_new` and are live.
    unsafe { game.as_ref() }.ok_or_else(|| null("game"))
}

unsafe fn write_vector(out: *mut f64, len: size_t, v: &[f64], what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    if len != v.len() {
        return Err(Failure(
            StkStatus::DimensionMismatch,
            format!("{what} has room for {len} values, need {}", v.len()),
        ));
    }
    // SAFETY: caller promises `out` has room for `len` doubles.
    unsafe { ptr::copy_nonoverlapping(v.as_ptr(), out, len) };
    Ok(())
}

unsafe fn emit_game(out: *mut *mut StkGame, game: Box<dyn StrategicGame>) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    // SAFETY: `out` is a valid pointer to a handle slot.
    unsafe { *out = Box::into_raw(Box::new(StkGame { inner: game })) };
    Ok(())
}

/// Message of the last failed call on this thread (empty after a success).
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn stk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Linear regression game with `dim`-dimensional `beta`.
///
/// # Safety
/// `beta` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stk_game_linear_new(
    beta: *const f64,
    dim: size_t,
    sigma2: f64,
    budget: f64,
    out: *mut *mut StkGame,
) -> StkStatus {
    guard(|| {
        let beta = unsafe { vector(beta, dim, "beta") }?;
        let spec = GameSpec::Linear {
            beta: beta.iter().copied().collect(),
            sigma2,
            budget,
            theta_radius: stackelberg::games::DEFAULT_THETA_RADIUS,
        };
        unsafe { emit_game(out, spec.build()?) }
    })
}

/// Any game from its JSON description, e.g.
/// `{"variant": "logistic-costly", "p": 0.5, "alpha": [1.5, 1.5], "n": 100, "lambda": 1}`.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stk_game_from_json(json: *const c_char, out: *mut *mut StkGame) -> StkStatus {
    guard(|| {
        let text = unsafe { string(json, "json") }?;
        let spec: GameSpec = serde_json::from_str(text).map_err(Error::from)?;
        unsafe { emit_game(out, spec.build()?) }
    })
}

/// # Safety
/// `game` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stk_game_free(game: *mut StkGame) {
    if !game.is_null() {
        // SAFETY: the handle was created by `Box::into_raw`.
        drop(unsafe { Box::from_raw(game) });
    }
}

/// Dimension of the game, or 0 for a null handle.
///
/// # Safety
/// `game` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stk_game_dim(game: *const StkGame) -> size_t {
    unsafe { game.as_ref() }.map_or(0, |g| g.inner.dim())
}

unsafe fn scalar(
    game: *const StkGame,
    mu: *const f64,
    theta: *const f64,
    dim: size_t,
    out: *mut f64,
    f: impl Fn(&dyn StrategicGame, &Vector, &Vector) -> stackelberg::Result<f64>,
) -> StkStatus {
    guard(|| {
        let game = unsafe { game_ref(game) }?;
        let mu = unsafe { vector(mu, dim, "mu") }?;
        let theta = unsafe { vector(theta, dim, "theta") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let value = f(game.inner.as_ref(), &mu, &theta)?;
        unsafe { *out = value };
        Ok(())
    })
}

unsafe fn gradient(
    game: *const StkGame,
    mu: *const f64,
    theta: *const f64,
    dim: size_t,
    out: *mut f64,
    f: impl Fn(&dyn StrategicGame, &Vector, &Vector) -> stackelberg::Result<Vector>,
) -> StkStatus {
    guard(|| {
        let game = unsafe { game_ref(game) }?;
        let mu = unsafe { vector(mu, dim, "mu") }?;
        let theta = unsafe { vector(theta, dim, "theta") }?;
        let g = f(game.inner.as_ref(), &mu, &theta)?;
        unsafe { write_vector(out, dim, g.as_slice(), "out") }
    })
}

/// Decision-maker's loss `L(mu, theta)`.
///
/// # Safety
/// `mu` and `theta` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stk_decision_loss(
    game: *const StkGame,
    mu: *const f64,
    theta: *const f64,
    dim: size_t,
    out: *mut f64,
) -> StkStatus {
    unsafe { scalar(game, mu, theta, dim, out, |g, m, t| g.decision_loss(m, t)) }
}

/// Agents' loss `R(mu, theta)`.
///
/// # Safety
/// As [`stk_decision_loss`].
#[no_mangle]
pub unsafe extern "C" fn stk_agent_loss(
    game: *const StkGame,
    mu: *const f64,
    theta: *const f64,
    dim: size_t,
    out: *mut f64,
) -> StkStatus {
    unsafe { scalar(game, mu, theta, dim, out, |g, m, t| g.agent_loss(m, t)) }
}

/// `grad_theta L(mu, theta)` into `out[0..dim]`.
///
/// # Safety
/// `mu`, `theta` and `out` must each hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn stk_decision_grad_theta(
    game: *const StkGame,
    mu: *const f64,
    theta: *const f64,
    dim: size_t,
    out: *mut f64,
) -> StkStatus {
    unsafe { gradient(game, mu, theta, dim, out, |g, m, t| g.decision_grad_theta(m, t)) }
}

/// `grad_mu R(mu, theta)` into `out[0..dim]`.
///
/// # Safety
/// As [`stk_decision_grad_theta`].
#[no_mangle]
pub unsafe extern "C" fn stk_agent_grad_mu(
    game: *const StkGame,
    mu: *const f64,
    theta: *const f64,
    dim: size_t,
    out: *mut f64,
) -> StkStatus {
    unsafe { gradient(game, mu, theta, dim, out, |g, m, t| g.agent_grad_mu(m, t)) }
}

/// Both Stackelberg equilibria with default oracle settings. `theta_se` and
/// `mu_se` receive the leaders' points; `risks` both players' risks.
///
/// # Safety
/// `theta_se` and `mu_se` must hold `dim` doubles; `risks` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stk_equilibria(
    game: *const StkGame,
    theta_se: *mut f64,
    mu_se: *mut f64,
    dim: size_t,
    risks: *mut StkRisks,
) -> StkStatus {
    guard(|| {
        let game = unsafe { game_ref(game) }?;
        if risks.is_null() {
            return Err(null("risks"));
        }
        let (dm, agents) = equilibria::equilibria(game.inner.as_ref(), &OracleSettings::default())?;
        unsafe { write_vector(theta_se, dim, &dm.point, "theta_se") }?;
        unsafe { write_vector(mu_se, dim, &agents.point, "mu_se") }?;
        unsafe {
            *risks = StkRisks {
                dm_leads_risk_dm: dm.risk_dm,
                dm_leads_risk_agents: dm.risk_agents,
                agents_lead_risk_dm: agents.risk_dm,
                agents_lead_risk_agents: agents.risk_agents,
            }
        };
        Ok(())
    })
}

/// Runs the dynamics described by a JSON run spec, e.g.
/// `{"order": "proactive", "epochs": 5000, "inner_steps": 50, "eta0": 0.02,
///   "eta_exponent": 0.75, "delta0": 0.5, "delta_exponent": 0.25, "fast_step": 1}`.
/// On divergence the status is `Diverged` and `out` receives the partial trace.
///
/// # Safety
/// `run_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stk_run(game: *const StkGame, run_json: *const c_char, seed: u64, out: *mut *mut StkTrace) -> StkStatus {
    guard(|| {
        let game = unsafe { game_ref(game) }?;
        let text = unsafe { string(run_json, "run_json") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: RunSpec = serde_json::from_str(text).map_err(Error::from)?;
        let (trace, failure) = match dynamics::run(game.inner.as_ref(), &spec.schedule(1), seed) {
            Ok(trace) => (trace, None),
            Err(Error::Diverged { epoch, what, partial }) => (
                *partial,
                Some(Failure(StkStatus::Diverged, format!("non-finite {what} at epoch {epoch}"))),
            ),
            Err(e) => return Err(e.into()),
        };
        unsafe { *out = Box::into_raw(Box::new(StkTrace { inner: trace })) };
        failure.map_or(Ok(()), Err)
    })
}

/// # Safety
/// `trace` must be null or a handle from [`stk_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stk_trace_free(trace: *mut StkTrace) {
    if !trace.is_null() {
        // SAFETY: the handle was created by `Box::into_raw`.
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Number of recorded epochs, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stk_trace_len(trace: *const StkTrace) -> size_t {
    unsafe { trace.as_ref() }.map_or(0, |t| t.inner.len())
}

/// Copies epoch `index` (0-based). `theta` and `mu` may be null to skip them.
///
/// # Safety
/// Non-null `theta`/`mu` must hold `dim` doubles; `record` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stk_trace_epoch(
    trace: *const StkTrace,
    index: size_t,
    theta: *mut f64,
    mu: *mut f64,
    dim: size_t,
    record: *mut StkEpoch,
) -> StkStatus {
    guard(|| {
        // SAFETY: non-null handles are live.
        let trace = unsafe { trace.as_ref() }.ok_or_else(|| null("trace"))?;
        if record.is_null() {
            return Err(null("record"));
        }
        let r = trace.inner.records.get(index).ok_or_else(|| {
            Failure(
                StkStatus::InvalidArgument,
                format!("epoch index {index} out of range (len {})", trace.inner.len()),
            )
        })?;
        if !theta.is_null() {
            unsafe { write_vector(theta, dim, &r.theta, "theta") }?;
        }
        if !mu.is_null() {
            unsafe { write_vector(mu, dim, &r.mu, "mu") }?;
        }
        unsafe {
            *record = StkEpoch {
                epoch: r.epoch,
                loss_dm: r.loss_dm,
                loss_agents: r.loss_agents,
                running_avg_dm: r.running_avg_dm,
                running_avg_agents: r.running_avg_agents,
                br_gap: r.br_gap.unwrap_or(f64::NAN),
                has_br_gap: c_int::from(r.br_gap.is_some()),
            }
        };
        Ok(())
    })
}
