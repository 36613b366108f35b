//! C ABI for the dyninf solvers.
//!
//! Scenarios and policies live behind opaque handles created by the
//! `di_*_new`/`di_solve_*` functions and released with the matching
//! `*_free`. Every fallible call returns a [`DiStatus`]; on failure
//! [`di_last_error`] describes what went wrong on the calling thread.
//! Strings handed out by the library are freed with [`di_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dyninf::io::{dataset_hash, scenario_hash, to_json, Policy, PolicyFile, ScenarioConfig};
use dyninf::{
    act_online, belief_update, offline_pipeline, solve_known, solve_offline, solve_online_capped, validate_scenario,
    value_known, value_offline, value_online, Belief, Dataset, Error, Scenario,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed UTF-8 or JSON.
    Parse = 2,
    /// The scenario violates a model invariant.
    Invalid = 3,
    /// Array lengths or indices do not fit the scenario.
    Shape = 4,
    /// The call needs a different scenario or policy mode.
    Mode = 5,
    /// Data or observations with zero probability.
    Impossible = 6,
    CapExceeded = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

/// Opaque validated scenario.
pub struct DiScenario {
    scenario: Scenario,
}

/// Opaque solved policy together with the scenario it was solved for.
pub struct DiPolicy {
    scenario: Scenario,
    policy: Policy,
    value: f64,
    dataset_hash: Option<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Invalid(_) => DiStatus::Invalid,
            Error::ShapeMismatch(_) | Error::IndexOutOfRange { .. } => DiStatus::Shape,
            Error::ModeMismatch(_) => DiStatus::Mode,
            Error::ImpossibleDataset | Error::ImpossibleObservation { .. } | Error::NodeNotFound { .. } => {
                DiStatus::Impossible
            }
            Error::CapExceeded { .. } => DiStatus::CapExceeded,
        };
        Failure(status, e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(DiStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Outcome<()>) -> DiStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DiStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DiStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Outcome<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Outcome<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn c_string(text: String) -> *mut c_char {
    CString::new(text)
        .expect("JSON and hex contain no nul bytes")
        .into_raw()
}

fn boxed_policy(s: &Scenario, policy: Policy, value: f64, dataset_hash: Option<String>) -> *mut DiPolicy {
    Box::into_raw(Box::new(DiPolicy {
        scenario: s.clone(),
        policy,
        value,
        dataset_hash,
    }))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn di_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn di_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a scenario from a NUL-terminated JSON config.
///
/// # Safety
/// `json` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn di_scenario_from_json(json: *const c_char, out: *mut *mut DiScenario) -> DiStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(DiStatus::Parse, format!("config is not UTF-8: {e}")))?;
        let config = ScenarioConfig::parse(text).map_err(|e| Failure(DiStatus::Parse, e.to_string()))?;
        let violations = match config.to_scenario() {
            Ok(s) => {
                let v = validate_scenario(&s);
                if v.is_empty() {
                    return put(out, Box::into_raw(Box::new(DiScenario { scenario: s })), "out");
                }
                v
            }
            Err(v) => v,
        };
        Err(Error::Invalid(violations).into())
    })
}

/// # Safety
/// `s` must come from [`di_scenario_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn di_scenario_free(s: *mut DiScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Hex content hash of the scenario; free with [`di_string_free`].
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn di_scenario_hash(s: *const DiScenario, out: *mut *mut c_char) -> DiStatus {
    guard(|| {
        let s = deref(s, "scenario")?;
        put(out, c_string(scenario_hash(&s.scenario)), "out")
    })
}

/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn di_solve_known(s: *const DiScenario, out: *mut *mut DiPolicy) -> DiStatus {
    guard(|| {
        let s = &deref(s, "scenario")?.scenario;
        let p = solve_known(s)?;
        let value = value_known(s, &p)?;
        put(out, boxed_policy(s, Policy::Known(p), value, None), "out")
    })
}

/// Offline policy from a training set given as `m` interleaved `(x, y)`
/// pairs, i.e. `2 * m` entries.
///
/// # Safety
/// `pairs` must hold `2 * m` readable entries; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn di_solve_offline_dataset(
    s: *const DiScenario,
    pairs: *const usize,
    m: usize,
    out: *mut *mut DiPolicy,
) -> DiStatus {
    guard(|| {
        let s = &deref(s, "scenario")?.scenario;
        let flat = slice(pairs, m * 2, "pairs")?;
        let d = Dataset::new(flat.chunks_exact(2).map(|c| (c[0], c[1])).collect());
        let p = offline_pipeline(s, &d)?;
        let value = value_offline(s, &p)?;
        put(
            out,
            boxed_policy(s, Policy::Offline(p), value, Some(dataset_hash(&d))),
            "out",
        )
    })
}

/// Offline policy conditioned on an explicit posterior of length `len`.
///
/// # Safety
/// `belief` must hold `len` readable entries; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn di_solve_offline_belief(
    s: *const DiScenario,
    belief: *const f64,
    len: usize,
    out: *mut *mut DiPolicy,
) -> DiStatus {
    guard(|| {
        let s = &deref(s, "scenario")?.scenario;
        let b = Belief::new(slice(belief, len, "belief")?.to_vec());
        let p = solve_offline(s, &b)?;
        let value = value_offline(s, &p)?;
        put(out, boxed_policy(s, Policy::Offline(p), value, None), "out")
    })
}

/// Online policy over the reachable posteriors, failing with
/// [`DiStatus::CapExceeded`] past `node_cap` nodes in a round.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn di_solve_online(s: *const DiScenario, node_cap: usize, out: *mut *mut DiPolicy) -> DiStatus {
    guard(|| {
        let s = &deref(s, "scenario")?.scenario;
        let p = solve_online_capped(s, node_cap)?;
        let value = value_online(s, &p)?;
        put(out, boxed_policy(s, Policy::Online(p), value, None), "out")
    })
}

/// # Safety
/// `p` must come from a `di_solve_*` call and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn di_policy_free(p: *mut DiPolicy) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Optimal expected loss from the initial distribution.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn di_policy_value(p: *const DiPolicy, out: *mut f64) -> DiStatus {
    guard(|| put(out, deref(p, "policy")?.value, "out"))
}

/// Estimate at 0-based `round` for the current `x`.
///
/// For online policies, `history_x`/`history_y` hold the `round` pairs
/// revealed so far; known and offline policies ignore them.
///
/// # Safety
/// The history arrays must hold `round` readable entries when the policy
/// is online; handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn di_policy_action(
    p: *const DiPolicy,
    round: usize,
    x: usize,
    history_x: *const usize,
    history_y: *const usize,
    out: *mut usize,
) -> DiStatus {
    guard(|| {
        let p = deref(p, "policy")?;
        let s = &p.scenario;
        let check = |round: usize, x: usize| -> Outcome<()> {
            if round >= s.horizon || x >= s.n_x() {
                return Err(Failure(
                    DiStatus::Shape,
                    format!("round {round} / x {x} outside horizon {} / |X| {}", s.horizon, s.n_x()),
                ));
            }
            Ok(())
        };
        let yhat = match &p.policy {
            Policy::Known(t) => {
                check(round, x)?;
                t.psi[round][x]
            }
            Policy::Offline(o) => {
                check(round, x)?;
                o.psi()[round][x]
            }
            Policy::Online(o) => {
                let xs = slice(history_x, round, "history_x")?;
                let ys = slice(history_y, round, "history_y")?;
                let history: Vec<(usize, usize)> = xs.iter().copied().zip(ys.iter().copied()).collect();
                act_online(s, o, &history, x)?.0
            }
        };
        put(out, yhat, "out")
    })
}

/// Bayes update of a posterior of length `len` on the pair `(x, y)`,
/// written to `out` (also `len` entries).
///
/// # Safety
/// `belief` and `out` must hold `len` entries; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn di_belief_update(
    s: *const DiScenario,
    belief: *const f64,
    len: usize,
    x: usize,
    y: usize,
    out: *mut f64,
) -> DiStatus {
    guard(|| {
        let s = &deref(s, "scenario")?.scenario;
        let (family, _) = s.family_and_prior()?;
        let b = Belief::new(slice(belief, len, "belief")?.to_vec());
        if len != family.n_params() {
            return Err(Failure(
                DiStatus::Shape,
                format!("belief has {len} entries for {} parameters", family.n_params()),
            ));
        }
        let updated = belief_update(family, &b, x, y)?;
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(updated.probs.as_ptr(), out, len);
        Ok(())
    })
}

/// Policy file JSON (the format the CLI writes); free with
/// [`di_string_free`].
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn di_policy_to_json(p: *const DiPolicy, out: *mut *mut c_char) -> DiStatus {
    guard(|| {
        let p = deref(p, "policy")?;
        let file = PolicyFile::from_policy(&p.scenario, &p.policy, p.value, p.dataset_hash.clone());
        put(out, c_string(to_json(&file)), "out")
    })
}
