//! C interface to `clothwm`.
//!
//! Objects are exposed as opaque handles created by `*_new` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`ClothwmStatus`]; the message of the most recent failure on the calling
//! thread is available from [`clothwm_last_error`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clothwm::env::{ClothEnv, EnvConfig, Observation, STATE_DIM};
use clothwm::policy::{Policy, PolicySpec};
use clothwm::trainer::config::parse_pairs;
use clothwm::trainer::{self, Preset, ResolvedConfig, TrainerError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClothwmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Env = 5,
    Policy = 6,
    Trainer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A cloth environment and its latest observation.
pub struct ClothwmEnv {
    env: ClothEnv,
    obs: Observation,
}

/// A keypoint controller without recurrent input.
pub struct ClothwmPolicy {
    policy: Policy,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(ClothwmStatus, String);

impl From<TrainerError> for Failure {
    fn from(e: TrainerError) -> Self {
        let status = match &e {
            TrainerError::Io(_) => ClothwmStatus::Io,
            TrainerError::Config(_) => ClothwmStatus::Config,
            TrainerError::Env(_) => ClothwmStatus::Env,
            TrainerError::Policy(_) => ClothwmStatus::Policy,
            _ => ClothwmStatus::Trainer,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: ClothwmStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ClothwmStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (ClothwmStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (ClothwmStatus::Panic, "internal panic".to_string()),
    };
    if status != ClothwmStatus::Ok {
        LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    }
    status
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(ClothwmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(ClothwmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(ClothwmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(ClothwmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(ClothwmStatus::NullPointer, format!("{what} is null")));
    }
    if len < needed {
        return Err(fail(ClothwmStatus::BufferTooSmall, format!("{what} holds {len}, needs {needed}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

fn env_config(preset: &str) -> Result<EnvConfig, Failure> {
    match Preset::parse(preset) {
        Some(Preset::Desk) => Ok(EnvConfig::desk()),
        Some(Preset::Paper) => Ok(EnvConfig::paper()),
        None => Err(fail(ClothwmStatus::InvalidArgument, format!("unknown preset `{preset}`"))),
    }
}

/// Copies the last error message (NUL-terminated, truncated to `len`) into
/// `buf` and returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn clothwm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn clothwm_status_name(status: ClothwmStatus) -> *const c_char {
    let s: &'static CStr = match status {
        ClothwmStatus::Ok => c"ok",
        ClothwmStatus::NullPointer => c"null-pointer",
        ClothwmStatus::InvalidArgument => c"invalid-argument",
        ClothwmStatus::Config => c"config",
        ClothwmStatus::Io => c"io",
        ClothwmStatus::Env => c"env",
        ClothwmStatus::Policy => c"policy",
        ClothwmStatus::Trainer => c"trainer",
        ClothwmStatus::BufferTooSmall => c"buffer-too-small",
        ClothwmStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Length of the keypoint state vector.
#[no_mangle]
pub extern "C" fn clothwm_state_dim() -> usize {
    STATE_DIM
}

/// Creates an environment from a preset name (`"desk"` or `"paper"`).
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clothwm_env_new(preset: *const c_char, out: *mut *mut ClothwmEnv) -> ClothwmStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let cfg = env_config(str_arg(preset, "preset")?)?;
        let mut env = ClothEnv::new(cfg).map_err(|e| fail(ClothwmStatus::Env, e.to_string()))?;
        let obs = env.reset(0);
        *out = Box::into_raw(Box::new(ClothwmEnv { env, obs }));
        Ok(())
    })
}

/// Releases an environment. Null is ignored.
///
/// # Safety
/// `env` must come from [`clothwm_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clothwm_env_free(env: *mut ClothwmEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn clothwm_env_reset(env: *mut ClothwmEnv, seed: u64) -> ClothwmStatus {
    guard(|| {
        let h = mut_arg(env, "env")?;
        h.obs = h.env.reset(seed);
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clothwm_env_action_dim(env: *const ClothwmEnv, out: *mut usize) -> ClothwmStatus {
    guard(|| {
        *mut_arg(out, "out")? = ref_arg(env, "env")?.env.action_dim();
        Ok(())
    })
}

/// Applies `action` (length `action_dim`) and reports the reward and
/// whether the episode ended. `reward` and `done` may be null.
///
/// # Safety
/// `env` must be a live handle; `action` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn clothwm_env_step(env: *mut ClothwmEnv, action: *const f64, len: usize, reward: *mut f64, done: *mut bool) -> ClothwmStatus {
    guard(|| {
        let h = mut_arg(env, "env")?;
        if action.is_null() {
            return Err(fail(ClothwmStatus::NullPointer, "action is null"));
        }
        let a = std::slice::from_raw_parts(action, len);
        let step = h.env.step_flat(a).map_err(|e| fail(ClothwmStatus::Env, e.to_string()))?;
        if let Some(r) = reward.as_mut() {
            *r = step.reward;
        }
        if let Some(d) = done.as_mut() {
            *d = step.done;
        }
        h.obs = step.observation;
        Ok(())
    })
}

/// Writes the normalised keypoint state (`clothwm_state_dim()` doubles).
///
/// # Safety
/// `env` must be a live handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn clothwm_env_state(env: *const ClothwmEnv, buf: *mut f64, len: usize) -> ClothwmStatus {
    guard(|| {
        let s = ref_arg(env, "env")?.obs.normalized_state();
        out_slice(buf, len, s.len(), "buf")?.copy_from_slice(&s);
        Ok(())
    })
}

/// Writes the channel-major 3x64x64 camera image.
///
/// # Safety
/// `env` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn clothwm_env_render(env: *const ClothwmEnv, buf: *mut u8, len: usize) -> ClothwmStatus {
    guard(|| {
        let rgb = ref_arg(env, "env")?.env.render();
        out_slice(buf, len, rgb.len(), "buf")?.copy_from_slice(&rgb);
        Ok(())
    })
}

/// Builds a keypoint controller for the preset's action layout from a flat
/// genome.
///
/// # Safety
/// `preset` must be NUL-terminated; `genome` valid for `len` doubles;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clothwm_policy_new(preset: *const c_char, genome: *const f64, len: usize, out: *mut *mut ClothwmPolicy) -> ClothwmStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let cfg = env_config(str_arg(preset, "preset")?)?;
        if genome.is_null() {
            return Err(fail(ClothwmStatus::NullPointer, "genome is null"));
        }
        let spec = PolicySpec::linear_keypoint(STATE_DIM, None, cfg.action_dim(), cfg.max_step);
        let policy = Policy::new(spec, std::slice::from_raw_parts(genome, len)).map_err(|e| fail(ClothwmStatus::Policy, e.to_string()))?;
        *out = Box::into_raw(Box::new(ClothwmPolicy { policy }));
        Ok(())
    })
}

/// Genome length of the keypoint controller for a preset.
///
/// # Safety
/// `preset` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clothwm_policy_param_count(preset: *const c_char, out: *mut usize) -> ClothwmStatus {
    guard(|| {
        let cfg = env_config(str_arg(preset, "preset")?)?;
        *mut_arg(out, "out")? = PolicySpec::linear_keypoint(STATE_DIM, None, cfg.action_dim(), cfg.max_step).param_count();
        Ok(())
    })
}

/// # Safety
/// `policy` must come from [`clothwm_policy_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clothwm_policy_free(policy: *mut ClothwmPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Computes the controller's action for the environment's current state.
///
/// # Safety
/// Handles must be live; `action` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn clothwm_policy_act(policy: *const ClothwmPolicy, env: *const ClothwmEnv, action: *mut f64, len: usize) -> ClothwmStatus {
    guard(|| {
        let p = ref_arg(policy, "policy")?;
        let h = ref_arg(env, "env")?;
        let a = p.policy.act(&h.obs.normalized_state(), None).map_err(|e| fail(ClothwmStatus::Policy, e.to_string()))?;
        out_slice(action, len, a.len(), "action")?.copy_from_slice(&a);
        Ok(())
    })
}

/// Runs (or resumes) an experiment described by `key=value` config text
/// (desk defaults) in `run_dir`, storing the final best-so-far return.
///
/// # Safety
/// Strings must be NUL-terminated; `best_return` may be null.
#[no_mangle]
pub unsafe extern "C" fn clothwm_train(config_text: *const c_char, run_dir: *const c_char, best_return: *mut f64) -> ClothwmStatus {
    guard(|| {
        let pairs = parse_pairs(str_arg(config_text, "config_text")?).map_err(|e| fail(ClothwmStatus::Config, e.to_string()))?;
        let rc = ResolvedConfig::resolve(Preset::Desk, &pairs, &[]).map_err(|e| fail(ClothwmStatus::Config, e.to_string()))?;
        let m = trainer::run_experiment(&rc, Path::new(str_arg(run_dir, "run_dir")?))?;
        if let Some(b) = best_return.as_mut() {
            *b = m.best_so_far().unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Mean and sample standard deviation of the return of a saved genome over
/// `episodes` seeded episodes. `std_dev` may be null.
///
/// # Safety
/// `genome_path` must be NUL-terminated; `mean` writable.
#[no_mangle]
pub unsafe extern "C" fn clothwm_evaluate_genome(genome_path: *const c_char, episodes: usize, seed: u64, mean: *mut f64, std_dev: *mut f64) -> ClothwmStatus {
    guard(|| {
        let mean = mut_arg(mean, "mean")?;
        if episodes == 0 {
            return Err(fail(ClothwmStatus::InvalidArgument, "episodes must be positive"));
        }
        let stats = trainer::evaluate_genome_file(Path::new(str_arg(genome_path, "genome_path")?), episodes, seed)?;
        *mean = stats.mean;
        if let Some(s) = std_dev.as_mut() {
            *s = stats.std;
        }
        Ok(())
    })
}
