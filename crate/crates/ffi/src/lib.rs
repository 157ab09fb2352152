//! C ABI over `branchtree`. Objects are opaque heap handles released with
//! the matching `*_free`; every call returns a [`BtStatus`] and writes its
//! result through an out pointer. The message of the last failure on the
//! calling thread is available from [`bt_last_error`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use branchtree::codings::OrderedTree;
use branchtree::config::RunConfig;
use branchtree::csbp::CsbpKernel;
use branchtree::gw::{sample_tree_with_budget, OffspringDistribution};
use branchtree::marginals::stable_skeleton_pmf;
use branchtree::mechanism::BranchingMechanism;
use branchtree::rng::stream_rng;
use branchtree::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    InvalidMechanism = 4,
    InvalidOffspring = 5,
    GreyConditionFails = 6,
    BudgetExceeded = 7,
    InvalidTree = 8,
    Infeasible = 9,
    Solver = 10,
    Config = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

pub struct BtMechanism(BranchingMechanism);
pub struct BtCsbp(CsbpKernel);
pub struct BtOffspring(OffspringDistribution);
pub struct BtTree(OrderedTree);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> BtStatus {
    match e {
        Error::Domain(_) => BtStatus::Domain,
        Error::InvalidMechanism(_) => BtStatus::InvalidMechanism,
        Error::InvalidOffspring(_) => BtStatus::InvalidOffspring,
        Error::GreyConditionFails => BtStatus::GreyConditionFails,
        Error::NodeBudgetExceeded { .. } => BtStatus::BudgetExceeded,
        Error::InvalidWalk { .. } | Error::InvalidTree(_) => BtStatus::InvalidTree,
        Error::Infeasible(_) => BtStatus::Infeasible,
        Error::Solver(_) => BtStatus::Solver,
        Error::UnknownExperiment(_) | Error::Config { .. } | Error::Toml(_) | Error::Json(_) => BtStatus::Config,
        Error::Io(_) => BtStatus::Io,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), BtStatus>>(f: F) -> BtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BtStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside branchtree");
            BtStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, BtStatus>;
}

impl<T> OrStatus<T> for branchtree::Result<T> {
    fn or_status(self) -> Result<T, BtStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, BtStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null output pointer");
        BtStatus::NullPointer
    })
}

unsafe fn get<'a, T>(p: *const T) -> Result<&'a T, BtStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle");
        BtStatus::NullPointer
    })
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, BtStatus> {
    if s.is_null() {
        set_error("null string");
        return Err(BtStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        BtStatus::InvalidUtf8
    })
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Copies `s` with a trailing NUL into `buf` of `len` bytes; `needed`
/// receives the required size including the NUL.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), BtStatus> {
    *out(needed)? = s.len() + 1;
    if buf.is_null() || len < s.len() + 1 {
        set_error("buffer too small");
        return Err(BtStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn bt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn bt_status_name(status: BtStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        BtStatus::Ok => b"ok\0",
        BtStatus::NullPointer => b"null pointer\0",
        BtStatus::InvalidUtf8 => b"invalid utf-8\0",
        BtStatus::Domain => b"domain error\0",
        BtStatus::InvalidMechanism => b"invalid mechanism\0",
        BtStatus::InvalidOffspring => b"invalid offspring distribution\0",
        BtStatus::GreyConditionFails => b"Grey condition fails\0",
        BtStatus::BudgetExceeded => b"node budget exceeded\0",
        BtStatus::InvalidTree => b"invalid tree\0",
        BtStatus::Infeasible => b"infeasible\0",
        BtStatus::Solver => b"solver failure\0",
        BtStatus::Config => b"configuration error\0",
        BtStatus::Io => b"i/o error\0",
        BtStatus::BufferTooSmall => b"buffer too small\0",
        BtStatus::Panic => b"internal panic\0",
    };
    s.as_ptr() as *const c_char
}

/// `ψ(λ) = βλ²`.
#[no_mangle]
pub unsafe extern "C" fn bt_mechanism_quadratic(beta: f64, result: *mut *mut BtMechanism) -> BtStatus {
    guard(|| {
        let m = BranchingMechanism::quadratic(beta).or_status()?;
        *out(result)? = boxed(BtMechanism(m));
        Ok(())
    })
}

/// `ψ(λ) = cλ^γ`, `1 < γ ≤ 2`.
#[no_mangle]
pub unsafe extern "C" fn bt_mechanism_stable(c: f64, gamma: f64, result: *mut *mut BtMechanism) -> BtStatus {
    guard(|| {
        let m = BranchingMechanism::stable(c, gamma).or_status()?;
        *out(result)? = boxed(BtMechanism(m));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_mechanism_free(m: *mut BtMechanism) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bt_mechanism_psi(m: *const BtMechanism, lambda: f64, result: *mut f64) -> BtStatus {
    guard(|| {
        let v = get(m)?.0.checked_psi(lambda).or_status()?;
        *out(result)? = v;
        Ok(())
    })
}

/// Kernel for `u_t(λ)` and `v(t)`; copies the mechanism.
#[no_mangle]
pub unsafe extern "C" fn bt_csbp_new(m: *const BtMechanism, result: *mut *mut BtCsbp) -> BtStatus {
    guard(|| {
        let k = CsbpKernel::new(get(m)?.0.clone());
        *out(result)? = boxed(BtCsbp(k));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_csbp_free(k: *mut BtCsbp) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bt_csbp_u(k: *const BtCsbp, t: f64, lambda: f64, result: *mut f64) -> BtStatus {
    guard(|| {
        let v = get(k)?.0.u(t, lambda).or_status()?;
        *out(result)? = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_csbp_v(k: *const BtCsbp, t: f64, result: *mut f64) -> BtStatus {
    guard(|| {
        let v = get(k)?.0.v(t).or_status()?;
        *out(result)? = v;
        Ok(())
    })
}

/// `μ(k) = 2^{−k−1}`.
#[no_mangle]
pub unsafe extern "C" fn bt_offspring_geometric(result: *mut *mut BtOffspring) -> BtStatus {
    guard(|| {
        *out(result)? = boxed(BtOffspring(OffspringDistribution::geometric_half()));
        Ok(())
    })
}

/// Generating function `r + (1−r)^γ/γ`.
#[no_mangle]
pub unsafe extern "C" fn bt_offspring_stable(gamma: f64, result: *mut *mut BtOffspring) -> BtStatus {
    guard(|| {
        let d = OffspringDistribution::stable(gamma).or_status()?;
        *out(result)? = boxed(BtOffspring(d));
        Ok(())
    })
}

/// Custom law from `len` probabilities.
#[no_mangle]
pub unsafe extern "C" fn bt_offspring_custom(pmf: *const f64, len: usize, result: *mut *mut BtOffspring) -> BtStatus {
    guard(|| {
        let p = get(pmf)?;
        let v = std::slice::from_raw_parts(p, len).to_vec();
        let d = OffspringDistribution::custom(v).or_status()?;
        *out(result)? = boxed(BtOffspring(d));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_offspring_free(d: *mut BtOffspring) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bt_offspring_pmf(d: *const BtOffspring, k: usize, result: *mut f64) -> BtStatus {
    guard(|| {
        let v = get(d)?.0.pmf(k);
        *out(result)? = v;
        Ok(())
    })
}

/// `g_n(r)`, the `n`-fold composition of the generating function.
#[no_mangle]
pub unsafe extern "C" fn bt_offspring_gf_iterate(d: *const BtOffspring, n: u64, r: f64, result: *mut f64) -> BtStatus {
    guard(|| {
        let v = get(d)?.0.gf_iterate(n, r).or_status()?;
        *out(result)? = v;
        Ok(())
    })
}

/// One tree from stream 0 of `seed`, at most `budget` vertices.
#[no_mangle]
pub unsafe extern "C" fn bt_tree_sample(
    d: *const BtOffspring,
    seed: u64,
    budget: usize,
    result: *mut *mut BtTree,
) -> BtStatus {
    guard(|| {
        let d = get(d)?;
        let mut rng = stream_rng(seed, 0);
        let t = sample_tree_with_budget(&d.0, budget, &mut rng).or_status()?;
        *out(result)? = boxed(BtTree(t));
        Ok(())
    })
}

/// Parses child counts in lexicographic order, e.g. `"2,0,1,0"`.
#[no_mangle]
pub unsafe extern "C" fn bt_tree_parse(s: *const c_char, result: *mut *mut BtTree) -> BtStatus {
    guard(|| {
        let t: OrderedTree = text(s)?.parse().or_status()?;
        *out(result)? = boxed(BtTree(t));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_tree_free(t: *mut BtTree) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bt_tree_size(t: *const BtTree, result: *mut usize) -> BtStatus {
    guard(|| {
        *out(result)? = get(t)?.0.size();
        Ok(())
    })
}

/// Height sequence into `buf` (`len` entries); `needed` gets the size.
#[no_mangle]
pub unsafe extern "C" fn bt_tree_height(t: *const BtTree, buf: *mut u32, len: usize, needed: *mut usize) -> BtStatus {
    guard(|| {
        let h = get(t)?.0.height();
        copy_u32(&h, buf, len, needed)
    })
}

/// Contour sequence into `buf` (`len` entries); `needed` gets the size.
#[no_mangle]
pub unsafe extern "C" fn bt_tree_contour(t: *const BtTree, buf: *mut u32, len: usize, needed: *mut usize) -> BtStatus {
    guard(|| {
        let c = get(t)?.0.contour();
        copy_u32(&c, buf, len, needed)
    })
}

unsafe fn copy_u32(v: &[u32], buf: *mut u32, len: usize, needed: *mut usize) -> Result<(), BtStatus> {
    *out(needed)? = v.len();
    if buf.is_null() || len < v.len() {
        set_error("buffer too small");
        return Err(BtStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    Ok(())
}

/// Child-count string of the tree.
#[no_mangle]
pub unsafe extern "C" fn bt_tree_to_string(t: *const BtTree, buf: *mut c_char, len: usize, needed: *mut usize) -> BtStatus {
    guard(|| {
        let s = get(t)?.0.to_string();
        write_str(&s, buf, len, needed)
    })
}

/// Mirror image (children in reverse order) as a new handle.
#[no_mangle]
pub unsafe extern "C" fn bt_tree_mirror(t: *const BtTree, result: *mut *mut BtTree) -> BtStatus {
    guard(|| {
        let m = get(t)?.0.mirror();
        *out(result)? = boxed(BtTree(m));
        Ok(())
    })
}

/// Stable skeleton probability of the tree given as a child-count string.
#[no_mangle]
pub unsafe extern "C" fn bt_stable_skeleton_pmf(gamma: f64, skeleton: *const c_char, result: *mut f64) -> BtStatus {
    guard(|| {
        let t: OrderedTree = text(skeleton)?.parse().or_status()?;
        let v = stable_skeleton_pmf(gamma, &t).or_status()?;
        *out(result)? = v;
        Ok(())
    })
}

/// Runs the experiment described by a TOML configuration and returns the
/// JSON report, to be released with [`bt_string_free`]. `passed` receives
/// 1 when every check passed.
#[no_mangle]
pub unsafe extern "C" fn bt_run_experiment(config_toml: *const c_char, report_json: *mut *mut c_char, passed: *mut i32) -> BtStatus {
    guard(|| {
        let c = RunConfig::from_toml(text(config_toml)?).or_status()?;
        let r = branchtree::harness::run(&c).or_status()?;
        let json = serde_json::to_string(&r).map_err(|e| {
            set_error(e.to_string());
            BtStatus::Config
        })?;
        *out(passed)? = r.pass as i32;
        *out(report_json)? = CString::new(json).unwrap_or_default().into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
