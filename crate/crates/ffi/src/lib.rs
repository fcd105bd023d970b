//! C ABI for embedding the rule engine.
//!
//! Handles are opaque and owned by the caller, who frees them with the
//! matching `*_free` function. Every fallible call returns a
//! [`PartidsStatus`]; the text of the last error on the calling thread is
//! available from [`partids_last_error`].
//!
//! ```c
//! PartidsRuleset *rules;
//! size_t skipped;
//! if (partids_ruleset_parse(text, &rules, &skipped) != PARTIDS_STATUS_OK) {
//!     fprintf(stderr, "%s\n", partids_last_error());
//! }
//! PartidsAnalyzer *a;
//! partids_analyzer_new(rules, false, &a);
//! partids_analyzer_process(a, frame, len, ts_us, &verdict, &n_alerts);
//! while (partids_analyzer_next_alert(a, buf, sizeof buf, &needed) == PARTIDS_STATUS_OK)
//!     puts(buf);
//! partids_analyzer_free(a);
//! partids_ruleset_free(rules);
//! ```

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr, CString};
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::{Arc, Mutex};

use partids::acquire::rss_hash;
use partids::clock::{Clock, SimClock};
use partids::detect::{format_alert_fast, Alert, Analyzer, Verdict, WorkerConfig};
use partids::packet::{FiveTuple, PacketPool, Proto};
use partids::rules::{load_ruleset, CompiledRuleSet, Variables};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartidsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// No rule in the text could be parsed.
    Parse = 3,
    /// The frame is not a well-formed Ethernet frame.
    Decode = 4,
    /// The output buffer is too small; `needed` holds the required size.
    BufferTooSmall = 5,
    /// No alert is queued.
    Empty = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartidsVerdict {
    Allow = 0,
    Block = 1,
    /// Decoded, but not IPv4; passed through without analysis.
    Skipped = 2,
}

/// A compiled, immutable rule set. Shareable between analyzers.
pub struct PartidsRuleset {
    rules: Arc<CompiledRuleSet>,
}

/// One analysis worker with its own flow table and alert queue.
pub struct PartidsAnalyzer {
    analyzer: Analyzer,
    pool: PacketPool,
    clock: Arc<SimClock>,
    alerts: Arc<Mutex<Vec<Alert>>>,
    pending: VecDeque<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PartidsStatus, msg: impl Into<String>) -> PartidsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PartidsStatus) -> PartidsStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(PartidsStatus::Panic, "internal panic"))
}

/// The last error message on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn partids_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a rules file held in `text` (NUL-terminated UTF-8). Lines that do
/// not parse are skipped and counted in `skipped` (may be NULL). Address and
/// port variables resolve to `any`.
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn partids_ruleset_parse(
    text: *const c_char,
    out: *mut *mut PartidsRuleset,
    skipped: *mut usize,
) -> PartidsStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(PartidsStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(PartidsStatus::InvalidUtf8, "rules text is not UTF-8");
        };
        let set = load_ruleset(text);
        if !skipped.is_null() {
            *skipped = set.errors.len();
        }
        if set.is_empty() && !set.errors.is_empty() {
            let (line, e) = &set.errors[0];
            return fail(PartidsStatus::Parse, format!("line {line}: {e}"));
        }
        let rules = Arc::new(CompiledRuleSet::compile(&set.rules, &Variables::new()));
        *out = Box::into_raw(Box::new(PartidsRuleset { rules }));
        PartidsStatus::Ok
    })
}

/// Number of rules in the set; 0 for NULL.
///
/// # Safety
/// `rules` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn partids_ruleset_len(rules: *const PartidsRuleset) -> usize {
    rules.as_ref().map_or(0, |r| r.rules.len())
}

/// # Safety
/// `rules` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn partids_ruleset_free(rules: *mut PartidsRuleset) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// Creates an analyzer over `rules`. The analyzer keeps its own reference,
/// so the rule set may be freed first.
///
/// # Safety
/// `rules` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn partids_analyzer_new(
    rules: *const PartidsRuleset,
    inline_mode: bool,
    out: *mut *mut PartidsAnalyzer,
) -> PartidsStatus {
    guard(|| {
        let (Some(rules), false) = (rules.as_ref(), out.is_null()) else {
            return fail(PartidsStatus::NullPointer, "null argument");
        };
        let (clock, sim) = Clock::simulated();
        let alerts = Arc::new(Mutex::new(Vec::new()));
        let config = WorkerConfig { inline: inline_mode, ..WorkerConfig::default() };
        let analyzer = Analyzer::new(rules.rules.clone(), config, clock, Box::new(alerts.clone()));
        *out = Box::into_raw(Box::new(PartidsAnalyzer {
            analyzer,
            pool: PacketPool::new(1),
            clock: sim,
            alerts,
            pending: VecDeque::new(),
        }));
        PartidsStatus::Ok
    })
}

/// Analyzes one Ethernet frame captured at `ts_us` (microseconds,
/// non-decreasing). Alerts it raises are queued for
/// [`partids_analyzer_next_alert`]; their count goes to `alerts` (may be NULL).
///
/// # Safety
/// `a` must be a live handle, `frame` must point to `len` readable bytes and
/// `verdict` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn partids_analyzer_process(
    a: *mut PartidsAnalyzer,
    frame: *const u8,
    len: usize,
    ts_us: u64,
    verdict: *mut PartidsVerdict,
    alerts: *mut u32,
) -> PartidsStatus {
    guard(|| {
        let Some(a) = a.as_mut() else {
            return fail(PartidsStatus::NullPointer, "null analyzer");
        };
        if frame.is_null() || verdict.is_null() {
            return fail(PartidsStatus::NullPointer, "null argument");
        }
        let bytes = std::slice::from_raw_parts(frame, len);
        a.clock.set_ns(ts_us.saturating_mul(1000));
        let desc = match a.pool.decode(bytes, ts_us) {
            Ok(d) => d,
            Err(e) => return fail(PartidsStatus::Decode, e.to_string()),
        };
        let skipped = !desc.decode_ok;
        let outcome = a.analyzer.process_packet(&a.pool, &desc);
        a.pool.release(desc);
        let raised: Vec<Alert> = std::mem::take(&mut *a.alerts.lock().expect("alert queue poisoned"));
        a.pending.extend(raised.iter().map(format_alert_fast));
        *verdict = match (skipped, outcome.verdict) {
            (true, _) => PartidsVerdict::Skipped,
            (false, Verdict::Allow) => PartidsVerdict::Allow,
            (false, Verdict::Block) => PartidsVerdict::Block,
        };
        if !alerts.is_null() {
            *alerts = raised.len() as u32;
        }
        PartidsStatus::Ok
    })
}

/// Pops the oldest queued alert as a NUL-terminated fast-format line.
/// Returns `Empty` when none is queued. On `BufferTooSmall` the alert stays
/// queued and `needed` (may be NULL) holds the size including the NUL.
///
/// # Safety
/// `a` must be a live handle and `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn partids_analyzer_next_alert(
    a: *mut PartidsAnalyzer,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> PartidsStatus {
    guard(|| {
        let Some(a) = a.as_mut() else {
            return fail(PartidsStatus::NullPointer, "null analyzer");
        };
        let Some(line) = a.pending.front() else {
            return PartidsStatus::Empty;
        };
        let n = line.len() + 1;
        if !needed.is_null() {
            *needed = n;
        }
        if buf.is_null() || cap < n {
            return fail(PartidsStatus::BufferTooSmall, format!("alert needs {n} bytes"));
        }
        ptr::copy_nonoverlapping(line.as_ptr(), buf.cast::<u8>(), line.len());
        *buf.add(line.len()) = 0;
        a.pending.pop_front();
        PartidsStatus::Ok
    })
}

/// Packets analyzed so far; 0 for NULL.
///
/// # Safety
/// `a` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn partids_analyzer_packets(a: *const PartidsAnalyzer) -> u64 {
    a.as_ref().map_or(0, |a| a.analyzer.stats().analyzed)
}

/// # Safety
/// `a` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn partids_analyzer_free(a: *mut PartidsAnalyzer) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Symmetric flow hash used to pick a worker. Addresses are host-order
/// IPv4; `proto` is the IP protocol number.
#[no_mangle]
pub extern "C" fn partids_rss_hash(proto: u8, src_ip: u32, src_port: u16, dst_ip: u32, dst_port: u16) -> u32 {
    let t =
        FiveTuple::new(Proto::from_ip_proto(proto), Ipv4Addr::from(src_ip), src_port, Ipv4Addr::from(dst_ip), dst_port);
    rss_hash(&t)
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn partids_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
