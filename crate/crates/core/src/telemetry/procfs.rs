//! Linux per-thread accounting from `/proc/self/task`.

use std::fs;

/// Kernel thread id of the caller.
pub fn current_tid() -> i32 {
    // SAFETY: gettid has no preconditions.
    unsafe { libc::syscall(libc::SYS_gettid) as i32 }
}

fn ticks_per_sec() -> f64 {
    // SAFETY: sysconf is thread-safe for this name.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 { t as f64 } else { 100.0 }
}

/// Cumulative CPU time of thread `tid` in milliseconds.
///
/// `schedstat` gives nanoseconds; `stat` (utime + stime in clock ticks) is
/// the coarser fallback.
pub fn thread_cpu_ms(tid: i32) -> Option<f64> {
    if let Ok(s) = fs::read_to_string(format!("/proc/self/task/{tid}/schedstat")) {
        if let Some(ns) = s.split_whitespace().next().and_then(|v| v.parse::<u64>().ok()) {
            return Some(ns as f64 / 1e6);
        }
    }
    let stat = fs::read_to_string(format!("/proc/self/task/{tid}/stat")).ok()?;
    parse_stat_cpu_ticks(&stat).map(|t| t as f64 / ticks_per_sec() * 1000.0)
}

/// utime + stime from a `stat` line. The comm field may contain spaces and
/// parentheses, so fields are counted from the last `)`.
pub fn parse_stat_cpu_ticks(stat: &str) -> Option<u64> {
    let rest = &stat[stat.rfind(')')? + 1..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // After comm: state is field 3, utime 14, stime 15 (1-based).
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    Some(utime + stime)
}

/// Cumulative bytes the thread caused to be written to storage.
pub fn thread_write_bytes(tid: i32) -> Option<u64> {
    let io = fs::read_to_string(format!("/proc/self/task/{tid}/io")).ok()?;
    parse_io_field(&io, "write_bytes")
}

pub fn parse_io_field(io: &str, key: &str) -> Option<u64> {
    io.lines().find_map(|l| {
        let (k, v) = l.split_once(':')?;
        (k.trim() == key).then(|| v.trim().parse().ok()).flatten()
    })
}

/// Resident set size of the whole process.
pub fn process_rss_bytes() -> Option<u64> {
    let statm = fs::read_to_string("/proc/self/statm").ok()?;
    let pages: u64 = statm.split_whitespace().nth(1)?.parse().ok()?;
    // SAFETY: sysconf is thread-safe for this name.
    let page = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    Some(pages * page.max(1) as u64)
}
