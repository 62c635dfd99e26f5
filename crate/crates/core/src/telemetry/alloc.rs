//! A global allocator that attributes live heap bytes to components.
//!
//! Each allocation carries a small header recording the tag of the thread
//! that made it, so a free on another thread still credits the right
//! component. Install it in a binary with
//!
//! ```ignore
//! #[global_allocator]
//! static ALLOC: memharness_core::telemetry::alloc::TaggedAlloc = TaggedAlloc;
//! ```
//!
//! Without it, [`is_active`] stays false and callers fall back to
//! process-wide RSS.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

/// Tag 0 is "untagged"; components get 1..MAX_TAGS.
pub const MAX_TAGS: usize = 32;

static LIVE: [AtomicU64; MAX_TAGS] = [const { AtomicU64::new(0) }; MAX_TAGS];
static PEAK: [AtomicU64; MAX_TAGS] = [const { AtomicU64::new(0) }; MAX_TAGS];
static ACTIVE: AtomicBool = AtomicBool::new(false);
static NAMES: Mutex<Vec<String>> = Mutex::new(Vec::new());

thread_local! {
    static TAG: Cell<u8> = const { Cell::new(0) };
}

pub struct TaggedAlloc;

fn header_size(align: usize) -> usize {
    align.max(16)
}

fn add(tag: u8, n: usize) {
    let live = LIVE[tag as usize].fetch_add(n as u64, Ordering::Relaxed) + n as u64;
    PEAK[tag as usize].fetch_max(live, Ordering::Relaxed);
}

fn sub(tag: u8, n: usize) {
    LIVE[tag as usize].fetch_sub(n as u64, Ordering::Relaxed);
}

fn current_tag() -> u8 {
    // try_with: the TLS slot may already be gone during thread teardown.
    TAG.try_with(Cell::get).unwrap_or(0)
}

unsafe impl GlobalAlloc for TaggedAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ACTIVE.store(true, Ordering::Relaxed);
        let hdr = header_size(layout.align());
        let Ok(full) = Layout::from_size_align(layout.size() + hdr, hdr) else {
            return std::ptr::null_mut();
        };
        let base = unsafe { System.alloc(full) };
        if base.is_null() {
            return base;
        }
        let tag = current_tag();
        unsafe {
            let user = base.add(hdr);
            *user.sub(1) = tag;
            add(tag, layout.size());
            user
        }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        let hdr = header_size(layout.align());
        unsafe {
            let tag = *ptr.sub(1);
            sub(tag, layout.size());
            let full = Layout::from_size_align_unchecked(layout.size() + hdr, hdr);
            System.dealloc(ptr.sub(hdr), full);
        }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let hdr = header_size(layout.align());
        unsafe {
            let tag = *ptr.sub(1);
            let full = Layout::from_size_align_unchecked(layout.size() + hdr, hdr);
            let base = System.realloc(ptr.sub(hdr), full, new_size + hdr);
            if base.is_null() {
                return base;
            }
            // The header survives realloc; ownership stays with the original tag.
            sub(tag, layout.size());
            add(tag, new_size);
            base.add(hdr)
        }
    }
}

/// True once [`TaggedAlloc`] has served an allocation in this process.
pub fn is_active() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

/// Returns the tag for `name`, registering it on first use. `None` once the
/// table is full.
pub fn register(name: &str) -> Option<u8> {
    let mut names = NAMES.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(i) = names.iter().position(|n| n == name) {
        return Some(i as u8 + 1);
    }
    if names.len() + 1 >= MAX_TAGS {
        return None;
    }
    names.push(name.to_string());
    Some(names.len() as u8)
}

/// Tags allocations made on the calling thread from now on.
pub fn set_thread_tag(tag: u8) {
    TAG.with(|t| t.set(tag));
}

pub fn live_bytes(tag: u8) -> u64 {
    LIVE[tag as usize].load(Ordering::Relaxed)
}

pub fn peak_bytes(tag: u8) -> u64 {
    PEAK[tag as usize].load(Ordering::Relaxed)
}

/// Restarts peak tracking from the current live figure.
pub fn reset_peak(tag: u8) {
    PEAK[tag as usize].store(live_bytes(tag), Ordering::Relaxed);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registration_is_stable() {
        let a = register("alloc-test-a").unwrap();
        let b = register("alloc-test-b").unwrap();
        assert_ne!(a, b);
        assert_eq!(register("alloc-test-a"), Some(a));
        assert!(a >= 1);
    }

    #[test]
    fn header_round_trip_through_the_wrapper() {
        // Exercise the allocator directly; the test binary does not install it.
        let a = TaggedAlloc;
        let tag = register("alloc-test-direct").unwrap();
        set_thread_tag(tag);
        let before = live_bytes(tag);
        unsafe {
            let layout = Layout::from_size_align(100, 64).unwrap();
            let p = a.alloc(layout);
            assert!(!p.is_null());
            assert_eq!(p as usize % 64, 0);
            assert_eq!(live_bytes(tag), before + 100);
            let p = a.realloc(p, layout, 300);
            assert_eq!(p as usize % 64, 0);
            assert_eq!(live_bytes(tag), before + 300);
            // Freed from an untagged context, still credited back to `tag`.
            set_thread_tag(0);
            a.dealloc(p, Layout::from_size_align(300, 64).unwrap());
        }
        assert_eq!(live_bytes(tag), before);
        assert!(peak_bytes(tag) >= before + 300);
    }
}
