//! Dedicated OS threads per component, so that procfs per-thread counters
//! and the allocator tag measure one component each.

use std::future::Future;
use std::io;
use std::sync::atomic::{AtomicI32, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use tokio::runtime::{Builder, Handle};
use tokio::sync::oneshot;

use super::{alloc, procfs};

/// Cheap, cloneable view of one component thread's counters.
#[derive(Debug, Clone)]
pub struct ThreadMeter {
    tag: Option<u8>,
    tid: Arc<AtomicI32>,
}

impl ThreadMeter {
    pub fn tid(&self) -> i32 {
        self.tid.load(Ordering::SeqCst)
    }

    pub fn cpu_time_ms(&self) -> f64 {
        procfs::thread_cpu_ms(self.tid()).unwrap_or(0.0)
    }

    pub fn disk_bytes_written(&self) -> u64 {
        procfs::thread_write_bytes(self.tid()).unwrap_or(0)
    }

    /// Live heap bytes owned by the component, or process RSS when the
    /// tagging allocator is not installed.
    pub fn ram_bytes(&self) -> u64 {
        match self.tag {
            Some(t) if alloc::is_active() => alloc::live_bytes(t),
            _ => procfs::process_rss_bytes().unwrap_or(0),
        }
    }
}

pub struct ComponentThread {
    name: String,
    tag: Option<u8>,
    tid: Arc<AtomicI32>,
    handle: Handle,
    stop: Option<oneshot::Sender<()>>,
    join: Option<JoinHandle<()>>,
}

impl ComponentThread {
    /// Starts a thread running a single-threaded runtime that serves every
    /// task spawned through [`ComponentThread::handle`].
    pub fn spawn(name: &str) -> io::Result<Self> {
        let tag = alloc::register(name);
        let tid = Arc::new(AtomicI32::new(0));
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let tid_w = tid.clone();
        let join = std::thread::Builder::new()
            .name(name.to_string())
            .spawn(move || {
                alloc::set_thread_tag(tag.unwrap_or(0));
                tid_w.store(procfs::current_tid(), Ordering::SeqCst);
                let rt = match Builder::new_current_thread().enable_all().build() {
                    Ok(rt) => rt,
                    Err(e) => {
                        let _ = ready_tx.send(Err(e));
                        return;
                    }
                };
                let _ = ready_tx.send(Ok(rt.handle().clone()));
                rt.block_on(async {
                    let _ = stop_rx.await;
                });
                // Dropping the runtime here cancels whatever is still spawned.
            })?;
        let handle = ready_rx
            .recv()
            .map_err(|_| io::Error::other("component thread exited during start"))??;
        Ok(Self {
            name: name.to_string(),
            tag,
            tid,
            handle,
            stop: Some(stop_tx),
            join: Some(join),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn handle(&self) -> &Handle {
        &self.handle
    }

    pub fn meter(&self) -> ThreadMeter {
        ThreadMeter {
            tag: self.tag,
            tid: self.tid.clone(),
        }
    }

    pub fn tid(&self) -> i32 {
        self.tid.load(Ordering::SeqCst)
    }

    /// Runs `fut` on this component's thread and waits for it.
    pub async fn run<F, T>(&self, fut: F) -> T
    where
        F: Future<Output = T> + Send + 'static,
        T: Send + 'static,
    {
        match self.handle.spawn(fut).await {
            Ok(v) => v,
            Err(e) if e.is_panic() => std::panic::resume_unwind(e.into_panic()),
            Err(e) => panic!("component {} task cancelled: {e}", self.name),
        }
    }

    pub fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for ComponentThread {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn work_runs_on_the_component_thread() {
        let mut c = ComponentThread::spawn("component-test").unwrap();
        let tid = c.tid();
        assert!(tid > 0);
        let (seen, name) = c
            .run(async {
                (
                    procfs::current_tid(),
                    std::thread::current().name().map(str::to_string),
                )
            })
            .await;
        assert_eq!(seen, tid);
        assert_eq!(name.as_deref(), Some("component-test"));
        let meter = c.meter();
        let before = meter.cpu_time_ms();
        c.run(async {
            let mut x = 0u64;
            for i in 0..20_000_000u64 {
                x = x.wrapping_mul(31).wrapping_add(i);
            }
            std::hint::black_box(x);
        })
        .await;
        assert!(meter.cpu_time_ms() > before);
        c.shutdown();
    }
}
