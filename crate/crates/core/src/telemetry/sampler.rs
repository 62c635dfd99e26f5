//! Background sampler polling component probes at a fixed cadence.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::ResourceSample;

/// One reading of a component's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Reading {
    pub cpu_time_ms: f64,
    pub ram_bytes: u64,
    pub disk_bytes_written: u64,
    pub net_bytes: u64,
}

pub type ProbeFn = Arc<dyn Fn() -> Reading + Send + Sync>;

#[derive(Clone)]
pub struct Probe {
    pub component: String,
    pub read: ProbeFn,
}

impl Probe {
    pub fn new(component: &str, read: impl Fn() -> Reading + Send + Sync + 'static) -> Self {
        Self {
            component: component.to_string(),
            read: Arc::new(read),
        }
    }
}

struct Shared {
    started: Instant,
    probes: Vec<Probe>,
    samples: Mutex<Vec<ResourceSample>>,
}

impl Shared {
    fn now_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1000.0
    }

    fn sample_all(&self) -> f64 {
        // Held across the readings so timestamps stay ordered.
        let mut samples = self.samples.lock().unwrap();
        let t = self.now_ms();
        let batch: Vec<ResourceSample> = self
            .probes
            .iter()
            .map(|p| {
                let r = (p.read)();
                ResourceSample {
                    component: p.component.clone(),
                    timestamp_ms: t,
                    cpu_time_ms: r.cpu_time_ms,
                    ram_bytes: r.ram_bytes,
                    disk_bytes_written: r.disk_bytes_written,
                    net_bytes: r.net_bytes,
                }
            })
            .collect();
        samples.extend(batch);
        t
    }
}

pub struct Sampler {
    shared: Arc<Shared>,
    stop: Option<mpsc::Sender<()>>,
    join: Option<JoinHandle<()>>,
    interval: Duration,
}

impl Sampler {
    pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(1);

    /// Takes a first sample immediately, then one every `interval`.
    pub fn start(probes: Vec<Probe>, interval: Duration) -> std::io::Result<Self> {
        let shared = Arc::new(Shared {
            started: Instant::now(),
            probes,
            samples: Mutex::new(Vec::new()),
        });
        shared.sample_all();
        let (tx, rx) = mpsc::channel::<()>();
        let worker = shared.clone();
        let join = std::thread::Builder::new()
            .name("sampler".into())
            .spawn(move || loop {
                match rx.recv_timeout(interval) {
                    Err(RecvTimeoutError::Timeout) => {
                        worker.sample_all();
                    }
                    _ => break,
                }
            })?;
        Ok(Self {
            shared,
            stop: Some(tx),
            join: Some(join),
            interval,
        })
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Samples every probe now and returns the timestamp used, so phase
    /// boundaries always have a sample exactly on them.
    pub fn sample_now(&self) -> f64 {
        self.shared.sample_all()
    }

    pub fn samples(&self) -> Vec<ResourceSample> {
        self.shared.samples.lock().unwrap().clone()
    }

    /// Stops the background thread and returns everything collected.
    pub fn stop(mut self) -> Vec<ResourceSample> {
        self.halt();
        self.samples()
    }

    fn halt(&mut self) {
        self.stop.take();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for Sampler {
    fn drop(&mut self) {
        self.halt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    #[test]
    fn cadence_and_explicit_samples() {
        let counter = Arc::new(AtomicU64::new(0));
        let c = counter.clone();
        let probe = Probe::new("a", move || Reading {
            net_bytes: c.fetch_add(1, Ordering::SeqCst),
            ..Reading::default()
        });
        let interval = Duration::from_millis(100);
        let s = Sampler::start(vec![probe], interval).unwrap();
        std::thread::sleep(Duration::from_millis(1050));
        let t = s.sample_now();
        let samples = s.stop();
        assert!(samples.len() >= 9, "{}", samples.len());
        assert_eq!(samples.last().unwrap().timestamp_ms, t);
        // Liveness: no gap wider than twice the interval.
        for w in samples.windows(2) {
            assert!(w[1].timestamp_ms >= w[0].timestamp_ms);
            assert!(w[1].net_bytes > w[0].net_bytes);
            assert!(w[1].timestamp_ms - w[0].timestamp_ms <= 2.0 * 100.0);
        }
    }
}
