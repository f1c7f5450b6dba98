use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::hint::black_box;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::models::Model;
use crate::nn::Tensor;
use crate::{Error, Result};

pub const PROFILE_HEADER: &str = "model,condition,mean_ms,mem_mb,peak_mb";

const MB: f64 = 1e6;

static ACTIVE: AtomicBool = AtomicBool::new(false);

thread_local! {
    static CURRENT: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
}

fn record(delta: isize) {
    let _ = CURRENT.try_with(|c| {
        let now = c.get() + delta;
        c.set(now);
        let _ = PEAK.try_with(|p| {
            if now > p.get() {
                p.set(now);
            }
        });
    });
}

/// A [`System`] wrapper that keeps per-thread counts of live heap bytes and
/// their high-water mark. Register it in a binary with
///
/// ```ignore
/// #[global_allocator]
/// static ALLOC: linkfdr::eval::CountingAllocator = linkfdr::eval::CountingAllocator;
/// ```
///
/// and [`profile_inference`] measures memory from it instead of estimating.
pub struct CountingAllocator;

impl CountingAllocator {
    /// True once any allocation went through a registered instance.
    pub fn is_active() -> bool {
        ACTIVE.load(Ordering::Relaxed)
    }

    /// Net bytes allocated minus freed by this thread.
    pub fn current() -> isize {
        CURRENT.with(Cell::get)
    }

    pub fn peak() -> isize {
        PEAK.with(Cell::get)
    }

    /// Resets this thread's high-water mark to the current level.
    pub fn reset_peak() {
        let now = Self::current();
        PEAK.with(|p| p.set(now));
    }
}

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = System.alloc(layout);
        if !ptr.is_null() {
            ACTIVE.store(true, Ordering::Relaxed);
            record(layout.size() as isize);
        }
        ptr
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let ptr = System.alloc_zeroed(layout);
        if !ptr.is_null() {
            ACTIVE.store(true, Ordering::Relaxed);
            record(layout.size() as isize);
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        record(-(layout.size() as isize));
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let out = System.realloc(ptr, layout, new_size);
        if !out.is_null() {
            record(new_size as isize - layout.size() as isize);
        }
        out
    }
}

/// How the memory columns of a [`ResourceProfile`] were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMethod {
    /// Measured with a registered [`CountingAllocator`].
    Allocator,
    /// Summed from the tensor sizes of one forward pass.
    Analytic,
}

/// Cost of single-window inference.
///
/// `mem_mb` is the heap held by one forward pass that keeps every
/// intermediate (what training needs per example); `peak_mb` is the high
/// water mark while computing it. Both exclude the weights, reported
/// separately as `param_mb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub model: String,
    pub condition: String,
    pub mean_ms: f64,
    pub mem_mb: f64,
    pub peak_mb: f64,
    pub param_mb: f64,
    pub repetitions: usize,
    pub method: MemoryMethod,
}

impl ResourceProfile {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{}", self.model, self.condition, self.mean_ms, self.mem_mb, self.peak_mb)
    }
}

pub fn profile_csv(profiles: &[ResourceProfile]) -> String {
    let mut s = format!("{PROFILE_HEADER}\n");
    for p in profiles {
        s.push_str(&p.csv_line());
        s.push('\n');
    }
    s
}

/// Times `repetitions` (at least 100) single-window predictions on the
/// calling thread, cycling through `windows`, after a short warm-up.
pub fn profile_inference(model: &Model, windows: &[Vec<f64>], repetitions: usize) -> Result<ResourceProfile> {
    if repetitions < 100 {
        return Err(Error::Config(format!("profiling needs >= 100 repetitions, got {repetitions}")));
    }
    if windows.is_empty() {
        return Err(Error::Empty("profiling windows"));
    }
    let l = model.config.window;
    if let Some(w) = windows.iter().find(|w| w.len() != l) {
        return Err(Error::Shape(format!("window has {} samples, model expects {l}", w.len())));
    }
    let inputs: Vec<Tensor> = windows.iter().map(|w| Tensor::sequence(w.clone())).collect();
    let net = &model.network;

    for x in inputs.iter().cycle().take((repetitions / 10).clamp(10, 100)) {
        black_box(net.forward(black_box(x))?);
    }
    let start = Instant::now();
    for x in inputs.iter().cycle().take(repetitions) {
        black_box(net.forward(black_box(x))?);
    }
    let mean_ms = start.elapsed().as_secs_f64() * 1e3 / repetitions as f64;

    let (live, peak, method) = if CountingAllocator::is_active() {
        let base = CountingAllocator::current();
        CountingAllocator::reset_peak();
        let trace = black_box(net.forward_traced(&inputs[0])?);
        let live = CountingAllocator::current() - base;
        let peak = CountingAllocator::peak() - base;
        drop(trace);
        (live.max(0) as f64, peak.max(0) as f64, MemoryMethod::Allocator)
    } else {
        let bytes = net.forward_traced(&inputs[0])?.size_bytes() as f64;
        (bytes, bytes, MemoryMethod::Analytic)
    };
    Ok(ResourceProfile {
        model: model.config.model.label().to_string(),
        condition: model.config.condition.label().to_string(),
        mean_ms: mean_ms.max(f64::MIN_POSITIVE),
        mem_mb: live / MB,
        peak_mb: peak.max(live) / MB,
        param_mb: net.param_bytes() as f64 / MB,
        repetitions,
        method,
    })
}
