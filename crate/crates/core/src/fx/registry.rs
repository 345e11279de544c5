use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{BlackboxFx, FxFactory, ParamSpecSet, ParamVector};

/// Shared count of live effect instances.
#[derive(Debug, Clone, Default)]
pub struct InstanceCounter(Arc<AtomicUsize>);

impl InstanceCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn live(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }
}

/// Wraps a factory so every instance it builds is counted while alive.
pub struct CountingFactory<F> {
    inner: F,
    counter: InstanceCounter,
}

impl<F: FxFactory> CountingFactory<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            counter: InstanceCounter::new(),
        }
    }

    pub fn counter(&self) -> InstanceCounter {
        self.counter.clone()
    }
}

impl<F: FxFactory> FxFactory for CountingFactory<F> {
    fn build(&self) -> Box<dyn BlackboxFx> {
        self.counter.0.fetch_add(1, Ordering::SeqCst);
        Box::new(Counted {
            inner: self.inner.build(),
            counter: self.counter.clone(),
        })
    }
}

struct Counted {
    inner: Box<dyn BlackboxFx>,
    counter: InstanceCounter,
}

impl Drop for Counted {
    fn drop(&mut self) {
        self.counter.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl BlackboxFx for Counted {
    fn param_specs(&self) -> &ParamSpecSet {
        self.inner.param_specs()
    }
    fn block_size(&self) -> usize {
        self.inner.block_size()
    }
    fn latency(&self) -> usize {
        self.inner.latency()
    }
    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        self.inner.process_block(input, params, output)
    }
    fn reset(&mut self) {
        self.inner.reset()
    }
}
