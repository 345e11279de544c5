//! Instrumented wrappers for observing how callers drive effects.
//!
//! A [`ProbeFactory`] hands out instances that forward to a wrapped effect
//! while logging every block they see. Tests use the logs to check call
//! counts, reset ordering and that replicas share an input history.

use std::sync::{Arc, Mutex, MutexGuard};

use super::{BlackboxFx, FxFactory, ParamSpecSet, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeEvent {
    Block { len: usize },
    Reset,
}

#[derive(Debug, Default)]
pub struct ProbeRecord {
    /// Every input sample seen since construction (only when recording).
    pub inputs: Vec<f64>,
    /// Parameters of each block, in call order (only when recording).
    pub params: Vec<Vec<f64>>,
    pub events: Vec<ProbeEvent>,
    pub blocks: usize,
    pub resets: usize,
}

pub type ProbeLog = Arc<Mutex<ProbeRecord>>;

pub struct ProbeFactory<F> {
    inner: F,
    block_size: Option<usize>,
    record_signals: bool,
    logs: Arc<Mutex<Vec<ProbeLog>>>,
}

impl<F: FxFactory> ProbeFactory<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            block_size: None,
            record_signals: true,
            logs: Arc::default(),
        }
    }

    /// Overrides the reported block size, e.g. to the frame size so that
    /// one block equals one `process` call.
    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = Some(block_size);
        self
    }

    /// Keeps only counters and events, not the sample streams.
    pub fn counters_only(mut self) -> Self {
        self.record_signals = false;
        self
    }

    /// Logs of every instance built so far, in build order.
    pub fn logs(&self) -> Vec<ProbeLog> {
        self.logs.lock().expect("probe registry poisoned").clone()
    }

    pub fn total_blocks(&self) -> usize {
        self.logs().iter().map(|l| lock(l).blocks).sum()
    }
}

impl<F: FxFactory> FxFactory for ProbeFactory<F> {
    fn build(&self) -> Box<dyn BlackboxFx> {
        let log = ProbeLog::default();
        self.logs.lock().expect("probe registry poisoned").push(log.clone());
        Box::new(Probe {
            inner: self.inner.build(),
            block_size: self.block_size,
            record_signals: self.record_signals,
            log,
        })
    }
}

pub fn lock(log: &ProbeLog) -> MutexGuard<'_, ProbeRecord> {
    log.lock().expect("probe log poisoned")
}

struct Probe {
    inner: Box<dyn BlackboxFx>,
    block_size: Option<usize>,
    record_signals: bool,
    log: ProbeLog,
}

impl BlackboxFx for Probe {
    fn param_specs(&self) -> &ParamSpecSet {
        self.inner.param_specs()
    }

    fn block_size(&self) -> usize {
        self.block_size.unwrap_or_else(|| self.inner.block_size())
    }

    fn latency(&self) -> usize {
        self.inner.latency()
    }

    fn process_block(&mut self, input: &[f64], params: &ParamVector, output: &mut [f64]) {
        {
            let mut rec = lock(&self.log);
            rec.blocks += 1;
            rec.events.push(ProbeEvent::Block { len: input.len() });
            if self.record_signals {
                rec.inputs.extend_from_slice(input);
                rec.params.push(params.values().to_vec());
            }
        }
        self.inner.process_block(input, params, output)
    }

    fn reset(&mut self) {
        let mut rec = lock(&self.log);
        rec.resets += 1;
        rec.events.push(ProbeEvent::Reset);
        drop(rec);
        self.inner.reset()
    }
}
