use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::Instant;

use crate::a3c::NetworkParams;
use crate::autodiff::GradientSet;
use crate::error::{contract, Error, Result};
use crate::optim::{RmsPropConfig, RmsPropState};

/// Hash of every parameter's bit pattern.
pub fn params_checksum(params: &NetworkParams<f32>) -> u64 {
    let mut h = DefaultHasher::new();
    for t in &params.tensors {
        t.shape().hash(&mut h);
        for x in t.data() {
            x.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Parameters as of a checkpoint boundary.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: u64,
    pub version: u64,
    pub wallclock_s: f64,
    pub params: Arc<NetworkParams<f32>>,
}

struct Inner {
    params: Arc<NetworkParams<f32>>,
    rmsprop: RmsPropState<f32>,
    version: u64,
    checksums: Option<Vec<u64>>,
    boundaries: Vec<u64>,
    snapshots: Vec<Snapshot>,
}

/// Authoritative parameters, optimizer state and the global step counter.
pub struct ParameterStore {
    inner: RwLock<Inner>,
    counter: AtomicU64,
    closed: AtomicBool,
    started: Instant,
}

impl ParameterStore {
    /// `boundaries` are the counter values at which a checkpoint snapshot
    /// is taken, ascending.
    pub fn new(
        params: NetworkParams<f32>,
        rmsprop: RmsPropConfig,
        boundaries: Vec<u64>,
        record_checksums: bool,
    ) -> Self {
        let rms = RmsPropState::new(&params.tensors, rmsprop);
        let checksums = record_checksums.then(|| vec![params_checksum(&params)]);
        Self {
            inner: RwLock::new(Inner {
                params: Arc::new(params),
                rmsprop: rms,
                version: 0,
                checksums,
                boundaries,
                snapshots: Vec::new(),
            }),
            counter: AtomicU64::new(0),
            closed: AtomicBool::new(false),
            started: Instant::now(),
        }
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|p| p.into_inner())
    }

    /// Current parameters and their version. The parameters are shared,
    /// never mutated in place, so a snapshot is always a complete version.
    pub fn snapshot(&self) -> (Arc<NetworkParams<f32>>, u64) {
        let g = self.read();
        (g.params.clone(), g.version)
    }

    pub fn version(&self) -> u64 {
        self.read().version
    }

    /// Checksum recorded for `version`, when checksums are enabled.
    pub fn checksum_of(&self, version: u64) -> Option<u64> {
        self.read()
            .checksums
            .as_ref()
            .and_then(|c| c.get(version as usize).copied())
    }

    pub fn accumulators(&self) -> Vec<crate::tensor::Tensor<f32>> {
        self.read().rmsprop.accumulators().to_vec()
    }

    /// Adds `n` steps to the global counter and returns the new total.
    pub fn add_steps(&self, n: u64) -> u64 {
        self.counter.fetch_add(n, Ordering::SeqCst) + n
    }

    pub fn counter(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Applies one RMSProp step and returns the new version. Every
    /// checkpoint boundary the counter has passed is snapshotted right
    /// after the update.
    pub fn apply_update(&self, grads: &GradientSet<f32>, lr: f64) -> Result<u64> {
        if self.is_closed() {
            return Err(Error::Worker("parameter store is closed".into()));
        }
        let mut g = self.write();
        grads.check_congruent(&g.params.tensors)?;
        let mut next = (*g.params).clone();
        let inner = &mut *g;
        inner.rmsprop.step(&mut next.tensors, grads, lr)?;
        if next.tensors.iter().any(|t| !t.all_finite()) {
            return Err(contract("update produced non-finite parameters"));
        }
        if let Some(c) = &mut inner.checksums {
            c.push(params_checksum(&next));
        }
        inner.params = Arc::new(next);
        inner.version += 1;

        let counter = self.counter();
        while inner.snapshots.len() < inner.boundaries.len()
            && counter >= inner.boundaries[inner.snapshots.len()]
        {
            let snap = Snapshot {
                step: counter,
                version: inner.version,
                wallclock_s: self.started.elapsed().as_secs_f64(),
                params: inner.params.clone(),
            };
            inner.snapshots.push(snap);
        }
        Ok(inner.version)
    }

    pub fn snapshots(&self) -> Vec<Snapshot> {
        self.read().snapshots.clone()
    }

    pub fn boundaries(&self) -> Vec<u64> {
        self.read().boundaries.clone()
    }
}
