//! Cost accounting for Hamiltonian applications.

use std::sync::atomic::{AtomicU64, Ordering};

/// Shared operation counter. Every Hamiltonian application (full or
/// single-block) increments `hamiltonian_applies` exactly once; the column and
/// transform counters give finer-grained cost measures for summaries.
#[derive(Debug, Default)]
pub struct OpCounter {
    applies: AtomicU64,
    columns: AtomicU64,
    ffts: AtomicU64,
}

/// A point-in-time reading of an [`OpCounter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub hamiltonian_applies: u64,
    pub columns_applied: u64,
    pub ffts: u64,
}

impl OpCounter {
    pub fn record_apply(&self, columns: u64) {
        self.applies.fetch_add(1, Ordering::Relaxed);
        self.columns.fetch_add(columns, Ordering::Relaxed);
    }

    pub fn record_ffts(&self, n: u64) {
        self.ffts.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            hamiltonian_applies: self.applies.load(Ordering::Relaxed),
            columns_applied: self.columns.load(Ordering::Relaxed),
            ffts: self.ffts.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.applies.store(0, Ordering::Relaxed);
        self.columns.store(0, Ordering::Relaxed);
        self.ffts.store(0, Ordering::Relaxed);
    }
}

impl OpCounts {
    /// Counts accumulated since the `start` snapshot.
    pub fn since(&self, start: &OpCounts) -> OpCounts {
        OpCounts {
            hamiltonian_applies: self.hamiltonian_applies - start.hamiltonian_applies,
            columns_applied: self.columns_applied - start.columns_applied,
            ffts: self.ffts - start.ffts,
        }
    }
}
