//! Latest / global / local model selection.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointMode {
    /// The final-round model, unconditionally.
    Latest,
    /// One shared model, selected by the server's aggregated validation loss.
    Global,
    /// A model per client, selected by that client's own validation loss.
    Local,
}

impl CheckpointMode {
    pub const ALL: [CheckpointMode; 3] = [CheckpointMode::Latest, CheckpointMode::Global, CheckpointMode::Local];

    pub fn name(self) -> &'static str {
        match self {
            CheckpointMode::Latest => "latest",
            CheckpointMode::Global => "global",
            CheckpointMode::Local => "local",
        }
    }
}

impl std::fmt::Display for CheckpointMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub snapshot: T,
    pub best_loss: f64,
    /// 1-based round the snapshot was taken in.
    pub round: usize,
}

/// Snapshots for one mode, one slot per owner.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStore<T> {
    mode: CheckpointMode,
    slots: Vec<Option<Checkpoint<T>>>,
}

impl<T> CheckpointStore<T> {
    pub fn new(mode: CheckpointMode, n_owners: usize) -> Self {
        Self {
            mode,
            slots: (0..n_owners).map(|_| None).collect(),
        }
    }

    pub fn mode(&self) -> CheckpointMode {
        self.mode
    }

    pub fn n_owners(&self) -> usize {
        self.slots.len()
    }

    /// Stores `snapshot()` when `val_loss` strictly improves on the owner's
    /// best, or always in latest mode. Returns whether a snapshot was taken.
    /// Non-finite losses never replace a snapshot.
    pub fn maybe_checkpoint(
        &mut self,
        owner: usize,
        round: usize,
        val_loss: f64,
        snapshot: impl FnOnce() -> T,
    ) -> bool {
        let slot = &mut self.slots[owner];
        let take = match (self.mode, slot.as_ref()) {
            (CheckpointMode::Latest, _) => true,
            _ if !val_loss.is_finite() => false,
            (_, None) => true,
            (_, Some(c)) => val_loss < c.best_loss,
        };
        if take {
            *slot = Some(Checkpoint {
                snapshot: snapshot(),
                best_loss: val_loss,
                round,
            });
        }
        take
    }

    pub fn get(&self, owner: usize) -> Option<&Checkpoint<T>> {
        self.slots.get(owner).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<&Checkpoint<T>>> {
        self.slots.iter().map(Option::as_ref)
    }
}
