use serde::Serialize;

use crate::model::{EligibilityMatrix, ServerId, Time, UserId, UserSet};
use crate::rational::{Extended, Rat, WorkLevel};
use crate::scheduler::DispatchRecord;

/// Static description of the simulated system, copied into every trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SystemParams {
    pub matrix: EligibilityMatrix,
    pub rates: Vec<Rat>,
    pub weights: Vec<Rat>,
    pub delta: Rat,
    pub l_max: u64,
    pub horizon: Time,
    pub scheduler: String,
}

impl SystemParams {
    pub fn n_users(&self) -> usize {
        self.weights.len()
    }

    pub fn n_servers(&self) -> usize {
        self.rates.len()
    }

    /// `L_max / min weight`.
    pub fn lambda0(&self) -> Rat {
        let min_w = self.weights.iter().min().copied().unwrap_or_else(crate::rational::one);
        Rat::from_integer(self.l_max as i128) / min_w
    }
}

/// Whole-system state after `cursor` events have been processed. Tag and
/// level vectors are empty for schedulers that keep no such state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateView {
    pub cursor: u64,
    pub time: Time,
    pub tags: Vec<Rat>,
    pub bonuses: Vec<Rat>,
    pub levels: Vec<WorkLevel>,
    pub server_bonuses: Vec<Rat>,
    /// Cumulative allocated work per user since time zero.
    pub work: Vec<u64>,
    pub backlogged: Vec<bool>,
}

impl StateView {
    pub fn backlogged_set(&self) -> UserSet {
        self.backlogged
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_levels(&self) -> bool {
        !self.levels.is_empty()
    }

    /// Largest difference between two finite work levels.
    pub fn level_gap(&self) -> Rat {
        let finite: Vec<Rat> = self.levels.iter().filter_map(Extended::finite).collect();
        match (finite.iter().max(), finite.iter().min()) {
            (Some(hi), Some(lo)) => hi - lo,
            _ => Rat::from_integer(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Arrival,
    Dispatch,
    Idle,
    Sample,
}

impl RowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowKind::Arrival => "arrival",
            RowKind::Dispatch => "dispatch",
            RowKind::Idle => "idle",
            RowKind::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub kind: RowKind,
    pub server: Option<ServerId>,
    pub user: Option<UserId>,
    pub length: Option<u64>,
    pub view: StateView,
}

/// A change of the backlogged set. Changes at one instant are merged, so
/// `before` is the state ahead of the first of them and `after` the state
/// once the last has been applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Boundary {
    pub before: StateView,
    pub after: StateView,
    /// Users backlogged in some state of the merged group.
    pub joined: Vec<bool>,
    /// Users idle in some state of the merged group.
    pub dipped: Vec<bool>,
}

/// Stretch between two boundaries with a constant backlogged set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SteadyInterval {
    pub start: StateView,
    pub end: StateView,
}

impl SteadyInterval {
    pub fn t0(&self) -> Time {
        self.start.time
    }

    pub fn t1(&self) -> Time {
        self.end.time
    }

    pub fn backlogged(&self) -> UserSet {
        self.start.backlogged_set()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TagFloorViolation {
    pub cursor: u64,
    pub user: UserId,
    pub tag: Rat,
    pub level: WorkLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub params: SystemParams,
    pub dispatches: Vec<DispatchRecord>,
    pub rows: Vec<TraceRow>,
    pub boundaries: Vec<Boundary>,
    /// States captured at requested instants, in time order.
    pub checkpoints: Vec<StateView>,
    pub initial: StateView,
    pub final_state: StateView,
    pub events: u64,
    pub arrivals: u64,
    /// Largest finite work-level gap seen after any event, with its time.
    pub max_gap: Rat,
    pub max_gap_time: Time,
    pub tag_floor_violations: Vec<TagFloorViolation>,
}

impl Trace {
    /// Dispatches produced by events in `[from, to)` (cursor positions).
    pub fn dispatches_between(&self, from: u64, to: u64) -> &[DispatchRecord] {
        let lo = self.dispatches.partition_point(|d| d.event < from);
        let hi = self.dispatches.partition_point(|d| d.event < to);
        &self.dispatches[lo..hi]
    }

    /// Captured state at `t`, if `t` was requested as a checkpoint.
    pub fn checkpoint(&self, t: &Time) -> Option<&StateView> {
        self.checkpoints.iter().find(|v| v.time == *t)
    }

    /// Dispatches with dispatch time in `[t0, t1)`.
    pub fn dispatches_in(&self, t0: &Time, t1: &Time) -> &[DispatchRecord] {
        let lo = self.dispatches.partition_point(|d| d.time < *t0);
        let hi = self.dispatches.partition_point(|d| d.time < *t1);
        &self.dispatches[lo..hi]
    }

    /// Maximal intervals with a constant, nonempty backlogged set.
    pub fn steady_intervals(&self) -> Vec<SteadyInterval> {
        let mut out = Vec::new();
        for (n, b) in self.boundaries.iter().enumerate() {
            let end = match self.boundaries.get(n + 1) {
                Some(next) => StateView {
                    time: next.after.time,
                    ..next.before.clone()
                },
                None => self.final_state.clone(),
            };
            if b.after.backlogged.iter().any(|&x| x) && end.cursor >= b.after.cursor {
                out.push(SteadyInterval {
                    start: b.after.clone(),
                    end,
                });
            }
        }
        out
    }

    /// Backlogged set right after the last event at or before `t`.
    pub fn backlog_at(&self, t: &Time) -> UserSet {
        let idx = self.boundaries.partition_point(|b| b.after.time <= *t);
        match idx {
            0 => UserSet::new(),
            n => self.boundaries[n - 1].after.backlogged_set(),
        }
    }

    /// Boundaries whose change happens strictly inside `(t0, t1)`.
    pub fn boundaries_within(&self, t0: &Time, t1: &Time) -> &[Boundary] {
        let lo = self.boundaries.partition_point(|b| b.after.time <= *t0);
        let hi = self.boundaries.partition_point(|b| b.after.time < *t1);
        &self.boundaries[lo..hi.max(lo)]
    }
}
