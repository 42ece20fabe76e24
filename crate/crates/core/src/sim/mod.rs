//! Discrete-event simulation of a scheduler over a scenario.
//!
//! Events at one instant run in a fixed order: arrivals (by user, then
//! source), then server-free events (by server). A server-free event is a
//! completion or a wake-up of an idle server after an arrival, and starts
//! at most one packet.

mod sources;
mod trace;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::baselines::MiDrr;
use crate::model::{validate_positive, EligibilityMatrix, ModelError, Packet, UserId};
use crate::rational::{Extended, Rat};
use crate::scheduler::{default_delta, Cm4fq, Scheduler, SchedulerError, Variant};

pub use sources::{Burst, LengthLaw, SourceSpec, Window};
pub use trace::{
    Boundary, TagFloorViolation, RowKind, StateView, SteadyInterval, SystemParams, Trace, TraceRow,
};

use sources::SourceState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scheduler failure: {0}")]
    Scheduler(#[from] SchedulerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub matrix: EligibilityMatrix,
    pub rates: Vec<Rat>,
    pub weights: Vec<Rat>,
    /// Gap-regulation threshold; the `(K + 1) L_max / min weight` rule
    /// applies when absent.
    pub delta: Option<Rat>,
    /// Declared maximum packet length; derived from the sources when absent.
    pub max_packet_length: Option<u64>,
    pub variant: Variant,
    /// Traffic sources of each user.
    pub sources: Vec<Vec<SourceSpec>>,
    pub horizon: Rat,
    pub seed: u64,
    pub sample_period: Option<Rat>,
    /// Base deficit-round-robin quantum (scaled by weight).
    pub quantum: Option<u64>,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.matrix.n_users()
    }

    pub fn n_servers(&self) -> usize {
        self.matrix.n_servers()
    }

    fn derived_l_max(&self) -> u64 {
        self.sources.iter().flatten().map(SourceSpec::max_length).max().unwrap_or(1).max(1)
    }

    pub fn l_max(&self) -> u64 {
        self.max_packet_length.unwrap_or_else(|| self.derived_l_max())
    }

    pub fn delta(&self) -> Rat {
        self.delta
            .unwrap_or_else(|| default_delta(self.n_servers(), &self.weights, self.l_max()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        validate_positive("server rate", &self.rates, self.n_servers())?;
        validate_positive("user weight", &self.weights, self.n_users())?;
        if self.sources.len() != self.n_users() {
            return Err(SimError::Config(format!(
                "{} source lists for {} users",
                self.sources.len(),
                self.n_users()
            )));
        }
        for (i, list) in self.sources.iter().enumerate() {
            for s in list {
                s.validate().map_err(|e| SimError::Config(format!("user {i}: {e}")))?;
            }
        }
        if let Some(l) = self.max_packet_length {
            if l == 0 {
                return Err(SimError::Config("max_packet_length must be positive".into()));
            }
            let used = self.derived_l_max();
            if used > l {
                return Err(SimError::Config(format!(
                    "sources emit packets of {used} bits, above max_packet_length {l}"
                )));
            }
        }
        if self.horizon.is_negative() {
            return Err(SimError::Config("horizon must be non-negative".into()));
        }
        if self.delta.is_some_and(|d| d.is_negative()) {
            return Err(SimError::Config("delta must be non-negative".into()));
        }
        if self.sample_period.is_some_and(|p| !p.is_positive()) {
            return Err(SimError::Config("sample_period must be positive".into()));
        }
        if self.quantum == Some(0) {
            return Err(SimError::Config("quantum must be positive".into()));
        }
        Ok(())
    }

    pub fn params(&self, scheduler: &str) -> SystemParams {
        SystemParams {
            matrix: self.matrix.clone(),
            rates: self.rates.clone(),
            weights: self.weights.clone(),
            delta: self.delta(),
            l_max: self.l_max(),
            horizon: self.horizon,
            scheduler: scheduler.to_string(),
        }
    }

    pub fn cm4fq(&self, variant: Variant, record_levels: bool) -> Result<Cm4fq, SimError> {
        Ok(Cm4fq::new(self.matrix.clone(), &self.rates, &self.weights, self.delta(), variant)?
            .with_level_detail(record_levels))
    }

    /// Per-user quanta: base quantum (default `L_max`) times weight, rounded up.
    pub fn quanta(&self) -> Vec<u64> {
        let base = Rat::from_integer(self.quantum.unwrap_or_else(|| self.l_max()) as i128);
        self.weights
            .iter()
            .map(|w| (base * w).ceil().to_integer().max(1) as u64)
            .collect()
    }

    pub fn midrr(&self) -> Result<MiDrr, SimError> {
        Ok(MiDrr::new(self.matrix.clone(), &self.rates, &self.quanta())?)
    }
}

/// Replaces every packet length by `eps` bits so the packetized run
/// approaches the fluid trajectory. An explicit `delta` is scaled by the
/// same factor as the maximum packet length.
pub fn fluid_approx(scenario: &Scenario, eps: u64) -> Result<Scenario, SimError> {
    if eps == 0 {
        return Err(SimError::Config("fluid packet length must be positive".into()));
    }
    let old = Rat::from_integer(scenario.l_max() as i128);
    let scale = Rat::from_integer(eps as i128) / old;
    let mut out = scenario.clone();
    out.sources = scenario
        .sources
        .iter()
        .map(|list| list.iter().map(|s| s.with_packet_length(eps)).collect())
        .collect();
    out.max_packet_length = Some(eps);
    out.delta = scenario.delta.map(|d| d * scale);
    out.quantum = scenario.quantum.map(|q| (Rat::from_integer(q as i128) * scale).ceil().to_integer().max(1) as u64);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SnapshotPolicy {
    /// One row per processed event.
    #[default]
    EveryEvent,
    /// One row per sample instant.
    Periodic(Rat),
    /// No rows; boundaries and dispatches are still recorded.
    ChangesOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceOptions {
    pub snapshots: SnapshotPolicy,
    /// Attach server levels to every dispatch record.
    pub record_levels: bool,
    /// Instants at which to capture the state ahead of any event at that time.
    pub checkpoints: Vec<Rat>,
}

impl TraceOptions {
    /// Periodic rows when the scenario names a sample period, else a row per event.
    pub fn for_scenario(s: &Scenario) -> Self {
        Self {
            snapshots: s.sample_period.map_or(SnapshotPolicy::EveryEvent, SnapshotPolicy::Periodic),
            record_levels: false,
            checkpoints: Vec::new(),
        }
    }
}

/// Runs the scenario under its configured CM4FQ variant.
pub fn run(scenario: &Scenario, options: &TraceOptions) -> Result<Trace, SimError> {
    scenario.validate()?;
    let mut sched = scenario.cm4fq(scenario.variant, options.record_levels)?;
    run_with(scenario, &mut sched, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventClass {
    Arrival = 0,
    ServerFree = 1,
}

type EventKey = Reverse<(Rat, EventClass, usize, usize)>;

fn view_of(sched: &dyn Scheduler, cursor: u64, time: Rat, work: &[u64], n_users: usize) -> StateView {
    let backlogged = (0..n_users).map(|i| sched.queue_len(i) > 0).collect();
    match sched.system_state() {
        Some(s) => StateView {
            cursor,
            time,
            tags: s.tags(),
            bonuses: s.bonuses(),
            levels: s.levels(),
            server_bonuses: s.server_bonuses(),
            work: work.to_vec(),
            backlogged,
        },
        None => StateView {
            cursor,
            time,
            tags: Vec::new(),
            bonuses: Vec::new(),
            levels: Vec::new(),
            server_bonuses: Vec::new(),
            work: work.to_vec(),
            backlogged,
        },
    }
}

/// Runs any scheduler over the scenario's traffic.
pub fn run_with(scenario: &Scenario, sched: &mut dyn Scheduler, options: &TraceOptions) -> Result<Trace, SimError> {
    scenario.validate()?;
    if sched.matrix() != &scenario.matrix {
        return Err(SimError::Config("scheduler and scenario disagree on the eligibility matrix".into()));
    }
    let n = scenario.n_users();
    let k_count = scenario.n_servers();
    let horizon = scenario.horizon;

    let mut states: Vec<Vec<SourceState>> = scenario
        .sources
        .iter()
        .enumerate()
        .map(|(i, list)| {
            list.iter()
                .enumerate()
                .map(|(s, spec)| SourceState::new(spec, scenario.seed, (i * 64 + s) as u64))
                .collect()
        })
        .collect();
    let mut pending: Vec<Vec<Option<(Rat, u64)>>> = states
        .iter_mut()
        .map(|list| list.iter_mut().map(SourceState::next_arrival).collect())
        .collect();
    let mut heap: BinaryHeap<EventKey> = BinaryHeap::new();
    for (i, list) in pending.iter().enumerate() {
        for (s, p) in list.iter().enumerate() {
            if let Some((t, _)) = p {
                heap.push(Reverse((*t, EventClass::Arrival, i, s)));
            }
        }
    }

    let mut seq = vec![0u64; n];
    let mut work = vec![0u64; n];
    let mut wake_pending = vec![false; k_count];
    let mut dispatches = Vec::new();
    let mut rows = Vec::new();
    let mut boundaries: Vec<Boundary> = Vec::new();
    let mut tag_floor_violations = Vec::new();
    let mut max_gap = Rat::zero();
    let mut max_gap_time = Rat::zero();
    let mut arrivals = 0u64;
    let mut cursor = 0u64;

    let initial = view_of(sched, 0, Rat::zero(), &work, n);
    let mut prev = initial.clone();
    let mut checkpoints: Vec<Rat> = options.checkpoints.iter().copied().filter(|c| *c <= horizon).collect();
    checkpoints.sort();
    checkpoints.dedup();
    let mut captured = Vec::with_capacity(checkpoints.len());
    let mut next_sample = match &options.snapshots {
        SnapshotPolicy::Periodic(_) => Some(Rat::zero()),
        _ => None,
    };

    while let Some(Reverse((t, class, index, source))) = heap.peek().cloned() {
        if t >= horizon {
            break;
        }
        heap.pop();
        while captured.len() < checkpoints.len() && checkpoints[captured.len()] <= t {
            captured.push(StateView {
                time: checkpoints[captured.len()],
                ..prev.clone()
            });
        }
        if let (Some(ns), SnapshotPolicy::Periodic(period)) = (&mut next_sample, &options.snapshots) {
            while *ns <= t {
                let mut v = prev.clone();
                v.time = *ns;
                rows.push(TraceRow {
                    kind: RowKind::Sample,
                    server: None,
                    user: None,
                    length: None,
                    view: v,
                });
                *ns += period;
            }
        }

        let row = match class {
            EventClass::Arrival => {
                let (_, length) = pending[index][source].take().expect("scheduled arrival is pending");
                let packet = Packet {
                    owner: index,
                    length,
                    arrival_time: t,
                    seq: seq[index],
                };
                seq[index] += 1;
                arrivals += 1;
                for k in sched.enqueue(packet, &t)? {
                    if !wake_pending[k] {
                        wake_pending[k] = true;
                        heap.push(Reverse((t, EventClass::ServerFree, k, 0)));
                    }
                }
                if let Some(next) = states[index][source].next_arrival() {
                    heap.push(Reverse((next.0, EventClass::Arrival, index, source)));
                    pending[index][source] = Some(next);
                }
                (RowKind::Arrival, None, Some(index), Some(length))
            }
            EventClass::ServerFree => {
                let k = index;
                wake_pending[k] = false;
                if sched.is_busy(k) {
                    sched.complete(k, &t)?;
                }
                let mut refill = |u: UserId, now: &Rat| -> Option<Packet> {
                    let length = states[u].iter_mut().find_map(|s| s.refill(now))?;
                    let p = Packet {
                        owner: u,
                        length,
                        arrival_time: *now,
                        seq: seq[u],
                    };
                    seq[u] += 1;
                    Some(p)
                };
                match sched.dispatch(k, &t, &mut refill)? {
                    Some(mut d) => {
                        d.event = cursor;
                        work[d.packet.owner] += d.packet.length;
                        heap.push(Reverse((d.completion, EventClass::ServerFree, k, 0)));
                        let r = (RowKind::Dispatch, Some(k), Some(d.packet.owner), Some(d.packet.length));
                        dispatches.push(d);
                        r
                    }
                    None => (RowKind::Idle, Some(k), None, None),
                }
            }
        };
        cursor += 1;
        let view = view_of(sched, cursor, t, &work, n);

        if view.has_levels() {
            let gap = view.level_gap();
            if gap > max_gap {
                max_gap = gap;
                max_gap_time = t;
            }
            for i in (0..n).filter(|&i| view.backlogged[i]) {
                let level = scenario
                    .matrix
                    .servers_of(i)
                    .map(|k| view.levels[k])
                    .max()
                    .unwrap_or(Extended::Infinite);
                if Extended::Finite(view.tags[i]) < level {
                    tag_floor_violations.push(TagFloorViolation {
                        cursor,
                        user: i,
                        tag: view.tags[i],
                        level,
                    });
                }
            }
        }
        if view.backlogged != prev.backlogged {
            match boundaries.last_mut() {
                Some(last) if last.after.time == t => {
                    for (i, &b) in view.backlogged.iter().enumerate() {
                        last.joined[i] |= b;
                        last.dipped[i] |= !b;
                    }
                    last.after = view.clone();
                }
                _ => boundaries.push(Boundary {
                    before: prev.clone(),
                    joined: view.backlogged.clone(),
                    dipped: view.backlogged.iter().map(|b| !b).collect(),
                    after: view.clone(),
                }),
            }
        }
        if options.snapshots == SnapshotPolicy::EveryEvent {
            rows.push(TraceRow {
                kind: row.0,
                server: row.1,
                user: row.2,
                length: row.3,
                view: view.clone(),
            });
        }
        prev = view;
    }

    let mut final_state = prev;
    final_state.time = horizon.max(final_state.time);
    while captured.len() < checkpoints.len() {
        captured.push(StateView {
            time: checkpoints[captured.len()],
            ..final_state.clone()
        });
    }
    if let (Some(ns), SnapshotPolicy::Periodic(period)) = (&mut next_sample, &options.snapshots) {
        while *ns <= horizon {
            let mut v = final_state.clone();
            v.time = *ns;
            rows.push(TraceRow {
                kind: RowKind::Sample,
                server: None,
                user: None,
                length: None,
                view: v,
            });
            *ns += period;
        }
    }

    Ok(Trace {
        params: scenario.params(sched.name()),
        dispatches,
        rows,
        boundaries,
        checkpoints: captured,
        initial,
        final_state,
        events: cursor,
        arrivals,
        max_gap,
        max_gap_time,
        tag_floor_violations,
    })
}
