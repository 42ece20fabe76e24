//! Allocated-work accounting and runtime checks of the throughput and
//! work-level guarantees against recorded traces.
//!
//! Every check yields [`BoundReport`]s evaluated in exact arithmetic.
//! Checks whose hypotheses do not hold on the given interval return a
//! [`MetricsError::Precondition`] naming the failed hypothesis instead of a
//! verdict.

mod cluster;
mod single;
mod throughput;

use std::fmt;

use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::model::UserId;
use crate::oracle::OracleError;
use crate::rational::{Extended, Rat};
use crate::sim::{StateView, Trace};

pub use cluster::{check_isolated_cluster_bounds, check_separation};
pub use single::check_single_server;
pub use throughput::{check_steady_state, check_tag_work_identity, check_worst_case, interval_sets};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("precondition not met: {0}")]
    Precondition(String),
    #[error("trace lacks {0}")]
    MissingData(&'static str),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "==",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundReport {
    pub bound: &'static str,
    pub t0: Rat,
    pub t1: Rat,
    pub scope: String,
    pub lhs: Rat,
    pub relation: Relation,
    pub rhs: Extended,
    pub pass: bool,
    /// Distance to the bound in the passing direction; negative on failure.
    pub slack: Extended,
}

impl BoundReport {
    pub fn new(bound: &'static str, t0: Rat, t1: Rat, scope: String, lhs: Rat, relation: Relation, rhs: Extended) -> Self {
        let (pass, slack) = match (relation, rhs) {
            (Relation::Le, Extended::Infinite) => (true, Extended::Infinite),
            (Relation::Ge, Extended::Infinite) => (false, Extended::Finite(-Rat::from_integer(1))),
            (Relation::Eq, Extended::Infinite) => (false, Extended::Infinite),
            (Relation::Le, Extended::Finite(r)) => (lhs <= r, Extended::Finite(r - lhs)),
            (Relation::Ge, Extended::Finite(r)) => (lhs >= r, Extended::Finite(lhs - r)),
            (Relation::Eq, Extended::Finite(r)) => (lhs == r, Extended::Finite(-(lhs - r).abs())),
        };
        Self {
            bound,
            t0,
            t1,
            scope,
            lhs,
            relation,
            rhs,
            pass,
            slack,
        }
    }
}

/// Work of user `i` from packets dispatched in `[t0, t1)`, counted in full
/// even if service completes later.
pub fn allocated_work(trace: &Trace, i: UserId, t0: &Rat, t1: &Rat) -> u64 {
    trace
        .dispatches_in(t0, t1)
        .iter()
        .filter(|d| d.packet.owner == i)
        .map(|d| d.packet.length)
        .sum()
}

/// Work of user `i` dispatched between two recorded states.
pub fn work_between(start: &StateView, end: &StateView, i: UserId) -> u64 {
    end.work[i] - start.work[i]
}

/// Largest difference between finite work levels in a state.
pub fn work_level_gap(view: &StateView) -> Rat {
    view.level_gap()
}

/// Largest gap observed after any event of the run.
pub fn max_work_level_gap(trace: &Trace) -> Rat {
    trace.max_gap
}

pub fn check_gap_bound(trace: &Trace, bound: Rat) -> BoundReport {
    BoundReport::new(
        "level-gap",
        Rat::zero(),
        trace.params.horizon,
        format!("max at t={}", crate::rational::to_plain(&trace.max_gap_time)),
        trace.max_gap,
        Relation::Le,
        Extended::Finite(bound),
    )
}

/// Every backlogged user must carry a tag at or above the work levels of
/// its eligible servers; violations are collected during the run.
pub fn check_tag_floor(trace: &Trace) -> BoundReport {
    BoundReport::new(
        "tag-floor",
        Rat::zero(),
        trace.params.horizon,
        "all users, every event".to_string(),
        Rat::from_integer(trace.tag_floor_violations.len() as i128),
        Relation::Eq,
        Extended::Finite(Rat::zero()),
    )
}

/// Average rate of each user over a state-to-state window, bits per second.
pub fn average_rates(start: &StateView, end: &StateView) -> Vec<Rat> {
    let span = end.time - start.time;
    (0..start.work.len())
        .map(|i| {
            if span.is_positive() {
                Rat::from_integer(work_between(start, end, i) as i128) / span
            } else {
                Rat::zero()
            }
        })
        .collect()
}

fn level_min(view: &StateView, servers: impl Iterator<Item = usize>) -> Extended {
    servers.map(|k| view.levels[k]).min().unwrap_or(Extended::Infinite)
}

fn level_max(view: &StateView, servers: impl Iterator<Item = usize>) -> Extended {
    servers.map(|k| view.levels[k]).max().unwrap_or(Extended::Infinite)
}

fn require_levels(view: &StateView) -> Result<(), MetricsError> {
    if view.has_levels() {
        Ok(())
    } else {
        Err(MetricsError::MissingData("tags and work levels (scheduler keeps none)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn report_slack_signs() {
        let r = BoundReport::new("x", rat(0), rat(1), String::new(), rat(3), Relation::Le, Extended::Finite(rat(5)));
        assert!(r.pass);
        assert_eq!(r.slack, Extended::Finite(rat(2)));
        let r = BoundReport::new("x", rat(0), rat(1), String::new(), rat(3), Relation::Ge, Extended::Finite(rat(5)));
        assert!(!r.pass);
        assert_eq!(r.slack, Extended::Finite(rat(-2)));
        let r = BoundReport::new("x", rat(0), rat(1), String::new(), rat(3), Relation::Le, Extended::Infinite);
        assert!(r.pass);
        let r = BoundReport::new("x", rat(0), rat(1), String::new(), rat(3), Relation::Eq, Extended::Finite(rat(3)));
        assert!(r.pass);
    }
}
