//! Packet schedulers driven by the simulator.
//!
//! The simulator owns time and traffic; a [`Scheduler`] owns queues and
//! decides which packet a free server takes next.

mod cm4fq;

use serde::Serialize;
use thiserror::Error;

use crate::model::{EligibilityMatrix, Packet, ServerId, SystemState, Time, UserId};
use crate::rational::{Rat, WorkLevel};

pub use cm4fq::{default_delta, Cm4fq, Variant};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("server {0} is busy")]
    Busy(ServerId),
    #[error("server {0} has no packet in service")]
    Idle(ServerId),
    #[error("event at {now} precedes scheduler clock {clock}")]
    TimeReversal { now: Rat, clock: Rat },
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown server {0}")]
    UnknownServer(ServerId),
    #[error("refill packet for user {expected} belongs to user {found}")]
    WrongOwner { expected: UserId, found: UserId },
}

/// Tag of the chosen user around its increment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TagChange {
    pub before: Rat,
    pub after: Rat,
}

/// Server-side state around one dispatch, recorded on request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelDetail {
    pub levels_before: Vec<WorkLevel>,
    pub bonuses_before: Vec<Rat>,
    pub levels_after: Vec<WorkLevel>,
    /// Gap-regulation shift applied by this dispatch, if any.
    pub regulation: Option<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DispatchRecord {
    /// Index of the simulator event that produced the dispatch.
    pub event: u64,
    pub time: Time,
    pub server: ServerId,
    pub packet: Packet,
    pub completion: Time,
    pub tags: Option<TagChange>,
    pub levels: Option<LevelDetail>,
}

impl DispatchRecord {
    pub fn user(&self) -> UserId {
        self.packet.owner
    }
}

/// Supplies the next packet of a user whose queue is about to run dry.
/// Used for sources that stay backlogged without passing through the
/// arrival path.
pub type Refill<'a> = dyn FnMut(UserId, &Time) -> Option<Packet> + 'a;

pub trait Scheduler {
    fn name(&self) -> &'static str;
    fn matrix(&self) -> &EligibilityMatrix;

    /// Queues an arriving packet and returns the idle servers that should
    /// try to dispatch at this instant.
    fn enqueue(&mut self, packet: Packet, now: &Time) -> Result<Vec<ServerId>, SchedulerError>;

    /// Picks and starts at most one packet on a free server.
    fn dispatch(
        &mut self,
        server: ServerId,
        now: &Time,
        refill: &mut Refill<'_>,
    ) -> Result<Option<DispatchRecord>, SchedulerError>;

    /// Ends the service in progress on `server`.
    fn complete(&mut self, server: ServerId, now: &Time) -> Result<Packet, SchedulerError>;

    fn is_busy(&self, server: ServerId) -> bool;
    fn queue_len(&self, user: UserId) -> usize;

    /// Tag and work-level state, for schedulers that keep one.
    fn system_state(&self) -> Option<&SystemState> {
        None
    }
}
