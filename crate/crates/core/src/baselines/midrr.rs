use std::collections::VecDeque;

use num_traits::Zero;

use crate::model::{EligibilityMatrix, InService, ModelError, Packet, ServerId, Time, UserId};
use crate::rational::Rat;
use crate::scheduler::{DispatchRecord, Refill, Scheduler, SchedulerError};

#[derive(Debug, Clone)]
struct Visit {
    user: UserId,
}

#[derive(Debug, Clone)]
struct DrrServer {
    rate: Rat,
    /// Eligible users in index order; the round-robin ring.
    ring: Vec<UserId>,
    cursor: usize,
    visit: Option<Visit>,
    in_service: Option<InService>,
}

/// Per-server deficit round robin coupled through service flags.
///
/// `served_elsewhere[i][j]` is raised for every server `j` other than the
/// one that just served user `i`; server `j` clears it whenever it looks
/// at `i` and passes over `i` if it was raised.
#[derive(Debug, Clone)]
pub struct MiDrr {
    matrix: EligibilityMatrix,
    quanta: Vec<u64>,
    queues: Vec<VecDeque<Packet>>,
    deficit: Vec<Vec<u64>>,
    served_elsewhere: Vec<Vec<bool>>,
    servers: Vec<DrrServer>,
    clock: Time,
}

impl MiDrr {
    pub fn new(matrix: EligibilityMatrix, rates: &[Rat], quanta: &[u64]) -> Result<Self, ModelError> {
        crate::model::validate_positive("server rate", rates, matrix.n_servers())?;
        if quanta.len() != matrix.n_users() {
            return Err(ModelError::LengthMismatch {
                what: "quantum",
                found: quanta.len(),
                expected: matrix.n_users(),
            });
        }
        if let Some(index) = quanta.iter().position(|&q| q == 0) {
            return Err(ModelError::NonPositive { what: "quantum", index });
        }
        let (n, k) = (matrix.n_users(), matrix.n_servers());
        let servers = (0..k)
            .map(|j| DrrServer {
                rate: rates[j],
                ring: matrix.users_of(j).collect(),
                cursor: 0,
                visit: None,
                in_service: None,
            })
            .collect();
        Ok(Self {
            quanta: quanta.to_vec(),
            queues: vec![VecDeque::new(); n],
            deficit: vec![vec![0; k]; n],
            served_elsewhere: vec![vec![false; k]; n],
            servers,
            matrix,
            clock: Rat::zero(),
        })
    }

    fn advance(&mut self, now: &Time) -> Result<(), SchedulerError> {
        if *now < self.clock {
            return Err(SchedulerError::TimeReversal {
                now: *now,
                clock: self.clock,
            });
        }
        self.clock = *now;
        Ok(())
    }

    fn end_visit(&mut self, j: ServerId) {
        let s = &mut self.servers[j];
        s.visit = None;
        s.cursor = (s.cursor + 1) % s.ring.len();
    }

    /// Chooses the user whose head packet server `j` sends next.
    fn select(&mut self, j: ServerId) -> Option<UserId> {
        if !self.servers[j].ring.iter().any(|&i| !self.queues[i].is_empty()) {
            return None;
        }
        loop {
            let (i, continuing) = match &self.servers[j].visit {
                Some(v) => (v.user, true),
                None => (self.servers[j].ring[self.servers[j].cursor], false),
            };
            if self.queues[i].is_empty() {
                self.deficit[i][j] = 0;
                self.end_visit(j);
                continue;
            }
            if std::mem::take(&mut self.served_elsewhere[i][j]) {
                self.end_visit(j);
                continue;
            }
            if !continuing {
                self.deficit[i][j] += self.quanta[i];
                self.servers[j].visit = Some(Visit { user: i });
            }
            let head = self.queues[i][0].length;
            if head <= self.deficit[i][j] {
                self.deficit[i][j] -= head;
                return Some(i);
            }
            self.end_visit(j);
        }
    }
}

impl Scheduler for MiDrr {
    fn name(&self) -> &'static str {
        "midrr"
    }

    fn matrix(&self) -> &EligibilityMatrix {
        &self.matrix
    }

    fn enqueue(&mut self, packet: Packet, now: &Time) -> Result<Vec<ServerId>, SchedulerError> {
        self.advance(now)?;
        let i = packet.owner;
        if i >= self.queues.len() {
            return Err(SchedulerError::UnknownUser(i));
        }
        self.queues[i].push_back(packet);
        Ok(self
            .matrix
            .servers_of(i)
            .filter(|&k| self.servers[k].in_service.is_none())
            .collect())
    }

    fn dispatch(
        &mut self,
        j: ServerId,
        now: &Time,
        refill: &mut Refill<'_>,
    ) -> Result<Option<DispatchRecord>, SchedulerError> {
        if j >= self.servers.len() {
            return Err(SchedulerError::UnknownServer(j));
        }
        if self.servers[j].in_service.is_some() {
            return Err(SchedulerError::Busy(j));
        }
        self.advance(now)?;
        let Some(i) = self.select(j) else {
            return Ok(None);
        };
        let packet = self.queues[i].pop_front().expect("selected user has a packet");
        if self.queues[i].is_empty() {
            if let Some(next) = refill(i, now) {
                if next.owner != i {
                    return Err(SchedulerError::WrongOwner {
                        expected: i,
                        found: next.owner,
                    });
                }
                self.queues[i].push_back(next);
            }
        }
        for (l, flag) in self.served_elsewhere[i].iter_mut().enumerate() {
            if l != j {
                *flag = true;
            }
        }
        let completion = *now + Rat::from_integer(packet.length as i128) / self.servers[j].rate;
        self.servers[j].in_service = Some(InService {
            packet: packet.clone(),
            completion,
        });
        Ok(Some(DispatchRecord {
            event: 0,
            time: *now,
            server: j,
            packet,
            completion,
            tags: None,
            levels: None,
        }))
    }

    fn complete(&mut self, j: ServerId, now: &Time) -> Result<Packet, SchedulerError> {
        if j >= self.servers.len() {
            return Err(SchedulerError::UnknownServer(j));
        }
        self.advance(now)?;
        self.servers[j]
            .in_service
            .take()
            .map(|s| s.packet)
            .ok_or(SchedulerError::Idle(j))
    }

    fn is_busy(&self, j: ServerId) -> bool {
        self.servers[j].in_service.is_some()
    }

    fn queue_len(&self, i: UserId) -> usize {
        self.queues[i].len()
    }
}
