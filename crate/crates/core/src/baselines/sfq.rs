use std::collections::VecDeque;

use num_traits::Zero;

use crate::model::{EligibilityMatrix, InService, ModelError, Packet, ServerId, Time, UserId};
use crate::rational::Rat;
use crate::scheduler::{DispatchRecord, Refill, Scheduler, SchedulerError, TagChange};

/// How the system virtual time is read when a packet arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VirtualClock {
    /// Smallest start tag among queued head packets, zero when none wait.
    #[default]
    WaitingHead,
    /// Start tag of the packet in service; when idle, the largest finish
    /// tag handed out so far.
    InService,
    /// Smallest start tag among head packets right after the most recent
    /// dispatch, zero when none waited then. Held between dispatches.
    LastDispatch,
}

#[derive(Debug, Clone)]
struct Tagged {
    packet: Packet,
    start: Rat,
    finish: Rat,
}

/// Start-time fair queuing on one server with per-packet tags.
#[derive(Debug, Clone)]
pub struct SingleServerSfq {
    matrix: EligibilityMatrix,
    rate: Rat,
    weights: Vec<Rat>,
    clock_rule: VirtualClock,
    queues: Vec<VecDeque<Tagged>>,
    last_finish: Vec<Rat>,
    in_service: Option<(InService, Rat)>,
    max_finish: Rat,
    sampled: Rat,
    clock: Time,
}

impl SingleServerSfq {
    pub fn new(rate: Rat, weights: &[Rat], clock_rule: VirtualClock) -> Result<Self, ModelError> {
        let matrix = EligibilityMatrix::full(weights.len(), 1)?;
        crate::model::validate_positive("server rate", &[rate], 1)?;
        crate::model::validate_positive("user weight", weights, weights.len())?;
        Ok(Self {
            matrix,
            rate,
            weights: weights.to_vec(),
            clock_rule,
            queues: vec![VecDeque::new(); weights.len()],
            last_finish: vec![Rat::zero(); weights.len()],
            in_service: None,
            max_finish: Rat::zero(),
            sampled: Rat::zero(),
            clock: Rat::zero(),
        })
    }

    fn virtual_time(&self) -> Rat {
        match self.clock_rule {
            VirtualClock::WaitingHead => self
                .queues
                .iter()
                .filter_map(|q| q.front().map(|p| p.start))
                .min()
                .unwrap_or_else(Rat::zero),
            VirtualClock::InService => match &self.in_service {
                Some((_, start)) => *start,
                None => self.max_finish,
            },
            VirtualClock::LastDispatch => self.sampled,
        }
    }

    fn push(&mut self, packet: Packet, v: Rat) {
        let i = packet.owner;
        let start = v.max(self.last_finish[i]);
        let finish = start + Rat::from_integer(packet.length as i128) / self.weights[i];
        self.last_finish[i] = finish;
        self.queues[i].push_back(Tagged { packet, start, finish });
    }
}

impl Scheduler for SingleServerSfq {
    fn name(&self) -> &'static str {
        "sfq"
    }

    fn matrix(&self) -> &EligibilityMatrix {
        &self.matrix
    }

    fn enqueue(&mut self, packet: Packet, now: &Time) -> Result<Vec<ServerId>, SchedulerError> {
        if *now < self.clock {
            return Err(SchedulerError::TimeReversal {
                now: *now,
                clock: self.clock,
            });
        }
        self.clock = *now;
        if packet.owner >= self.queues.len() {
            return Err(SchedulerError::UnknownUser(packet.owner));
        }
        let v = if self.queues[packet.owner].is_empty() {
            self.virtual_time()
        } else {
            Rat::zero()
        };
        self.push(packet, v);
        Ok(if self.in_service.is_none() { vec![0] } else { vec![] })
    }

    fn dispatch(
        &mut self,
        server: ServerId,
        now: &Time,
        refill: &mut Refill<'_>,
    ) -> Result<Option<DispatchRecord>, SchedulerError> {
        if server != 0 {
            return Err(SchedulerError::UnknownServer(server));
        }
        if self.in_service.is_some() {
            return Err(SchedulerError::Busy(0));
        }
        self.clock = *now;
        let chosen = (0..self.queues.len())
            .filter_map(|i| self.queues[i].front().map(|p| (p.start, i)))
            .min();
        let Some((_, i)) = chosen else {
            return Ok(None);
        };
        let tagged = self.queues[i].pop_front().expect("chosen queue has a head");
        if self.queues[i].is_empty() {
            if let Some(next) = refill(i, now) {
                if next.owner != i {
                    return Err(SchedulerError::WrongOwner {
                        expected: i,
                        found: next.owner,
                    });
                }
                // the user never left the backlog, so it chains on its own tag
                let chained = self.last_finish[i];
                self.push(next, chained);
            }
        }
        self.max_finish = self.max_finish.max(tagged.finish);
        self.sampled = self
            .queues
            .iter()
            .filter_map(|q| q.front().map(|p| p.start))
            .min()
            .unwrap_or_else(Rat::zero);
        let completion = *now + Rat::from_integer(tagged.packet.length as i128) / self.rate;
        self.in_service = Some((
            InService {
                packet: tagged.packet.clone(),
                completion,
            },
            tagged.start,
        ));
        Ok(Some(DispatchRecord {
            event: 0,
            time: *now,
            server: 0,
            packet: tagged.packet,
            completion,
            tags: Some(TagChange {
                before: tagged.start,
                after: tagged.finish,
            }),
            levels: None,
        }))
    }

    fn complete(&mut self, server: ServerId, now: &Time) -> Result<Packet, SchedulerError> {
        if server != 0 {
            return Err(SchedulerError::UnknownServer(server));
        }
        self.clock = *now;
        self.in_service
            .take()
            .map(|(s, _)| s.packet)
            .ok_or(SchedulerError::Idle(0))
    }

    fn is_busy(&self, server: ServerId) -> bool {
        server == 0 && self.in_service.is_some()
    }

    fn queue_len(&self, i: UserId) -> usize {
        self.queues[i].len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn pkt(owner: UserId, length: u64, t: i128, seq: u64) -> Packet {
        Packet {
            owner,
            length,
            arrival_time: rat(t),
            seq,
        }
    }

    /// Drives a single server through a list of timed arrivals and returns
    /// the served user sequence.
    fn serve(mut s: SingleServerSfq, arrivals: &[Packet]) -> Vec<UserId> {
        let mut pending: VecDeque<Packet> = arrivals.iter().cloned().collect();
        let mut order = Vec::new();
        let mut busy_until: Option<Rat> = None;
        loop {
            let next_arrival = pending.front().map(|p| p.arrival_time);
            match (next_arrival, busy_until) {
                (Some(a), Some(c)) if c <= a => {
                    s.complete(0, &c).unwrap();
                    busy_until = None;
                }
                (Some(a), _) => {
                    let p = pending.pop_front().unwrap();
                    s.enqueue(p, &a).unwrap();
                    if busy_until.is_some() {
                        continue;
                    }
                    if pending.front().map(|p| p.arrival_time) == Some(a) {
                        continue;
                    }
                }
                (None, Some(c)) => {
                    s.complete(0, &c).unwrap();
                    busy_until = None;
                }
                (None, None) => {}
            }
            if busy_until.is_none() {
                match s.dispatch(0, &s.clock.clone(), &mut |_, _| None).unwrap() {
                    Some(d) => {
                        order.push(d.user());
                        busy_until = Some(d.completion);
                    }
                    None if pending.is_empty() => return order,
                    None => {}
                }
            }
        }
    }

    #[test]
    fn clocks_agree_on_a_single_burst() {
        let burst: Vec<Packet> = (0..3)
            .flat_map(|i| (0..4).map(move |q| pkt(i, 100 * (i as u64 + 1), 0, q)))
            .collect();
        let w = [rat(1), rat(2), rat(1)];
        let a = serve(SingleServerSfq::new(rat(100), &w, VirtualClock::WaitingHead).unwrap(), &burst);
        let b = serve(SingleServerSfq::new(rat(100), &w, VirtualClock::InService).unwrap(), &burst);
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
    }

    #[test]
    fn clocks_differ_for_a_late_arrival() {
        // user 2 arrives while user 1's first packet (start 0) is in
        // service and user 1's second packet (start 10) waits
        let arrivals = vec![
            pkt(0, 10, 0, 0),
            pkt(1, 10, 0, 0),
            pkt(1, 10, 0, 1),
            pkt(0, 10, 15, 1),
            pkt(2, 10, 15, 0),
        ];
        let w = [rat(1); 3];
        let head = serve(SingleServerSfq::new(rat(1), &w, VirtualClock::WaitingHead).unwrap(), &arrivals);
        let classic = serve(SingleServerSfq::new(rat(1), &w, VirtualClock::InService).unwrap(), &arrivals);
        assert_eq!(head, vec![0, 1, 0, 1, 2]);
        assert_eq!(classic, vec![0, 1, 2, 0, 1]);
        let sampled = serve(SingleServerSfq::new(rat(1), &w, VirtualClock::LastDispatch).unwrap(), &arrivals);
        assert_eq!(sampled, head);
    }

    #[test]
    fn sampled_clock_keeps_zero_until_the_next_dispatch() {
        // user 0 runs ahead alone, the server drains, then both users
        // return at once: the held clock lets user 1 keep its older tag
        let arrivals = vec![
            pkt(0, 10, 0, 0),
            pkt(0, 10, 0, 1),
            pkt(0, 10, 30, 2),
            pkt(1, 10, 30, 0),
        ];
        let w = [rat(1); 2];
        let head = serve(SingleServerSfq::new(rat(1), &w, VirtualClock::WaitingHead).unwrap(), &arrivals);
        let sampled = serve(SingleServerSfq::new(rat(1), &w, VirtualClock::LastDispatch).unwrap(), &arrivals);
        assert_eq!(head, vec![0, 0, 0, 1]);
        assert_eq!(sampled, vec![0, 0, 1, 0]);
    }
}
