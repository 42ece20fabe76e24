use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{DispatchRecord, LevelDetail, Refill, Scheduler, SchedulerError, TagChange};
use crate::model::{EligibilityMatrix, InService, ModelError, Packet, ServerId, SystemState, Time, UserId};
use crate::rational::{Extended, Rat, WorkLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Work-level update with gap regulation.
    #[default]
    Full,
    /// Work levels follow the minimum tag; no gap regulation.
    Reduced,
    /// The dispatching server's level jumps to the chosen user's tag
    /// before the increment.
    #[serde(rename = "sfq", alias = "sfq_based")]
    SfqBased,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Reduced => "reduced",
            Variant::SfqBased => "sfq",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Variant::Full),
            "reduced" => Ok(Variant::Reduced),
            "sfq" | "sfq_based" => Ok(Variant::SfqBased),
            other => Err(format!("unknown variant {other:?} (expected full, reduced or sfq)")),
        }
    }
}

/// `(K + 1) * L_max / min weight`.
pub fn default_delta(n_servers: usize, weights: &[Rat], l_max: u64) -> Rat {
    let min_w = weights.iter().min().copied().unwrap_or_else(|| Rat::from_integer(1));
    Rat::from_integer((n_servers as i128 + 1) * l_max as i128) / min_w
}

#[derive(Debug, Clone)]
pub struct Cm4fq {
    state: SystemState,
    variant: Variant,
    record_levels: bool,
}

impl Cm4fq {
    pub fn new(
        matrix: EligibilityMatrix,
        rates: &[Rat],
        weights: &[Rat],
        delta: Rat,
        variant: Variant,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            state: SystemState::new(matrix, rates, weights, delta)?,
            variant,
            record_levels: false,
        })
    }

    /// Attach server levels before and after every dispatch.
    pub fn with_level_detail(mut self, on: bool) -> Self {
        self.record_levels = on;
        self
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    fn advance(&mut self, now: &Time) -> Result<(), SchedulerError> {
        if *now < self.state.clock {
            return Err(SchedulerError::TimeReversal {
                now: *now,
                clock: self.state.clock,
            });
        }
        self.state.clock = *now;
        Ok(())
    }

    fn min_tag(&self, k: ServerId) -> WorkLevel {
        self.state
            .matrix
            .users_of(k)
            .filter(|&j| self.state.users[j].is_backlogged())
            .map(|j| self.state.users[j].tag)
            .min()
            .map_or(Extended::Infinite, Extended::Finite)
    }

    fn activate_servers(&mut self, i: UserId) {
        let v0 = self
            .state
            .servers
            .iter()
            .filter_map(|s| s.level.finite())
            .max()
            .map_or(Rat::zero(), |v| v + self.state.delta);
        let eligible: Vec<ServerId> = self.state.matrix.servers_of(i).collect();
        for l in eligible {
            if self.state.servers[l].level.is_infinite() {
                self.state.servers[l].level = Extended::Finite(v0);
            }
        }
    }

    /// Returns the regulation shift when one was applied.
    fn update_v(&mut self, istar: UserId, k: ServerId, tag_before: Rat) -> Option<Rat> {
        let v_hat = self.state.servers[k].level;
        let eligible: Vec<ServerId> = self.state.matrix.servers_of(istar).collect();
        if self.variant == Variant::SfqBased {
            for l in eligible {
                let level = self.min_tag(l);
                if l == k && !level.is_infinite() {
                    self.state.servers[l].level = Extended::Finite(tag_before);
                } else if level.is_infinite() {
                    self.state.servers[l].level = Extended::Infinite;
                }
            }
            return None;
        }
        for l in eligible {
            self.state.servers[l].level = self.min_tag(l);
        }
        if self.variant != Variant::Full {
            return None;
        }
        let v_hat = v_hat.finite()?;
        let below = self
            .state
            .servers
            .iter()
            .filter_map(|s| s.level.finite())
            .filter(|v| *v < v_hat)
            .max()?;
        let above = self
            .state
            .servers
            .iter()
            .filter_map(|s| s.level.finite())
            .filter(|v| *v >= v_hat)
            .min()?;
        let d = above - below - self.state.delta;
        if !d.is_positive() {
            return None;
        }
        for u in self.state.users.iter_mut().filter(|u| u.tag >= v_hat) {
            u.tag -= d;
            u.bonus += d;
        }
        for s in self.state.servers.iter_mut() {
            if let Extended::Finite(v) = s.level {
                if v >= v_hat {
                    s.level = Extended::Finite(v - d);
                    s.bonus += d;
                }
            }
        }
        Some(d)
    }
}

impl Scheduler for Cm4fq {
    fn name(&self) -> &'static str {
        match self.variant {
            Variant::Full => "cm4fq",
            Variant::Reduced => "cm4fq-reduced",
            Variant::SfqBased => "cm4fq-sfq",
        }
    }

    fn matrix(&self) -> &EligibilityMatrix {
        &self.state.matrix
    }

    fn enqueue(&mut self, packet: Packet, now: &Time) -> Result<Vec<ServerId>, SchedulerError> {
        self.advance(now)?;
        let i = packet.owner;
        if i >= self.state.n_users() {
            return Err(SchedulerError::UnknownUser(i));
        }
        if !self.state.users[i].is_backlogged() {
            self.activate_servers(i);
            let top = self
                .state
                .matrix
                .servers_of(i)
                .filter_map(|k| self.state.servers[k].level.finite())
                .max()
                .unwrap_or_else(Rat::zero);
            let user = &mut self.state.users[i];
            if top > user.tag {
                user.tag = top;
            }
        }
        self.state.users[i].queue.push_back(packet);
        Ok(self
            .state
            .matrix
            .servers_of(i)
            .filter(|&k| !self.state.servers[k].is_busy())
            .collect())
    }

    fn dispatch(
        &mut self,
        k: ServerId,
        now: &Time,
        refill: &mut Refill<'_>,
    ) -> Result<Option<DispatchRecord>, SchedulerError> {
        if k >= self.state.n_servers() {
            return Err(SchedulerError::UnknownServer(k));
        }
        if self.state.servers[k].is_busy() {
            return Err(SchedulerError::Busy(k));
        }
        self.advance(now)?;
        let chosen = self
            .state
            .matrix
            .users_of(k)
            .filter(|&j| self.state.users[j].is_backlogged())
            .min_by(|&a, &b| self.state.users[a].tag.cmp(&self.state.users[b].tag).then(a.cmp(&b)));
        let Some(i) = chosen else {
            self.state.servers[k].level = Extended::Infinite;
            return Ok(None);
        };
        let levels_before = self.record_levels.then(|| self.state.levels());
        let bonuses_before = self.record_levels.then(|| self.state.server_bonuses());

        let packet = self.state.users[i].queue.pop_front().expect("backlogged user has a packet");
        if self.state.users[i].queue.is_empty() {
            if let Some(next) = refill(i, now) {
                if next.owner != i {
                    return Err(SchedulerError::WrongOwner {
                        expected: i,
                        found: next.owner,
                    });
                }
                self.state.users[i].queue.push_back(next);
            }
        }
        let user = &mut self.state.users[i];
        let before = user.tag;
        user.tag += Rat::from_integer(packet.length as i128) / user.weight;
        let after = user.tag;
        let regulation = self.update_v(i, k, before);

        let completion = *now + Rat::from_integer(packet.length as i128) / self.state.servers[k].rate;
        self.state.servers[k].in_service = Some(InService {
            packet: packet.clone(),
            completion,
        });
        let levels = match (levels_before, bonuses_before) {
            (Some(levels_before), Some(bonuses_before)) => Some(LevelDetail {
                levels_before,
                bonuses_before,
                levels_after: self.state.levels(),
                regulation,
            }),
            _ => None,
        };
        Ok(Some(DispatchRecord {
            event: 0,
            time: *now,
            server: k,
            packet,
            completion,
            tags: Some(TagChange { before, after }),
            levels,
        }))
    }

    fn complete(&mut self, k: ServerId, now: &Time) -> Result<Packet, SchedulerError> {
        if k >= self.state.n_servers() {
            return Err(SchedulerError::UnknownServer(k));
        }
        self.advance(now)?;
        self.state.servers[k]
            .in_service
            .take()
            .map(|s| s.packet)
            .ok_or(SchedulerError::Idle(k))
    }

    fn is_busy(&self, k: ServerId) -> bool {
        self.state.servers[k].is_busy()
    }

    fn queue_len(&self, i: UserId) -> usize {
        self.state.users[i].queue.len()
    }

    fn system_state(&self) -> Option<&SystemState> {
        Some(&self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::backlogged_set;
    use crate::rational::{rat, ratio};

    fn pkt(owner: UserId, length: u64, seq: u64) -> Packet {
        Packet {
            owner,
            length,
            arrival_time: rat(0),
            seq,
        }
    }

    fn no_refill() -> impl FnMut(UserId, &Time) -> Option<Packet> {
        |_, _| None
    }

    fn two_servers(variant: Variant, delta: i128) -> Cm4fq {
        let m = EligibilityMatrix::from_binary(&[[1, 1], [1, 1], [0, 1]]).unwrap();
        Cm4fq::new(m, &[rat(2_500_000), rat(1_000_000)], &[rat(1); 3], rat(delta), variant).unwrap()
    }

    #[test]
    fn delta_rule() {
        assert_eq!(default_delta(4, &[rat(1); 3], 1000), rat(5000));
        assert_eq!(default_delta(1, &[rat(1)], 1), rat(2));
        assert_eq!(default_delta(2, &[rat(4), rat(5)], 1000), rat(750));
    }

    #[test]
    fn tie_goes_to_smaller_index() {
        let mut s = Cm4fq::new(EligibilityMatrix::full(2, 1).unwrap(), &[rat(1)], &[rat(1); 2], rat(0), Variant::Full)
            .unwrap();
        s.state.users[0].tag = rat(3);
        s.state.users[1].tag = rat(3);
        s.state.users[0].queue.push_back(pkt(0, 1, 0));
        s.state.users[1].queue.push_back(pkt(1, 1, 0));
        s.state.servers[0].level = Extended::Finite(rat(3));
        let d = s.dispatch(0, &rat(0), &mut no_refill()).unwrap().unwrap();
        assert_eq!(d.user(), 0);
    }

    #[test]
    fn first_dispatches_two_servers() {
        let mut s = two_servers(Variant::Reduced, 2000);
        for i in 0..3 {
            assert_eq!(s.enqueue(pkt(i, 1000, 0), &rat(0)).unwrap().len(), if i == 2 { 1 } else { 2 });
            s.enqueue(pkt(i, 1000, 1), &rat(0)).unwrap();
        }
        assert_eq!(s.state.tags(), vec![rat(0); 3]);
        let d1 = s.dispatch(0, &rat(0), &mut no_refill()).unwrap().unwrap();
        assert_eq!(d1.user(), 0);
        assert_eq!(d1.completion, ratio(1, 2500));
        let d2 = s.dispatch(1, &rat(0), &mut no_refill()).unwrap().unwrap();
        assert_eq!(d2.user(), 1);
        assert!(s.dispatch(1, &rat(0), &mut no_refill()).is_err());
    }

    #[test]
    fn arrival_to_backlogged_user_keeps_tag() {
        let mut s = two_servers(Variant::Full, 2000);
        s.enqueue(pkt(0, 1000, 0), &rat(0)).unwrap();
        s.state.users[0].tag = rat(7);
        s.enqueue(pkt(0, 1000, 1), &rat(0)).unwrap();
        assert_eq!(s.state.users[0].tag, rat(7));
        assert_eq!(s.queue_len(0), 2);
    }

    #[test]
    fn drained_system_restarts_at_zero() {
        let mut s = two_servers(Variant::Full, 2000);
        s.enqueue(pkt(2, 1000, 0), &rat(0)).unwrap();
        s.dispatch(1, &rat(0), &mut no_refill()).unwrap().unwrap();
        assert!(s.dispatch(0, &rat(0), &mut no_refill()).unwrap().is_none());
        assert_eq!(s.state.levels(), vec![Extended::Infinite, Extended::Infinite]);
        s.complete(1, &ratio(1, 1000)).unwrap();
        s.enqueue(pkt(0, 1000, 0), &rat(1)).unwrap();
        assert_eq!(s.state.levels(), vec![Extended::zero(), Extended::zero()]);
        // the returning user's tag stays where its earlier service left it
        assert_eq!(s.state.users[2].tag, rat(1000));
        assert_eq!(s.state.users[0].tag, rat(0));
    }

    #[test]
    fn activation_lifts_idle_server_above_the_rest() {
        let mut s = two_servers(Variant::Reduced, 2000);
        s.state.servers[0].level = Extended::Infinite;
        s.state.servers[1].level = Extended::Finite(rat(9000));
        s.state.users[2].queue.push_back(pkt(2, 1000, 0));
        s.state.users[2].tag = rat(9000);
        s.enqueue(pkt(0, 1000, 0), &rat(0)).unwrap();
        assert_eq!(s.state.servers[0].level, Extended::Finite(rat(11000)));
        assert_eq!(s.state.users[0].tag, rat(11000));
    }

    #[test]
    fn regulation_shifts_tags_and_bonuses_together() {
        // one fast server shared by a and b, one slow server for c
        let m = EligibilityMatrix::from_binary(&[[1, 0], [1, 0], [0, 1]]).unwrap();
        let mut s = Cm4fq::new(m, &[rat(10), rat(1)], &[rat(1); 3], rat(2), Variant::Full)
            .unwrap()
            .with_level_detail(true);
        for i in 0..3 {
            for q in 0..5 {
                s.enqueue(pkt(i, 1, q), &rat(0)).unwrap();
            }
        }
        let mut regulated = rat(0);
        let mut t = rat(0);
        for _ in 0..8 {
            let total_before: Rat = s.state.users.iter().map(|u| u.tag + u.bonus).sum();
            let d = s.dispatch(0, &t, &mut no_refill()).unwrap().unwrap();
            let total_after: Rat = s.state.users.iter().map(|u| u.tag + u.bonus).sum();
            assert_eq!(total_after - total_before, rat(1));
            if let Some(r) = d.levels.as_ref().and_then(|l| l.regulation) {
                regulated += r;
            }
            t = d.completion;
            s.complete(0, &t).unwrap();
        }
        // server 1 never moved, so the fast side is held within delta of it
        let v: Vec<_> = s.state.levels();
        assert!(v[0].finite().unwrap() - v[1].finite().unwrap() <= rat(2));
        assert!(s.state.users[0].bonus.is_positive());
        assert!(regulated.is_positive());
        assert_eq!(backlogged_set(&s.state).len(), 3);
    }
}
