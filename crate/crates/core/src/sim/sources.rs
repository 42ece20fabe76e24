//! Per-user traffic generators.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::model::Time;
use crate::rational::{serde_rat, Rat};

/// Packet length distribution, in bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthLaw {
    Fixed(u64),
    /// Integer lengths drawn uniformly from `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
    /// Repeats the listed lengths in order.
    Cycle(Vec<u64>),
}

impl LengthLaw {
    pub fn max(&self) -> u64 {
        match self {
            LengthLaw::Fixed(l) => *l,
            LengthLaw::Uniform { hi, .. } => *hi,
            LengthLaw::Cycle(ls) => ls.iter().copied().max().unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            LengthLaw::Fixed(0) => Err("fixed length must be positive".into()),
            LengthLaw::Uniform { lo, hi } if *lo == 0 || lo > hi => {
                Err(format!("uniform lengths need 0 < lo <= hi, got [{lo}, {hi}]"))
            }
            LengthLaw::Cycle(ls) if ls.is_empty() || ls.contains(&0) => {
                Err("cycle lengths must be a nonempty list of positive values".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Burst {
    #[serde(with = "serde_rat")]
    pub time: Rat,
    pub length: u64,
    #[serde(default = "one_packet")]
    pub count: u64,
}

fn one_packet() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    #[serde(with = "serde_rat")]
    pub start: Rat,
    #[serde(with = "serde_rat::option", default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Rat>,
}

impl Window {
    fn contains(&self, t: &Time) -> bool {
        *t >= self.start && self.stop.is_none_or(|s| *t < s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Keeps the user's queue nonempty from `start` until `stop`.
    Backlogged {
        #[serde(with = "serde_rat", default = "zero")]
        start: Rat,
        #[serde(with = "serde_rat::option", default, skip_serializing_if = "Option::is_none")]
        stop: Option<Rat>,
        lengths: LengthLaw,
    },
    /// Explicit arrivals.
    Deterministic { packets: Vec<Burst> },
    /// Poisson arrivals; interarrival times are rounded to whole microseconds.
    Iid {
        #[serde(with = "serde_rat")]
        packets_per_second: Rat,
        lengths: LengthLaw,
    },
    /// Backlogged during each window, idle in between.
    OnOff { windows: Vec<Window>, lengths: LengthLaw },
}

fn zero() -> Rat {
    Rat::from_integer(0)
}

impl SourceSpec {
    pub fn max_length(&self) -> u64 {
        match self {
            SourceSpec::Backlogged { lengths, .. } | SourceSpec::Iid { lengths, .. } | SourceSpec::OnOff { lengths, .. } => {
                lengths.max()
            }
            SourceSpec::Deterministic { packets } => packets.iter().map(|b| b.length).max().unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let negative = |t: &Rat| *t < zero();
        match self {
            SourceSpec::Backlogged { start, stop, lengths } => {
                lengths.validate()?;
                if negative(start) || stop.is_some_and(|s| s <= *start) {
                    return Err("backlogged source needs 0 <= start < stop".into());
                }
            }
            SourceSpec::Deterministic { packets } => {
                if let Some(b) = packets.iter().find(|b| b.length == 0 || negative(&b.time)) {
                    return Err(format!("invalid packet at time {}: length must be positive, time non-negative", b.time));
                }
            }
            SourceSpec::Iid {
                packets_per_second,
                lengths,
            } => {
                lengths.validate()?;
                if *packets_per_second <= zero() {
                    return Err("packets_per_second must be positive".into());
                }
            }
            SourceSpec::OnOff { windows, lengths } => {
                lengths.validate()?;
                let mut last: Option<Rat> = None;
                for w in windows {
                    let Some(stop) = w.stop else {
                        return Err("on/off windows need an explicit stop".into());
                    };
                    if negative(&w.start) || stop <= w.start || last.is_some_and(|l| w.start < l) {
                        return Err("on/off windows must be ordered, disjoint and non-empty".into());
                    }
                    last = Some(stop);
                }
            }
        }
        Ok(())
    }

    /// Same source with every length replaced by `eps`. Fixed-length bursts
    /// keep their total work.
    pub fn with_packet_length(&self, eps: u64) -> SourceSpec {
        let law = LengthLaw::Fixed(eps);
        match self {
            SourceSpec::Backlogged { start, stop, .. } => SourceSpec::Backlogged {
                start: *start,
                stop: *stop,
                lengths: law,
            },
            SourceSpec::Deterministic { packets } => SourceSpec::Deterministic {
                packets: packets
                    .iter()
                    .map(|b| Burst {
                        time: b.time,
                        length: eps,
                        count: b.count * b.length.div_ceil(eps),
                    })
                    .collect(),
            },
            SourceSpec::Iid {
                packets_per_second,
                lengths,
            } => {
                let scale = Rat::from_integer(lengths.max() as i128) / Rat::from_integer(eps as i128);
                SourceSpec::Iid {
                    packets_per_second: *packets_per_second * scale,
                    lengths: law,
                }
            }
            SourceSpec::OnOff { windows, .. } => SourceSpec::OnOff {
                windows: windows.clone(),
                lengths: law,
            },
        }
    }
}

struct LengthGen {
    law: LengthLaw,
    next_in_cycle: usize,
}

impl LengthGen {
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> u64 {
        match &self.law {
            LengthLaw::Fixed(l) => *l,
            LengthLaw::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            LengthLaw::Cycle(ls) => {
                let l = ls[self.next_in_cycle % ls.len()];
                self.next_in_cycle += 1;
                l
            }
        }
    }
}

enum Pattern {
    Windows(Vec<Window>, usize),
    Fixed(VecDeque<(Rat, u64)>),
    Poisson { exp: Exp<f64>, next: Rat },
}

/// Running state of one source.
pub(crate) struct SourceState {
    pattern: Pattern,
    lengths: Option<LengthGen>,
    rng: ChaCha8Rng,
}

const MICROS: i128 = 1_000_000;

impl SourceState {
    pub(crate) fn new(spec: &SourceSpec, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let gen = |law: &LengthLaw| {
            Some(LengthGen {
                law: law.clone(),
                next_in_cycle: 0,
            })
        };
        let (pattern, lengths) = match spec {
            SourceSpec::Backlogged { start, stop, lengths } => (
                Pattern::Windows(vec![Window { start: *start, stop: *stop }], 0),
                gen(lengths),
            ),
            SourceSpec::OnOff { windows, lengths } => (Pattern::Windows(windows.clone(), 0), gen(lengths)),
            SourceSpec::Deterministic { packets } => {
                let mut list: Vec<(Rat, u64)> = packets
                    .iter()
                    .flat_map(|b| std::iter::repeat_n((b.time, b.length), b.count as usize))
                    .collect();
                list.sort_by_key(|a| a.0);
                (Pattern::Fixed(list.into()), None)
            }
            SourceSpec::Iid {
                packets_per_second,
                lengths,
            } => {
                let lambda = crate::rational::to_f64(packets_per_second);
                let exp = Exp::new(lambda).expect("validated positive rate");
                let mut state = (Pattern::Poisson { exp, next: zero() }, gen(lengths));
                if let Pattern::Poisson { exp, next } = &mut state.0 {
                    *next = Self::gap(exp, &mut rng);
                }
                state
            }
        };
        Self { pattern, lengths, rng }
    }

    fn gap(exp: &Exp<f64>, rng: &mut ChaCha8Rng) -> Rat {
        let micros = (exp.sample(rng) * MICROS as f64).round().max(1.0) as i128;
        Rat::new(micros, MICROS)
    }

    /// Time and length of the next arrival, advancing the source.
    pub(crate) fn next_arrival(&mut self) -> Option<(Rat, u64)> {
        match &mut self.pattern {
            Pattern::Fixed(list) => list.pop_front(),
            Pattern::Windows(ws, idx) => {
                let w = ws.get(*idx)?.clone();
                *idx += 1;
                let len = self.lengths.as_mut().expect("window sources have a law").draw(&mut self.rng);
                Some((w.start, len))
            }
            Pattern::Poisson { exp, next } => {
                let t = *next;
                *next = t + Self::gap(exp, &mut self.rng);
                let len = self.lengths.as_mut().expect("poisson sources have a law").draw(&mut self.rng);
                Some((t, len))
            }
        }
    }

    /// A replacement packet length if this source keeps the user backlogged
    /// at `now`.
    pub(crate) fn refill(&mut self, now: &Time) -> Option<u64> {
        let Pattern::Windows(ws, _) = &self.pattern else {
            return None;
        };
        if !ws.iter().any(|w| w.contains(now)) {
            return None;
        }
        Some(self.lengths.as_mut()?.draw(&mut self.rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    #[test]
    fn backlogged_refills_only_inside_window() {
        let spec = SourceSpec::Backlogged {
            start: rat(1),
            stop: Some(rat(2)),
            lengths: LengthLaw::Fixed(10),
        };
        let mut s = SourceState::new(&spec, 0, 0);
        assert_eq!(s.next_arrival(), Some((rat(1), 10)));
        assert_eq!(s.next_arrival(), None);
        assert_eq!(s.refill(&ratio(3, 2)), Some(10));
        assert_eq!(s.refill(&rat(2)), None);
        assert_eq!(s.refill(&ratio(1, 2)), None);
    }

    #[test]
    fn uniform_lengths_stay_in_range_and_replay() {
        let spec = SourceSpec::Backlogged {
            start: rat(0),
            stop: None,
            lengths: LengthLaw::Uniform { lo: 800, hi: 1000 },
        };
        let draw = |seed| {
            let mut s = SourceState::new(&spec, seed, 3);
            (0..200).map(|_| s.refill(&rat(5)).unwrap()).collect::<Vec<_>>()
        };
        let a = draw(7);
        assert!(a.iter().all(|l| (800..=1000).contains(l)));
        assert_eq!(a, draw(7));
        assert_ne!(a, draw(8));
    }

    #[test]
    fn cycle_law_repeats() {
        let spec = SourceSpec::OnOff {
            windows: vec![Window {
                start: rat(0),
                stop: Some(rat(1)),
            }],
            lengths: LengthLaw::Cycle(vec![750, 1000, 250]),
        };
        let mut s = SourceState::new(&spec, 0, 0);
        let got: Vec<_> = std::iter::once(s.next_arrival().unwrap().1)
            .chain((0..5).map(|_| s.refill(&rat(0)).unwrap()))
            .collect();
        assert_eq!(got, vec![750, 1000, 250, 750, 1000, 250]);
    }

    #[test]
    fn poisson_times_increase() {
        let spec = SourceSpec::Iid {
            packets_per_second: rat(1000),
            lengths: LengthLaw::Fixed(100),
        };
        let mut s = SourceState::new(&spec, 1, 0);
        let times: Vec<_> = (0..100).map(|_| s.next_arrival().unwrap().0).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert!(times[99] > rat(0) && times[99] < rat(1));
    }

    #[test]
    fn fluid_rewrite_keeps_burst_work() {
        let spec = SourceSpec::Deterministic {
            packets: vec![Burst {
                time: rat(0),
                length: 1000,
                count: 13,
            }],
        };
        match spec.with_packet_length(10) {
            SourceSpec::Deterministic { packets } => {
                assert_eq!(packets[0].count, 1300);
                assert_eq!(packets[0].length, 10);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn json_shape() {
        let s: SourceSpec =
            serde_json::from_str(r#"{"kind":"backlogged","start":"0.02","lengths":{"uniform":{"lo":800,"hi":1000}}}"#)
                .unwrap();
        assert_eq!(
            s,
            SourceSpec::Backlogged {
                start: ratio(1, 50),
                stop: None,
                lengths: LengthLaw::Uniform { lo: 800, hi: 1000 }
            }
        );
        assert!(serde_json::from_str::<SourceSpec>(r#"{"kind":"backlogged","lengths":{"fixed":1},"extra":1}"#).is_err());
    }
}
