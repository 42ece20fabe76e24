#![allow(dead_code)]

use cm4fq::model::{EligibilityMatrix, UserSet};
use cm4fq::rational::{rat, ratio, Rat};
use cm4fq::scheduler::Variant;
use cm4fq::sim::{Burst, LengthLaw, Scenario, SourceSpec, Window};
use rand::seq::SliceRandom;
use rand::Rng;

/// A random clustering input.
#[derive(Debug, Clone)]
pub struct Instance {
    pub matrix: EligibilityMatrix,
    pub rates: Vec<Rat>,
    pub weights: Vec<Rat>,
    pub backlogged: UserSet,
}

pub fn random_instance<R: Rng>(rng: &mut R, max_users: usize, max_servers: usize) -> Instance {
    let n = rng.random_range(1..=max_users);
    let k = rng.random_range(1..=max_servers);
    let density = rng.random_range(0.2..0.8);
    let mut rows = vec![vec![false; k]; n];
    for row in rows.iter_mut() {
        for cell in row.iter_mut() {
            *cell = rng.random_bool(density);
        }
    }
    // patch empty rows and columns
    for row in rows.iter_mut() {
        if !row.iter().any(|&b| b) {
            row[rng.random_range(0..k)] = true;
        }
    }
    for col in 0..k {
        if !rows.iter().any(|r| r[col]) {
            rows[rng.random_range(0..n)][col] = true;
        }
    }
    let rates = (0..k).map(|_| ratio(rng.random_range(1..=20), rng.random_range(1..=4))).collect();
    let weights = (0..n).map(|_| ratio(rng.random_range(1..=6), rng.random_range(1..=3))).collect();
    let backlogged = (0..n).filter(|_| rng.random_bool(0.8)).collect();
    Instance {
        matrix: EligibilityMatrix::new(rows).expect("rows and columns patched"),
        rates,
        weights,
        backlogged,
    }
}

pub fn random_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn random_lengths<R: Rng>(rng: &mut R) -> LengthLaw {
    match rng.random_range(0..3) {
        0 => LengthLaw::Fixed(rng.random_range(100..=1000)),
        1 => LengthLaw::Uniform { lo: 100, hi: 1000 },
        _ => LengthLaw::Cycle((0..rng.random_range(1..=4)).map(|_| rng.random_range(100..=1000)).collect()),
    }
}

fn random_source<R: Rng>(rng: &mut R, horizon: i128) -> SourceSpec {
    // times in milliseconds
    let ms = |v: i128| ratio(v, 1000);
    match rng.random_range(0..4) {
        0 => {
            let start = rng.random_range(0..horizon / 2);
            let stop = (rng.random_bool(0.5)).then(|| ms(rng.random_range(start + 1..=horizon)));
            SourceSpec::Backlogged {
                start: ms(start),
                stop,
                lengths: random_lengths(rng),
            }
        }
        1 => {
            let mut packets: Vec<Burst> = (0..rng.random_range(1..=4))
                .map(|_| Burst {
                    time: ms(rng.random_range(0..horizon)),
                    length: rng.random_range(100..=1000),
                    count: rng.random_range(1..=8),
                })
                .collect();
            packets.sort_by_key(|x| x.time);
            SourceSpec::Deterministic { packets }
        }
        2 => SourceSpec::Iid {
            packets_per_second: rat(rng.random_range(100..=1500)),
            lengths: random_lengths(rng),
        },
        _ => {
            let mut cuts: Vec<i128> = (0..4).map(|_| rng.random_range(0..horizon)).collect();
            cuts.sort();
            cuts.dedup();
            let windows = cuts
                .chunks(2)
                .filter(|w| w.len() == 2)
                .map(|w| Window {
                    start: ms(w[0]),
                    stop: Some(ms(w[1])),
                })
                .collect::<Vec<_>>();
            if windows.is_empty() {
                SourceSpec::Backlogged {
                    start: Rat::from_integer(0),
                    stop: None,
                    lengths: random_lengths(rng),
                }
            } else {
                SourceSpec::OnOff {
                    windows,
                    lengths: random_lengths(rng),
                }
            }
        }
    }
}

/// One server at 1 Mb/s, two to five users with mixed traffic, 200 ms.
pub fn random_single_server<R: Rng>(rng: &mut R, seed: u64) -> Scenario {
    let n = rng.random_range(2..=5);
    let horizon = 200;
    Scenario {
        name: format!("single-{seed}"),
        matrix: EligibilityMatrix::full(n, 1).unwrap(),
        rates: vec![rat(1_000_000)],
        weights: (0..n).map(|_| rat(rng.random_range(1..=3))).collect(),
        delta: None,
        max_packet_length: Some(1000),
        variant: Variant::Full,
        sources: (0..n).map(|_| vec![random_source(rng, horizon)]).collect(),
        horizon: ratio(horizon, 1000),
        seed,
        sample_period: None,
        quantum: None,
    }
}

/// Several servers with random eligibility and traffic, 100 ms.
pub fn random_multi_server<R: Rng>(rng: &mut R, seed: u64, variant: Variant) -> Scenario {
    let inst = random_instance(rng, 5, 3);
    let n = inst.matrix.n_users();
    Scenario {
        name: format!("multi-{seed}"),
        matrix: inst.matrix,
        rates: (0..inst.rates.len()).map(|_| rat(rng.random_range(1..=4) * 500_000)).collect(),
        weights: (0..n).map(|_| rat(rng.random_range(1..=3))).collect(),
        delta: None,
        max_packet_length: Some(1000),
        variant,
        sources: (0..n).map(|_| vec![random_source(rng, 100)]).collect(),
        horizon: ratio(1, 10),
        seed,
        sample_period: None,
        quantum: None,
    }
}
