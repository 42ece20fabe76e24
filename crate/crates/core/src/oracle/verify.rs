use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::model::{EligibilityMatrix, ServerId, UserId, UserSet};
use crate::rational::{sum, Rat};

/// User x server allocation of service rate (bits per second).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RateMatrix {
    pub rates: Vec<Vec<Rat>>,
}

impl RateMatrix {
    pub fn zeros(n_users: usize, n_servers: usize) -> Self {
        Self {
            rates: vec![vec![Rat::zero(); n_servers]; n_users],
        }
    }

    pub fn get(&self, i: UserId, k: ServerId) -> Rat {
        self.rates[i][k]
    }

    pub fn set(&mut self, i: UserId, k: ServerId, r: Rat) {
        self.rates[i][k] = r;
    }

    /// Total rate of user `i`.
    pub fn user_rate(&self, i: UserId) -> Rat {
        sum(&self.rates[i])
    }

    pub fn server_load(&self, k: ServerId) -> Rat {
        sum(self.rates.iter().map(|row| &row[k]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MalformedAllocation {
    Shape,
    Negative { user: UserId, server: ServerId },
    IdleUserServed { user: UserId, server: ServerId },
    IneligiblePair { user: UserId, server: ServerId },
    ColumnSum { server: ServerId, load: Rat, capacity: Rat },
}

/// Backlogged `user` is eligible on `server`, which gives `other` a rate
/// while `other`'s normalized rate exceeds `user`'s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FairnessViolation {
    pub user: UserId,
    pub other: UserId,
    pub server: ServerId,
    pub user_normalized: Rat,
    pub other_normalized: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct FairnessReport {
    pub malformed: Vec<MalformedAllocation>,
    pub violations: Vec<FairnessViolation>,
}

impl FairnessReport {
    pub fn is_well_formed(&self) -> bool {
        self.malformed.is_empty()
    }

    pub fn is_fair(&self) -> bool {
        self.malformed.is_empty() && self.violations.is_empty()
    }
}

/// Checks a candidate allocation. Malformed candidates get no fairness
/// verdict: `violations` stays empty and `malformed` lists the problems.
pub fn verify_cm4_fairness(
    matrix: &EligibilityMatrix,
    rates: &[Rat],
    weights: &[Rat],
    backlogged: &UserSet,
    candidate: &RateMatrix,
) -> FairnessReport {
    let (n, k_count) = (matrix.n_users(), matrix.n_servers());
    let mut report = FairnessReport::default();
    if candidate.rates.len() != n
        || candidate.rates.iter().any(|row| row.len() != k_count)
        || rates.len() != k_count
        || weights.len() != n
    {
        report.malformed.push(MalformedAllocation::Shape);
        return report;
    }
    for i in 0..n {
        for k in 0..k_count {
            let r = candidate.get(i, k);
            if r.is_negative() {
                report.malformed.push(MalformedAllocation::Negative { user: i, server: k });
            } else if r.is_positive() {
                if !backlogged.contains(&i) {
                    report.malformed.push(MalformedAllocation::IdleUserServed { user: i, server: k });
                }
                if !matrix.eligible(i, k) {
                    report.malformed.push(MalformedAllocation::IneligiblePair { user: i, server: k });
                }
            }
        }
    }
    for k in 0..k_count {
        let has_demand = matrix.users_of(k).any(|i| backlogged.contains(&i));
        let load = candidate.server_load(k);
        let ok = if has_demand { load == rates[k] } else { load <= rates[k] };
        if !ok {
            report.malformed.push(MalformedAllocation::ColumnSum {
                server: k,
                load,
                capacity: rates[k],
            });
        }
    }
    if !report.malformed.is_empty() {
        return report;
    }

    let normalized: Vec<Rat> = (0..n).map(|i| candidate.user_rate(i) / weights[i]).collect();
    for &j in backlogged {
        for k in matrix.servers_of(j) {
            for i in 0..n {
                if candidate.get(i, k).is_positive() && normalized[j] < normalized[i] {
                    report.violations.push(FairnessViolation {
                        user: j,
                        other: i,
                        server: k,
                        user_normalized: normalized[j],
                        other_normalized: normalized[i],
                    });
                }
            }
        }
    }
    report
}
