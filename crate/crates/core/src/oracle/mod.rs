//! Fluid-flow fairness oracle.
//!
//! For a snapshot backlogged set, [`compute_foc`] returns the unique
//! fairness-oriented clustering: users and servers partitioned into clusters
//! that share one normalized rate, sorted by strictly increasing rate. The
//! clustering is built by repeatedly extracting the bottleneck server subset
//! (smallest capacity-to-weight ratio over the users confined to it).
//!
//! [`progressive_filling`] computes the same rates by an independent route
//! (uniform water-filling with exact max-flow feasibility checks), and
//! [`verify_cm4_fairness`] checks a concrete rate matrix against the
//! pairwise max-min condition.

mod filling;
pub mod flow;
mod verify;
mod witness;

use std::collections::BTreeSet;

use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::model::{validate_positive, EligibilityMatrix, ModelError, ServerId, UserId, UserSet};
use crate::rational::{sum, Rat};

pub use filling::progressive_filling;
pub use verify::{verify_cm4_fairness, FairnessReport, FairnessViolation, MalformedAllocation, RateMatrix};
pub use witness::witness_allocation;

/// Subset enumeration is exponential in the server count.
pub const MAX_ENUMERATED_SERVERS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} servers exceed the subset-enumeration limit of {MAX_ENUMERATED_SERVERS}; use progressive filling")]
    TooManyServers(usize),
    #[error("internal oracle error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cluster {
    pub users: UserSet,
    pub servers: BTreeSet<ServerId>,
    /// Normalized service rate shared by every user of the cluster.
    pub rate: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Foc {
    /// Sorted by strictly increasing rate. A zero-rate cluster, when
    /// present, comes first and holds idle users and unused servers.
    pub clusters: Vec<Cluster>,
}

impl Foc {
    pub fn cluster_of_user(&self, user: UserId) -> Option<usize> {
        self.clusters.iter().position(|c| c.users.contains(&user))
    }

    pub fn cluster_of_server(&self, server: ServerId) -> Option<usize> {
        self.clusters.iter().position(|c| c.servers.contains(&server))
    }

    /// Normalized rate of the cluster holding `user`.
    pub fn normalized_rate(&self, user: UserId) -> Option<Rat> {
        self.cluster_of_user(user).map(|m| self.clusters[m].rate)
    }

    /// Indices of clusters with a positive rate, in increasing rate order.
    pub fn positive(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.clusters.len()).filter(move |&m| self.clusters[m].rate.is_positive())
    }

    /// Order-independent description used to compare clusterings.
    pub fn canonical(&self) -> Vec<(Rat, Vec<UserId>, Vec<ServerId>)> {
        let mut out: Vec<_> = self
            .clusters
            .iter()
            .map(|c| {
                (
                    c.rate,
                    c.users.iter().copied().collect::<Vec<_>>(),
                    c.servers.iter().copied().collect::<Vec<_>>(),
                )
            })
            .collect();
        out.sort();
        out
    }
}

fn validate_inputs(
    matrix: &EligibilityMatrix,
    rates: &[Rat],
    weights: &[Rat],
    backlogged: &UserSet,
) -> Result<(), OracleError> {
    validate_positive("server rate", rates, matrix.n_servers())?;
    validate_positive("user weight", weights, matrix.n_users())?;
    if let Some(&bad) = backlogged.iter().find(|&&i| i >= matrix.n_users()) {
        return Err(ModelError::OutOfRange {
            what: "user",
            id: bad,
            count: matrix.n_users(),
        }
        .into());
    }
    Ok(())
}

/// Computes the fairness-oriented clustering for `backlogged`.
pub fn compute_foc(
    matrix: &EligibilityMatrix,
    rates: &[Rat],
    weights: &[Rat],
    backlogged: &UserSet,
) -> Result<Foc, OracleError> {
    validate_inputs(matrix, rates, weights, backlogged)?;
    let n_servers = matrix.n_servers();
    if n_servers > MAX_ENUMERATED_SERVERS {
        return Err(OracleError::TooManyServers(n_servers));
    }

    let user_mask: Vec<u32> = (0..matrix.n_users())
        .map(|i| matrix.servers_of(i).fold(0u32, |m, k| m | (1 << k)))
        .collect();

    let mut zero_users: UserSet = (0..matrix.n_users()).filter(|i| !backlogged.contains(i)).collect();
    let mut zero_servers: BTreeSet<ServerId> = BTreeSet::new();
    let mut remaining_servers: u32 = 0;
    for k in 0..n_servers {
        if backlogged.iter().any(|&i| matrix.eligible(i, k)) {
            remaining_servers |= 1 << k;
        } else {
            zero_servers.insert(k);
        }
    }
    let mut remaining_users: Vec<UserId> = backlogged.iter().copied().collect();
    let mut clusters = Vec::new();

    while !remaining_users.is_empty() {
        let mut best: Option<Rat> = None;
        let mut union: u32 = 0;
        // walk every nonempty submask of the remaining servers
        let mut subset = remaining_servers;
        while subset != 0 {
            let confined = remaining_users
                .iter()
                .filter(|&&i| user_mask[i] & remaining_servers & !subset == 0);
            let weight = confined.fold(Rat::zero(), |acc, &i| acc + weights[i]);
            if weight.is_positive() {
                let capacity = (0..n_servers)
                    .filter(|k| subset & (1 << k) != 0)
                    .fold(Rat::zero(), |acc, k| acc + rates[k]);
                let ratio = capacity / weight;
                match best {
                    Some(b) if ratio > b => {}
                    Some(b) if ratio == b => union |= subset,
                    _ => {
                        best = Some(ratio);
                        union = subset;
                    }
                }
            }
            subset = (subset - 1) & remaining_servers;
        }
        let rate = best.ok_or_else(|| OracleError::Internal("no bottleneck among remaining users".into()))?;
        let users: UserSet = remaining_users
            .iter()
            .copied()
            .filter(|&i| user_mask[i] & remaining_servers & !union == 0)
            .collect();
        let servers: BTreeSet<ServerId> = (0..n_servers).filter(|k| union & (1 << k) != 0).collect();
        remaining_users.retain(|i| !users.contains(i));
        remaining_servers &= !union;
        clusters.push(Cluster { users, servers, rate });
    }
    // servers that lost all their remaining users cannot occur for a valid
    // extraction, but they would belong with the idle servers
    for k in 0..n_servers {
        if remaining_servers & (1 << k) != 0 {
            zero_servers.insert(k);
        }
    }

    if !zero_users.is_empty() || !zero_servers.is_empty() {
        clusters.insert(
            0,
            Cluster {
                users: std::mem::take(&mut zero_users),
                servers: zero_servers,
                rate: Rat::zero(),
            },
        );
    }
    Ok(Foc { clusters })
}

/// Per-user fair rates (bits per second).
pub fn fair_rates(foc: &Foc, weights: &[Rat]) -> Vec<Rat> {
    let mut out = vec![Rat::zero(); weights.len()];
    for c in &foc.clusters {
        for &i in &c.users {
            out[i] = weights[i] * c.rate;
        }
    }
    out
}

/// Checks the structural invariants every clustering must satisfy and
/// returns a description of each violation.
pub fn check_foc_invariants(
    foc: &Foc,
    matrix: &EligibilityMatrix,
    rates: &[Rat],
    weights: &[Rat],
    backlogged: &UserSet,
) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen_users = vec![0usize; matrix.n_users()];
    let mut seen_servers = vec![0usize; matrix.n_servers()];
    for c in &foc.clusters {
        c.users.iter().for_each(|&i| seen_users[i] += 1);
        c.servers.iter().for_each(|&k| seen_servers[k] += 1);
    }
    for (i, &n) in seen_users.iter().enumerate() {
        if n != 1 {
            problems.push(format!("user {i} appears in {n} clusters"));
        }
    }
    for (k, &n) in seen_servers.iter().enumerate() {
        if n != 1 {
            problems.push(format!("server {k} appears in {n} clusters"));
        }
    }
    for pair in foc.clusters.windows(2) {
        if pair[0].rate >= pair[1].rate {
            problems.push(format!("rates not strictly increasing: {} then {}", pair[0].rate, pair[1].rate));
        }
    }
    for (m, c) in foc.clusters.iter().enumerate() {
        if c.rate.is_positive() {
            if c.users.is_empty() || c.servers.is_empty() {
                problems.push(format!("positive cluster {m} has an empty side"));
                continue;
            }
            if c.users.iter().any(|i| !backlogged.contains(i)) {
                problems.push(format!("positive cluster {m} holds an idle user"));
            }
            let capacity = sum(c.servers.iter().map(|&k| &rates[k]));
            let weight = sum(c.users.iter().map(|&i| &weights[i]));
            if capacity != c.rate * weight {
                problems.push(format!("cluster {m}: capacity {capacity} != rate {} x weight {weight}", c.rate));
            }
        } else if c.users.iter().any(|i| backlogged.contains(i)) {
            problems.push(format!("zero-rate cluster {m} holds a backlogged user"));
        }
        // a backlogged user eligible on a server of another cluster must
        // sit in a faster cluster than that server
        for &j in c.users.iter().filter(|j| backlogged.contains(j)) {
            for k in matrix.servers_of(j) {
                if let Some(l) = foc.cluster_of_server(k) {
                    if l != m && foc.clusters[m].rate <= foc.clusters[l].rate {
                        problems.push(format!(
                            "user {j} in cluster {m} is eligible on server {k} of cluster {l} with rate not below its own"
                        ));
                    }
                }
            }
        }
    }
    problems
}
