//! Domain types shared by the oracle, the scheduler and the simulator.

use std::collections::{BTreeSet, VecDeque};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{Extended, Rat, WorkLevel};

pub type UserId = usize;
pub type ServerId = usize;
/// Simulation time in seconds.
pub type Time = Rat;
/// Ordered set of user ids.
pub type UserSet = BTreeSet<UserId>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("eligibility matrix must have at least one user and one server")]
    Empty,
    #[error("eligibility row {row} has {found} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("user {0} (row {0}) is not eligible for any server")]
    EmptyRow(UserId),
    #[error("server {0} (column {0}) has no eligible user")]
    EmptyColumn(ServerId),
    #[error("eligibility entry ({row}, {col}) must be 0 or 1, got {value}")]
    NotBinary { row: usize, col: usize, value: u8 },
    #[error("{what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("{what} {index} must be strictly positive")]
    NonPositive { what: &'static str, index: usize },
    #[error("{what} id {id} out of range (have {count})")]
    OutOfRange {
        what: &'static str,
        id: usize,
        count: usize,
    },
}

/// Binary user x server constraint matrix. Every row and every column
/// contains at least one eligible pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct EligibilityMatrix {
    n_users: usize,
    n_servers: usize,
    entries: Vec<bool>,
}

impl EligibilityMatrix {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self, ModelError> {
        let n_users = rows.len();
        let n_servers = rows.first().map_or(0, Vec::len);
        if n_users == 0 || n_servers == 0 {
            return Err(ModelError::Empty);
        }
        let mut entries = Vec::with_capacity(n_users * n_servers);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_servers {
                return Err(ModelError::RaggedRow {
                    row: i,
                    found: row.len(),
                    expected: n_servers,
                });
            }
            if !row.iter().any(|&e| e) {
                return Err(ModelError::EmptyRow(i));
            }
            entries.extend_from_slice(row);
        }
        for k in 0..n_servers {
            if !(0..n_users).any(|i| entries[i * n_servers + k]) {
                return Err(ModelError::EmptyColumn(k));
            }
        }
        Ok(Self {
            n_users,
            n_servers,
            entries,
        })
    }

    /// Builds from 0/1 rows.
    pub fn from_binary<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, ModelError> {
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut r = Vec::with_capacity(row.as_ref().len());
            for (k, &v) in row.as_ref().iter().enumerate() {
                match v {
                    0 => r.push(false),
                    1 => r.push(true),
                    value => return Err(ModelError::NotBinary { row: i, col: k, value }),
                }
            }
            out.push(r);
        }
        Self::new(out)
    }

    pub fn full(n_users: usize, n_servers: usize) -> Result<Self, ModelError> {
        Self::new(vec![vec![true; n_servers]; n_users])
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    #[inline]
    pub fn eligible(&self, user: UserId, server: ServerId) -> bool {
        self.entries[user * self.n_servers + server]
    }

    pub fn servers_of(&self, user: UserId) -> impl Iterator<Item = ServerId> + '_ {
        (0..self.n_servers).filter(move |&k| self.eligible(user, k))
    }

    pub fn users_of(&self, server: ServerId) -> impl Iterator<Item = UserId> + '_ {
        (0..self.n_users).filter(move |&i| self.eligible(i, server))
    }

    pub fn row(&self, user: UserId) -> &[bool] {
        &self.entries[user * self.n_servers..(user + 1) * self.n_servers]
    }

    pub fn to_binary_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n_users)
            .map(|i| self.row(i).iter().map(|&b| b as u8).collect())
            .collect()
    }

    /// Relabels users and servers: new user `u` is old user `user_perm[u]`,
    /// new server `s` is old server `server_perm[s]`.
    pub fn permuted(&self, user_perm: &[UserId], server_perm: &[ServerId]) -> Self {
        let rows = user_perm
            .iter()
            .map(|&old_i| server_perm.iter().map(|&old_k| self.eligible(old_i, old_k)).collect())
            .collect();
        Self::new(rows).expect("permutation preserves coverage")
    }
}

impl TryFrom<Vec<Vec<u8>>> for EligibilityMatrix {
    type Error = ModelError;
    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self, Self::Error> {
        Self::from_binary(&rows)
    }
}

impl From<EligibilityMatrix> for Vec<Vec<u8>> {
    fn from(m: EligibilityMatrix) -> Self {
        m.to_binary_rows()
    }
}

/// Checks that a per-user or per-server vector has the right length and
/// strictly positive entries.
pub fn validate_positive(what: &'static str, values: &[Rat], expected: usize) -> Result<(), ModelError> {
    if values.len() != expected {
        return Err(ModelError::LengthMismatch {
            what,
            found: values.len(),
            expected,
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_positive()) {
        return Err(ModelError::NonPositive { what, index });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub owner: UserId,
    /// Required work in bits.
    pub length: u64,
    pub arrival_time: Time,
    /// Per-user sequence number, increasing in arrival order.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserState {
    pub weight: Rat,
    pub queue: VecDeque<Packet>,
    /// Service tag: normalized work counted for the user so far.
    pub tag: Rat,
    /// Bonus: normalized work given to the user but removed from its tag by
    /// gap regulation.
    pub bonus: Rat,
}

impl UserState {
    pub fn new(weight: Rat) -> Self {
        Self {
            weight,
            queue: VecDeque::new(),
            tag: Rat::zero(),
            bonus: Rat::zero(),
        }
    }

    pub fn is_backlogged(&self) -> bool {
        !self.queue.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InService {
    pub packet: Packet,
    pub completion: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerState {
    /// Service rate in bits per second.
    pub rate: Rat,
    pub level: WorkLevel,
    pub bonus: Rat,
    pub in_service: Option<InService>,
}

impl ServerState {
    pub fn new(rate: Rat) -> Self {
        Self {
            rate,
            level: Extended::zero(),
            bonus: Rat::zero(),
            in_service: None,
        }
    }

    pub fn is_busy(&self) -> bool {
        self.in_service.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub clock: Time,
    pub users: Vec<UserState>,
    pub servers: Vec<ServerState>,
    pub matrix: EligibilityMatrix,
    /// Gap-regulation threshold.
    pub delta: Rat,
}

impl SystemState {
    pub fn new(matrix: EligibilityMatrix, rates: &[Rat], weights: &[Rat], delta: Rat) -> Result<Self, ModelError> {
        validate_positive("server rate", rates, matrix.n_servers())?;
        validate_positive("user weight", weights, matrix.n_users())?;
        if delta.is_negative() {
            return Err(ModelError::NonPositive { what: "delta", index: 0 });
        }
        Ok(Self {
            clock: Rat::zero(),
            users: weights.iter().map(|&w| UserState::new(w)).collect(),
            servers: rates.iter().map(|&r| ServerState::new(r)).collect(),
            matrix,
            delta,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn tags(&self) -> Vec<Rat> {
        self.users.iter().map(|u| u.tag).collect()
    }

    pub fn bonuses(&self) -> Vec<Rat> {
        self.users.iter().map(|u| u.bonus).collect()
    }

    pub fn levels(&self) -> Vec<WorkLevel> {
        self.servers.iter().map(|s| s.level).collect()
    }

    pub fn server_bonuses(&self) -> Vec<Rat> {
        self.servers.iter().map(|s| s.bonus).collect()
    }

    pub fn backlog_mask(&self) -> Vec<bool> {
        self.users.iter().map(UserState::is_backlogged).collect()
    }
}

/// Users whose queue is nonempty. A user whose only packet is in service is
/// not backlogged.
pub fn backlogged_set(state: &SystemState) -> UserSet {
    state
        .users
        .iter()
        .enumerate()
        .filter(|(_, u)| u.is_backlogged())
        .map(|(i, _)| i)
        .collect()
}

/// Backlogged users eligible for server `k`.
pub fn eligible_backlogged_set(state: &SystemState, k: ServerId) -> UserSet {
    state
        .matrix
        .users_of(k)
        .filter(|&i| state.users[i].is_backlogged())
        .collect()
}

/// Largest work level over the servers user `i` is eligible for.
pub fn respective_work_level(state: &SystemState, i: UserId) -> WorkLevel {
    state
        .matrix
        .servers_of(i)
        .map(|k| state.servers[k].level)
        .max()
        .expect("every user has an eligible server")
}
