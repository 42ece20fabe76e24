//! JSON scenario format used by the command-line tool.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::model::{EligibilityMatrix, ModelError, UserSet};
use crate::rational::{one, serde_rat, Rat};
use crate::scheduler::Variant;
use crate::sim::{fluid_approx, Scenario, SourceSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub id: String,
    #[serde(with = "serde_rat", default = "one")]
    pub weight: Rat,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub id: String,
    /// Bits per second.
    #[serde(with = "serde_rat")]
    pub rate: Rat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    SteadyState,
    WorstCase,
    IsolatedCluster,
    TagWorkIdentity,
    Separation,
    TagFloor,
    LevelGap,
    SingleServer,
}

impl Check {
    /// Checks that read per-dispatch level detail.
    pub fn needs_levels(&self) -> bool {
        matches!(self, Check::IsolatedCluster | Check::Separation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(with = "serde_rat")]
    pub start: Rat,
    #[serde(with = "serde_rat")]
    pub end: Rat,
}

/// Either 0/1 rows in user order or, per user id, the ids of its servers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eligibility {
    Rows(Vec<Vec<u8>>),
    Lists(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub users: Vec<UserSpec>,
    pub servers: Vec<ServerSpec>,
    pub eligibility: Eligibility,
    #[serde(default)]
    pub variant: Variant,
    #[serde(with = "serde_rat::option", default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Rat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_packet_length: Option<u64>,
    #[serde(with = "serde_rat")]
    pub horizon: Rat,
    #[serde(default)]
    pub seed: u64,
    #[serde(with = "serde_rat::option", default, skip_serializing_if = "Option::is_none")]
    pub sample_period: Option<Rat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum: Option<u64>,
    /// Replace packet lengths by this value (with δ and quantum scaled to
    /// match) to approximate fluid traffic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid_packet_length: Option<u64>,
    /// Default backlogged set for the `oracle` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backlogged: Option<Vec<String>>,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(with = "serde_rat::option", default, skip_serializing_if = "Option::is_none")]
    pub gap_bound: Option<Rat>,
    /// Windows for the worst-case and separation checks; the whole run when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowSpec>,
}

fn index_of(ids: &[String], what: &str) -> Result<BTreeMap<String, usize>, CliError> {
    let mut map = BTreeMap::new();
    for (n, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), n).is_some() {
            return Err(CliError::Config(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(map)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("scenario: {e}")))
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.users.iter().map(|u| u.id.clone()).collect()
    }

    pub fn server_ids(&self) -> Vec<String> {
        self.servers.iter().map(|s| s.id.clone()).collect()
    }

    pub fn matrix(&self) -> Result<EligibilityMatrix, CliError> {
        let user_ids = self.user_ids();
        let server_ids = self.server_ids();
        let users = index_of(&user_ids, "user")?;
        let servers = index_of(&server_ids, "server")?;
        let built = match &self.eligibility {
            Eligibility::Rows(rows) => {
                if rows.len() != users.len() {
                    return Err(CliError::Config(format!(
                        "eligibility has {} rows for {} users",
                        rows.len(),
                        users.len()
                    )));
                }
                EligibilityMatrix::from_binary(rows)
            }
            Eligibility::Lists(lists) => {
                let mut rows = vec![vec![false; servers.len()]; users.len()];
                for (u, list) in lists {
                    let i = *users
                        .get(u)
                        .ok_or_else(|| CliError::Config(format!("eligibility names unknown user {u:?}")))?;
                    for s in list {
                        let k = *servers
                            .get(s)
                            .ok_or_else(|| CliError::Config(format!("eligibility names unknown server {s:?}")))?;
                        rows[i][k] = true;
                    }
                }
                EligibilityMatrix::new(rows)
            }
        };
        built.map_err(|e| match e {
            ModelError::EmptyRow(i) => {
                CliError::Config(format!("eligibility row {i} (user {:?}) has no eligible server", user_ids[i]))
            }
            ModelError::EmptyColumn(k) => {
                CliError::Config(format!("server {:?} (column {k}) has no eligible user", server_ids[k]))
            }
            other => CliError::Config(other.to_string()),
        })
    }

    /// Resolves user ids to indices.
    pub fn user_set(&self, ids: &[String]) -> Result<UserSet, CliError> {
        let users = index_of(&self.user_ids(), "user")?;
        ids.iter()
            .map(|id| {
                users
                    .get(id)
                    .copied()
                    .ok_or_else(|| CliError::Config(format!("unknown user {id:?}")))
            })
            .collect::<Result<BTreeSet<_>, _>>()
    }

    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let scenario = Scenario {
            name: self.name.clone(),
            matrix: self.matrix()?,
            rates: self.servers.iter().map(|s| s.rate).collect(),
            weights: self.users.iter().map(|u| u.weight).collect(),
            delta: self.delta,
            max_packet_length: self.max_packet_length,
            variant: self.variant,
            sources: self.users.iter().map(|u| u.sources.clone()).collect(),
            horizon: self.horizon,
            seed: self.seed,
            sample_period: self.sample_period,
            quantum: self.quantum,
        };
        scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
        match self.fluid_packet_length {
            Some(eps) => fluid_approx(&scenario, eps).map_err(|e| CliError::Config(e.to_string())),
            None => Ok(scenario),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "two",
        "users": [{"id": "a", "sources": [{"kind": "backlogged", "lengths": {"fixed": 100}}]},
                  {"id": "b", "weight": "2", "sources": []}],
        "servers": [{"id": "s", "rate": "1e3"}],
        "eligibility": {"a": ["s"], "b": ["s"]},
        "horizon": "1.5"
    }"#;

    #[test]
    fn parses_minimal_file() {
        let f = ScenarioFile::parse(MINIMAL).unwrap();
        let s = f.to_scenario().unwrap();
        assert_eq!(s.weights, vec![Rat::from_integer(1), Rat::from_integer(2)]);
        assert_eq!(s.rates, vec![Rat::from_integer(1000)]);
        assert_eq!(s.horizon, Rat::new(3, 2));
        assert_eq!(s.variant, Variant::Full);
    }

    #[test]
    fn rejects_unknown_fields_and_ids() {
        let bad = MINIMAL.replace("\"horizon\"", "\"horizn\"");
        assert!(ScenarioFile::parse(&bad).is_err());
        let bad = MINIMAL.replace("\"b\": [\"s\"]", "\"b\": [\"t\"]");
        assert!(matches!(ScenarioFile::parse(&bad).unwrap().to_scenario(), Err(CliError::Config(_))));
    }

    #[test]
    fn zero_row_names_the_row() {
        let rows = MINIMAL.replace(r#"{"a": ["s"], "b": ["s"]}"#, "[[1], [0]]");
        let err = ScenarioFile::parse(&rows).unwrap().to_scenario().unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        assert!(err.to_string().contains("\"b\""), "{err}");
    }

    #[test]
    fn serialization_round_trips() {
        let f = ScenarioFile::parse(MINIMAL).unwrap();
        let again = ScenarioFile::parse(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(f, again);
        assert_eq!(serde_json::to_string(&f).unwrap(), serde_json::to_string(&again).unwrap());
    }
}
