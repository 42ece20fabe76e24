//! Scenario files compiled into the binary, usable as `builtin:<name>`.

pub const BUNDLED: &[(&str, &str)] = &[
    ("two_servers", include_str!("../../scenarios/two_servers.json")),
    ("three_servers", include_str!("../../scenarios/three_servers.json")),
    ("batch_then_rejoin", include_str!("../../scenarios/batch_then_rejoin.json")),
    ("late_joiner_fluid", include_str!("../../scenarios/late_joiner_fluid.json")),
    ("merge_unregulated", include_str!("../../scenarios/merge_unregulated.json")),
    ("merge_regulated", include_str!("../../scenarios/merge_regulated.json")),
    ("fast_slow_pair", include_str!("../../scenarios/fast_slow_pair.json")),
    ("fast_slow_pair_sfq", include_str!("../../scenarios/fast_slow_pair_sfq.json")),
    ("ten_users_backlogged", include_str!("../../scenarios/ten_users_backlogged.json")),
    ("ten_users_late_joiner", include_str!("../../scenarios/ten_users_late_joiner.json")),
    ("mixed_lengths_pair", include_str!("../../scenarios/mixed_lengths_pair.json")),
];

pub fn get(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::ScenarioFile;

    #[test]
    fn every_bundled_file_loads() {
        for (name, text) in BUNDLED {
            let f = ScenarioFile::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&f.name, name);
            f.to_scenario().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
