//! Scenario files shipped inside the binary.

pub const SCENARIOS: [(&str, &str); 7] = [
    ("square_shift.scn", include_str!("../scenarios/square_shift.scn")),
    ("square_rotation.scn", include_str!("../scenarios/square_rotation.scn")),
    ("line_bend.scn", include_str!("../scenarios/line_bend.scn")),
    ("polyakov.scn", include_str!("../scenarios/polyakov.scn")),
    ("hooke_bar.scn", include_str!("../scenarios/hooke_bar.scn")),
    ("rotation_killing.scn", include_str!("../scenarios/rotation_killing.scn")),
    ("symplectic_demo.scn", include_str!("../scenarios/symplectic_demo.scn")),
];

pub fn get(name: &str) -> Option<&'static str> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name || n.trim_end_matches(".scn") == name)
        .map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ScenarioFile;

    #[test]
    fn every_bundled_scenario_round_trips() {
        for (name, text) in SCENARIOS {
            let a = ScenarioFile::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let b = ScenarioFile::parse(&a.to_toml().unwrap()).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn rotation_fixture_is_about_the_origin() {
        let s = ScenarioFile::parse(get("square_rotation").unwrap()).unwrap();
        assert_eq!(s.classify.unwrap().map.unwrap().center, Some([0.0, 0.0]));
    }
}
