//! Standard test scenes, shipped as JSON under `scenes/`.

use super::SceneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardScene {
    /// Two parallel walls and an end wall, static ego.
    StaticCorridor,
    /// One 4 x 2 m vehicle crossing at 5 m/s in front of a static ego.
    CrossingVehicle,
    /// Three agents between walls, ego driving north at 2 m/s.
    UrbanMix,
}

pub const STANDARD_SCENES: [(&str, &str); 3] = [
    ("static_corridor", include_str!("../../scenes/static_corridor.json")),
    ("crossing_vehicle", include_str!("../../scenes/crossing_vehicle.json")),
    ("urban_mix", include_str!("../../scenes/urban_mix.json")),
];

impl StandardScene {
    pub fn name(self) -> &'static str {
        match self {
            StandardScene::StaticCorridor => "static_corridor",
            StandardScene::CrossingVehicle => "crossing_vehicle",
            StandardScene::UrbanMix => "urban_mix",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            StandardScene::StaticCorridor,
            StandardScene::CrossingVehicle,
            StandardScene::UrbanMix,
        ]
        .into_iter()
        .find(|s| s.name() == name)
    }

    pub fn config(self) -> SceneConfig {
        standard_scene(self.name()).expect("standard scenes are valid")
    }
}

pub fn standard_scene(name: &str) -> Option<SceneConfig> {
    STANDARD_SCENES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| SceneConfig::from_json(json).expect("bundled scene parses"))
}
