//! Built-in maps: a three-map multi-room suite and a small two-room map.

use super::map::{load_map, GridMap, MapMeta};

const DESK_A: &str = include_str!("../../assets/maps/desk-a.txt");
const DESK_B: &str = include_str!("../../assets/maps/desk-b.txt");
const DESK_C: &str = include_str!("../../assets/maps/desk-c.txt");
const TWO_ROOM: &str = include_str!("../../assets/maps/two-room.txt");

/// Names accepted by [`builtin_map`].
pub const BUILTIN_MAPS: [&str; 4] = ["desk-a", "desk-b", "desk-c", "two-room"];

/// The multi-room suite: 80x64 cells of 0.125 m (10 m x 8 m) each.
pub const DESK_SUITE: [&str; 3] = ["desk-a", "desk-b", "desk-c"];

pub fn builtin_map(name: &str) -> Option<GridMap> {
    let (text, cell) = match name {
        "desk-a" => (DESK_A, 0.125),
        "desk-b" => (DESK_B, 0.125),
        "desk-c" => (DESK_C, 0.125),
        "two-room" => (TWO_ROOM, 0.25),
        _ => return None,
    };
    let meta = MapMeta { cell_size_m: cell, agent_radius_m: 0.1, name: name.to_string() };
    Some(load_map(text, &meta).expect("built-in maps parse"))
}

pub fn desk_suite() -> Vec<GridMap> {
    DESK_SUITE.iter().map(|n| builtin_map(n).expect("suite map")).collect()
}
