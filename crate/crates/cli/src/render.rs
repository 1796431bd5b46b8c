//! `render`: one logged episode drawn over its map as SVG.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use navlab_core::env::GridMap;
use navlab_core::hier::PlanToken;

use crate::config::{hash_json, load_map_ref};
use crate::tlog::{read_log, split_episodes, LoggedEpisode};
use crate::{Classify, CmdResult, Failure};

/// Pixels per metre.
const SCALE: f64 = 80.0;

fn token_color(t: PlanToken) -> &'static str {
    match t {
        PlanToken::GoToWaypoint => "#1f77b4",
        PlanToken::ExitRoom => "#ff7f0e",
        PlanToken::FollowCorridor => "#2ca02c",
        PlanToken::ApproachGoal => "#9467bd",
        PlanToken::Explore => "#7f7f7f",
        PlanToken::StopNearGoal => "#d62728",
    }
}

pub fn cmd_render(log: &Path, map_ref: &str, episode: Option<&str>, out: &Path) -> CmdResult {
    let map = load_map_ref(map_ref).input()?;
    let f = File::open(log).with_context(|| format!("opening {}", log.display())).input()?;
    let recs = read_log(BufReader::new(f)).input()?;
    // an empty log renders the bare map
    let (revisit_res, chosen) = if recs.is_empty() {
        (None, None)
    } else {
        let (header, eps) = split_episodes(&recs).input()?;
        let chosen = match episode {
            Some(id) => Some(
                eps.into_iter()
                    .find(|e| e.start.episode_id == id)
                    .ok_or_else(|| Failure::Input(anyhow::anyhow!("episode {id} not in log")))?,
            ),
            None => eps.into_iter().find(|e| e.start.map == map.name()),
        };
        (Some(header.reward.revisit_radius), chosen)
    };
    if let Some(ep) = &chosen {
        if ep.start.map != map.name() {
            return Err(Failure::Input(anyhow::anyhow!(
                "episode {} was recorded on {}, not {}",
                ep.start.episode_id,
                ep.start.map,
                map.name()
            )));
        }
    }
    let hash = hash_json(&(log, map_ref, episode));
    let svg = render_svg(&map, chosen.as_ref().zip(revisit_res), &hash);
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display())).runtime()?;
    Ok(())
}

fn render_svg(map: &GridMap, ep: Option<(&LoggedEpisode, f64)>, hash: &str) -> String {
    let (w, h) = (map.width_m() * SCALE, map.height_m() * SCALE);
    let cs = map.cell_size() * SCALE;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, "<!-- config_hash: {hash} -->");
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(
        s,
        r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" stroke="#e377c2" stroke-width="2"/></pattern></defs>"##
    );
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<g id="obstacles" fill="#333333">"##);
    for c in map.raw_obstacles() {
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{cs}" height="{cs}"/>"#, c.col as f64 * cs, c.row as f64 * cs);
    }
    let _ = writeln!(s, "</g>");

    if let Some((ep, res)) = ep {
        let _ = writeln!(s, "<title>{}</title>", ep.start.episode_id);
        let mut seen = std::collections::BTreeSet::new();
        let _ = writeln!(s, r#"<g id="revisits" fill="url(#hatch)" opacity="0.8">"#);
        for st in ep.steps.iter().filter(|st| st.revisit) {
            let [vx, vy, _] = st.voxel_key;
            if seen.insert((vx, vy)) {
                let side = res * SCALE;
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{side}" height="{side}"/>"#,
                    vx as f64 * side,
                    vy as f64 * side
                );
            }
        }
        let _ = writeln!(s, "</g>");

        // one polyline per issued plan, coloured by its token
        let _ = writeln!(s, r#"<g id="path" fill="none" stroke-width="3" stroke-linecap="round">"#);
        let mut prev = (ep.start.start.x, ep.start.start.y);
        let mut i = 0;
        while i < ep.steps.len() {
            let key = (ep.steps[i].plan_token, ep.steps[i].plan_step);
            let mut pts = vec![prev];
            while i < ep.steps.len() && (ep.steps[i].plan_token, ep.steps[i].plan_step) == key {
                prev = (ep.steps[i].x, ep.steps[i].y);
                pts.push(prev);
                i += 1;
            }
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{:.1},{:.1}", x * SCALE, y * SCALE)).collect();
            let _ = writeln!(s, r#"<polyline stroke="{}" points="{}"/>"#, token_color(key.0), coords.join(" "));
        }
        let _ = writeln!(s, "</g>");
        let (sx, sy) = (ep.start.start.x * SCALE, ep.start.start.y * SCALE);
        let (gx, gy) = (ep.start.goal.x * SCALE, ep.start.goal.y * SCALE);
        let _ = writeln!(s, r##"<circle id="start" cx="{sx}" cy="{sy}" r="7" fill="#2ca02c" stroke="#000"/>"##);
        let _ = writeln!(s, r##"<circle id="goal" cx="{gx}" cy="{gy}" r="7" fill="#d62728" stroke="#000"/>"##);
    }
    let _ = writeln!(s, "</svg>");
    s
}
