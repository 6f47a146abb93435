//! Session server: live episodes over a websocket, one JSON message per
//! text frame. See `docs/wire-protocol.md` for the message schema.

mod server;

use langcost_core::controller::Status;
use langcost_core::costmap::CostStack;
use langcost_core::{CorrectionKind, Grid, ObjectInstance, Vec2};
use serde::{Deserialize, Serialize};

pub use server::{router, serve, ServerState};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Ticks per second; one SessionState is pushed per tick.
    pub rate_hz: f64,
    /// How long a session without a client is kept for resumption, seconds.
    pub resume_secs: f64,
    /// Side of the downsampled cost frame, cells.
    pub frame_size: usize,
    /// Positions included in each SessionState's trail.
    pub trail: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { rate_hz: 10.0, resume_secs: 60.0, frame_size: 64, trail: 50 }
    }
}

/// Static description of a session's scene, sent with the first state and
/// after every reset or resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub env_id: u32,
    pub world_width: u32,
    pub world_height: u32,
    pub robot_radius: f64,
    pub objects: Vec<ObjectInstance>,
    pub start: Vec2,
    pub goal: Vec2,
    pub rate_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WireMessage {
    /// Sent by the server on connect. A client may send it with `resume`
    /// set to reattach to a paused session.
    Hello {
        protocol: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resume: Option<String>,
    },
    /// Starts a session on environment `env_id` of the corpus with seed
    /// `corpus_seed` (the server's configured seed when absent). Without a
    /// start and goal the environment's first generated task is used.
    CreateSession {
        env_id: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corpus_seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<Vec2>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal: Option<Vec2>,
        #[serde(default)]
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<u32>,
    },
    SessionState {
        session_id: String,
        tick: u32,
        q: Vec2,
        qd: Vec2,
        status: Status,
        /// Most recent positions, oldest first, ending at `q`.
        trail: Vec<Vec2>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scene: Option<Scene>,
    },
    SubmitCorrection {
        session_id: String,
        text: String,
    },
    /// The correction was accepted at `tick` and takes effect at the next
    /// tick boundary.
    CorrectionAck {
        session_id: String,
        tick: u32,
        correction: CorrectionKind,
        text: String,
    },
    CorrectionError {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
    },
    /// Downsampled composed language cost (mean per block, saturated to
    /// 0..=255) and active mask (1 where any block cell is masked in),
    /// row-major.
    CostMapFrame {
        session_id: String,
        tick: u32,
        stack_version: u64,
        width: usize,
        height: usize,
        cost: Vec<u8>,
        mask: Vec<u8>,
        constraints: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        language_goal: Option<Vec2>,
    },
    EpisodeEnd {
        session_id: String,
        tick: u32,
        status: Status,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distance: Option<f64>,
    },
    Reset {
        session_id: String,
    },
}

pub fn encode(msg: &WireMessage) -> String {
    serde_json::to_string(msg).expect("wire messages always serialize")
}

pub fn decode(text: &str) -> Result<WireMessage, serde_json::Error> {
    serde_json::from_str(text)
}

/// Block-mean downsampling to `size`×`size`, saturated to bytes.
pub fn downsample_cost(grid: &Grid<f64>, size: usize) -> Vec<u8> {
    downsample(grid, size, |cells: &mut dyn Iterator<Item = &f64>| {
        let (sum, n) = cells.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (sum / n.max(1) as f64).round().clamp(0.0, 255.0) as u8
    })
}

/// Block-any downsampling of a mask to `size`×`size`.
pub fn downsample_mask(grid: &Grid<bool>, size: usize) -> Vec<u8> {
    downsample(grid, size, |cells: &mut dyn Iterator<Item = &bool>| {
        let mut any = false;
        for &m in cells {
            any |= m;
        }
        any as u8
    })
}

fn downsample<T>(grid: &Grid<T>, size: usize, reduce: impl Fn(&mut dyn Iterator<Item = &T>) -> u8) -> Vec<u8> {
    let (w, h) = (grid.width(), grid.height());
    let mut out = Vec::with_capacity(size * size);
    for by in 0..size {
        let (y0, y1) = (by * h / size, ((by + 1) * h / size).max(by * h / size + 1).min(h));
        for bx in 0..size {
            let (x0, x1) = (bx * w / size, ((bx + 1) * w / size).max(bx * w / size + 1).min(w));
            let mut cells = (y0..y1).flat_map(|y| grid.as_slice()[y * w + x0..y * w + x1].iter());
            out.push(reduce(&mut cells));
        }
    }
    out
}

/// Active mask of a stack: the language goal's tube, or all ones when only
/// constraints are in force, or all zeros when there is no language term.
pub fn active_mask(stack: &CostStack, width: usize, height: usize) -> Grid<bool> {
    match stack.language_goal() {
        Some(goal) => goal.mask.grid().clone(),
        None => Grid::filled(width, height, !stack.constraints().is_empty()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> Vec<WireMessage> {
        let s = || "s1".to_string();
        vec![
            WireMessage::Hello { protocol: PROTOCOL_VERSION, resume: None },
            WireMessage::Hello { protocol: PROTOCOL_VERSION, resume: Some(s()) },
            WireMessage::CreateSession {
                env_id: 3,
                corpus_seed: Some(9),
                start: Some(Vec2::new(1.5, 2.0)),
                goal: None,
                seed: 4,
                max_steps: None,
            },
            WireMessage::SessionState {
                session_id: s(),
                tick: 7,
                q: Vec2::new(0.1, 0.2),
                qd: Vec2::new(-3.0, 4.0),
                status: Status::Running,
                trail: vec![Vec2::new(0.0, 0.0), Vec2::new(0.1, 0.2)],
                scene: None,
            },
            WireMessage::SubmitCorrection { session_id: s(), text: "go slower".into() },
            WireMessage::CorrectionAck { session_id: s(), tick: 7, correction: CorrectionKind::Goal, text: "x".into() },
            WireMessage::CorrectionError { session_id: None, message: "bad".into(), text: Some("zz".into()) },
            WireMessage::CostMapFrame {
                session_id: s(),
                tick: 8,
                stack_version: 1,
                width: 2,
                height: 1,
                cost: vec![0, 255],
                mask: vec![1, 0],
                constraints: vec!["stay away from the spam".into()],
                language_goal: Some(Vec2::new(5.0, 6.0)),
            },
            WireMessage::EpisodeEnd { session_id: s(), tick: 9, status: Status::Success, distance: Some(3.25) },
            WireMessage::Reset { session_id: s() },
        ]
    }

    #[test]
    fn every_kind_round_trips() {
        for msg in all_kinds() {
            let text = encode(&msg);
            assert_eq!(decode(&text).unwrap(), msg, "{text}");
        }
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let msg = decode(r#"{"kind":"Reset","session_id":"s4","note":{"nested":[1,2]}}"#).unwrap();
        assert_eq!(msg, WireMessage::Reset { session_id: "s4".into() });
    }

    #[test]
    fn truncated_or_unknown_frames_fail() {
        let text = encode(&WireMessage::SubmitCorrection { session_id: "s1".into(), text: "go up".into() });
        assert!(decode(&text[..text.len() - 3]).is_err());
        assert!(decode(r#"{"kind":"Teleport","session_id":"s1"}"#).is_err());
        assert!(decode(r#"{"kind":"SubmitCorrection","text":"go up"}"#).is_err());
    }

    #[test]
    fn downsampling_blocks() {
        let g = Grid::from_fn(8, 8, |c| if c.x < 4 { 10.0 } else { 1000.0 });
        let d = downsample_cost(&g, 2);
        assert_eq!(d, vec![10, 255, 10, 255]);
        let m = Grid::from_fn(8, 8, |c| c.x == 7 && c.y == 0);
        assert_eq!(downsample_mask(&m, 4), {
            let mut v = vec![0; 16];
            v[3] = 1;
            v
        });
        let ramp = Grid::from_fn(4, 2, |c| c.x as f64);
        assert_eq!(downsample_cost(&ramp, 2), vec![1, 3, 1, 3]);
    }
}
