use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::lexicon::{find_phrase, tokenize, Lexicon};
use super::GroundingError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SpatialRelation {
    Above,
    Below,
    LeftOf,
    RightOf,
    StayAway,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RobotRelation {
    Behind,
    InFrontOf,
}

/// Screen directions; up is toward smaller y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Speed {
    Faster,
    Slower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum IntentCategory {
    SpatialObject(SpatialRelation),
    RobotObject(RobotRelation),
    Directional(Direction),
    Velocity(Speed),
}

impl IntentCategory {
    pub const ALL: [IntentCategory; 13] = [
        IntentCategory::SpatialObject(SpatialRelation::Above),
        IntentCategory::SpatialObject(SpatialRelation::Below),
        IntentCategory::SpatialObject(SpatialRelation::LeftOf),
        IntentCategory::SpatialObject(SpatialRelation::RightOf),
        IntentCategory::SpatialObject(SpatialRelation::StayAway),
        IntentCategory::RobotObject(RobotRelation::Behind),
        IntentCategory::RobotObject(RobotRelation::InFrontOf),
        IntentCategory::Directional(Direction::Up),
        IntentCategory::Directional(Direction::Down),
        IntentCategory::Directional(Direction::Left),
        IntentCategory::Directional(Direction::Right),
        IntentCategory::Velocity(Speed::Faster),
        IntentCategory::Velocity(Speed::Slower),
    ];

    pub fn needs_object(self) -> bool {
        matches!(self, IntentCategory::SpatialObject(_) | IntentCategory::RobotObject(_))
    }

    /// Row label used in per-type reports.
    pub fn label(self) -> &'static str {
        match self {
            IntentCategory::SpatialObject(SpatialRelation::Above) => "Above",
            IntentCategory::SpatialObject(SpatialRelation::Below) => "Below",
            IntentCategory::SpatialObject(SpatialRelation::LeftOf) => "Left of",
            IntentCategory::SpatialObject(SpatialRelation::RightOf) => "Right of",
            IntentCategory::SpatialObject(SpatialRelation::StayAway) => "Stay Away",
            IntentCategory::RobotObject(RobotRelation::Behind) => "Behind",
            IntentCategory::RobotObject(RobotRelation::InFrontOf) => "In front of",
            IntentCategory::Directional(_) => "Positional",
            IntentCategory::Velocity(_) => "Velocity",
        }
    }
}

/// Parsed form of a correction.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Intent {
    pub category: IntentCategory,
    pub object_ref: Option<String>,
}

impl Intent {
    pub fn new(category: IntentCategory, object_ref: Option<String>) -> Result<Self, GroundingError> {
        if category.needs_object() != object_ref.is_some() {
            return Err(GroundingError::MalformedIntent(category));
        }
        Ok(Intent { category, object_ref })
    }
}

const DETERMINERS: [&str; 5] = ["the", "a", "an", "that", "this"];

struct TriggerHit {
    category: IntentCategory,
    start: usize,
    len: usize,
}

/// Longest trigger occurrence among the given categories; ties go to the
/// earliest position, then lexicon order.
fn best_trigger(lexicon: &Lexicon, tokens: &[String], object_relations: bool) -> Option<TriggerHit> {
    let mut best: Option<TriggerHit> = None;
    for (category, phrases) in lexicon.relation_entries() {
        if category.needs_object() != object_relations {
            continue;
        }
        for phrase in phrases {
            if let Some(start) = find_phrase(tokens, phrase) {
                let better = match &best {
                    None => true,
                    Some(b) => phrase.len() > b.len || (phrase.len() == b.len && start < b.start),
                };
                if better {
                    best = Some(TriggerHit { category: *category, start, len: phrase.len() });
                }
            }
        }
    }
    best
}

/// Maps a templated instruction to an [`Intent`]. Relations that take an
/// object win over directional and velocity phrases whenever a descriptor
/// follows the trigger.
pub fn parse(text: &str, lexicon: &Lexicon) -> Result<Intent, GroundingError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(GroundingError::Empty);
    }
    let object_hit = best_trigger(lexicon, &tokens, true);
    if let Some(hit) = &object_hit {
        let tail: Vec<&str> = tokens[hit.start + hit.len..]
            .iter()
            .map(String::as_str)
            .skip_while(|t| DETERMINERS.contains(t))
            .collect();
        if !tail.is_empty() {
            return Ok(Intent { category: hit.category, object_ref: Some(tail.join(" ")) });
        }
    }
    if let Some(hit) = best_trigger(lexicon, &tokens, false) {
        return Ok(Intent { category: hit.category, object_ref: None });
    }
    match object_hit {
        Some(hit) => Err(GroundingError::MissingObject { span: tokens[hit.start..hit.start + hit.len].join(" ") }),
        None => Err(GroundingError::Unparsed { span: tokens.join(" ") }),
    }
}

/// Instruction templates per category; `{}` is replaced by the object phrase.
pub fn templates(category: IntentCategory) -> &'static [&'static str] {
    use IntentCategory::*;
    match category {
        SpatialObject(SpatialRelation::Above) => &["go above the {}", "move to the top of the {}", "go over the {}"],
        SpatialObject(SpatialRelation::Below) => &["go below the {}", "move to the bottom of the {}", "go under the {}"],
        SpatialObject(SpatialRelation::LeftOf) => {
            &["go to the left of the {}", "move left of the {}", "go to the left side of the {}"]
        }
        SpatialObject(SpatialRelation::RightOf) => {
            &["go to the right of the {}", "move right of the {}", "go to the right side of the {}"]
        }
        SpatialObject(SpatialRelation::StayAway) => {
            &["stay away from the {}", "avoid the {}", "keep your distance from the {}"]
        }
        RobotObject(RobotRelation::Behind) => &["go behind the {}", "move to the back of the {}"],
        RobotObject(RobotRelation::InFrontOf) => &["go in front of the {}", "move to the front of the {}"],
        Directional(Direction::Up) => &["go up", "move upwards"],
        Directional(Direction::Down) => &["go down", "move downwards"],
        Directional(Direction::Left) => &["go left", "move leftwards"],
        Directional(Direction::Right) => &["go right", "move rightwards"],
        Velocity(Speed::Faster) => &["go faster", "speed up"],
        Velocity(Speed::Slower) => &["go slower", "slow down"],
    }
}

/// Renders template `variant` (wrapping) for an intent.
pub fn render(intent: &Intent, variant: usize) -> String {
    let list = templates(intent.category);
    let template = list[variant % list.len()];
    match &intent.object_ref {
        Some(obj) => template.replace("{}", obj),
        None => template.to_string(),
    }
}
