use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::intent::{Direction, IntentCategory, RobotRelation, Speed, SpatialRelation};
use super::GroundingError;
use crate::world::ObjectKind;

/// The lexicon compiled into the crate.
pub const DEFAULT_LEXICON: &str = include_str!("default_lexicon.txt");

/// Object synonym sets and relation trigger phrases, stored as token lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    objects: Vec<(ObjectKind, Vec<Vec<String>>)>,
    relations: Vec<(IntentCategory, Vec<Vec<String>>)>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON).expect("built-in lexicon is valid")
    }
}

/// Lowercases and splits on anything that is not a letter, digit, hyphen or
/// apostrophe.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '-' || ch == '\'' {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn relation_by_name(name: &str) -> Option<IntentCategory> {
    use IntentCategory::*;
    Some(match name {
        "above" => SpatialObject(SpatialRelation::Above),
        "below" => SpatialObject(SpatialRelation::Below),
        "left-of" => SpatialObject(SpatialRelation::LeftOf),
        "right-of" => SpatialObject(SpatialRelation::RightOf),
        "stay-away" => SpatialObject(SpatialRelation::StayAway),
        "behind" => RobotObject(RobotRelation::Behind),
        "in-front-of" => RobotObject(RobotRelation::InFrontOf),
        "up" => Directional(Direction::Up),
        "down" => Directional(Direction::Down),
        "left" => Directional(Direction::Left),
        "right" => Directional(Direction::Right),
        "faster" => Velocity(Speed::Faster),
        "slower" => Velocity(Speed::Slower),
        _ => return None,
    })
}

impl Lexicon {
    /// Parses the line-oriented lexicon format (see `default_lexicon.txt`).
    pub fn parse(text: &str) -> Result<Self, GroundingError> {
        let mut objects: Vec<(ObjectKind, Vec<Vec<String>>)> = Vec::new();
        let mut relations: Vec<(IntentCategory, Vec<Vec<String>>)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| GroundingError::Lexicon { line: line_no, message: msg.to_string() };
            let (head, body) = line.split_once(':').ok_or_else(|| bad("missing ':'"))?;
            let mut head_parts = head.split_whitespace();
            let section = head_parts.next().ok_or_else(|| bad("empty entry"))?;
            let name = head_parts.next().ok_or_else(|| bad("missing entry name"))?;
            if head_parts.next().is_some() {
                return Err(bad("unexpected text before ':'"));
            }
            let phrases: Vec<Vec<String>> =
                body.split('|').map(tokenize).filter(|p: &Vec<String>| !p.is_empty()).collect();
            if phrases.is_empty() {
                return Err(bad("no phrases"));
            }
            match section {
                "object" => {
                    let kind = ObjectKind::from_name(name).ok_or_else(|| bad("unknown object kind"))?;
                    match objects.iter_mut().find(|(k, _)| *k == kind) {
                        Some((_, list)) => list.extend(phrases),
                        None => objects.push((kind, phrases)),
                    }
                }
                "relation" => {
                    let rel = relation_by_name(name).ok_or_else(|| bad("unknown relation"))?;
                    match relations.iter_mut().find(|(r, _)| *r == rel) {
                        Some((_, list)) => list.extend(phrases),
                        None => relations.push((rel, phrases)),
                    }
                }
                _ => return Err(bad("entry must start with 'object' or 'relation'")),
            }
        }
        for (i, (ka, a)) in objects.iter().enumerate() {
            for (kb, b) in objects.iter().skip(i + 1) {
                if let Some(p) = a.iter().find(|p| b.contains(p)) {
                    return Err(GroundingError::Lexicon {
                        line: 0,
                        message: alloc::format!("synonym '{}' shared by {} and {}", p.join(" "), ka, kb),
                    });
                }
            }
        }
        Ok(Lexicon { objects, relations })
    }

    pub fn synonyms(&self, kind: ObjectKind) -> impl Iterator<Item = String> + '_ {
        self.objects
            .iter()
            .filter(move |(k, _)| *k == kind)
            .flat_map(|(_, list)| list.iter().map(|p| p.join(" ")))
    }

    /// Preferred surface form for an object kind.
    pub fn display_name(&self, kind: ObjectKind) -> String {
        self.synonyms(kind).next().unwrap_or_else(|| kind.name().to_string())
    }

    pub fn triggers(&self, category: IntentCategory) -> impl Iterator<Item = String> + '_ {
        self.relations
            .iter()
            .filter(move |(c, _)| *c == category)
            .flat_map(|(_, list)| list.iter().map(|p| p.join(" ")))
    }

    pub(crate) fn relation_entries(&self) -> &[(IntentCategory, Vec<Vec<String>>)] {
        &self.relations
    }

    /// Object kinds whose longest matching synonym occurs in `tokens`,
    /// together with the length of that match.
    pub(crate) fn object_matches(&self, tokens: &[String]) -> Vec<(ObjectKind, usize)> {
        let mut out = Vec::new();
        for (kind, phrases) in &self.objects {
            let best = phrases.iter().filter(|p| find_phrase(tokens, p).is_some()).map(|p| p.len()).max();
            if let Some(len) = best {
                out.push((*kind, len));
            }
        }
        out
    }

    /// Stable FNV-1a digest of the lexicon contents.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |s: &str| {
            for b in s.bytes().chain(core::iter::once(0xff)) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (k, list) in &self.objects {
            feed(k.name());
            for p in list {
                feed(&p.join(" "));
            }
        }
        for (c, list) in &self.relations {
            feed(&alloc::format!("{c:?}"));
            for p in list {
                feed(&p.join(" "));
            }
        }
        h
    }
}

/// First position where `phrase` occurs as a contiguous token run.
pub(crate) fn find_phrase(tokens: &[String], phrase: &[String]) -> Option<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - phrase.len()).find(|&i| tokens[i..i + phrase.len()] == *phrase)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lexicon_loads() {
        let lex = Lexicon::default();
        assert_eq!(lex.display_name(ObjectKind::CheezitBox), "cheezit box");
        assert!(lex.synonyms(ObjectKind::SpamCan).any(|s| s == "spam"));
        assert!(lex.triggers(IntentCategory::Velocity(Speed::Slower)).any(|s| s == "slow down"));
    }

    #[test]
    fn tokenize_normalizes() {
        assert_eq!(tokenize("Go to the LEFT of the Cheez-It box!"), ["go", "to", "the", "left", "of", "the", "cheez-it", "box"]);
    }

    #[test]
    fn rejects_overlapping_synonyms() {
        let text = "object spam-can: can\nobject bleach-bottle: can\n";
        assert!(matches!(Lexicon::parse(text), Err(GroundingError::Lexicon { .. })));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(Lexicon::parse("object spam-can can"), Err(GroundingError::Lexicon { line: 1, .. })));
        assert!(matches!(Lexicon::parse("relation sideways: x"), Err(GroundingError::Lexicon { line: 1, .. })));
        assert!(matches!(Lexicon::parse("thing spam-can: x"), Err(GroundingError::Lexicon { line: 1, .. })));
    }

    #[test]
    fn digest_is_content_sensitive() {
        let a = Lexicon::default();
        let b = Lexicon::parse(&(DEFAULT_LEXICON.to_string() + "object spam-can: luncheon meat\n")).unwrap();
        assert_eq!(a.digest(), Lexicon::default().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
