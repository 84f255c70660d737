//! Entity types, BIO tags, and the span codec.
//!
//! Tag class indices are fixed: `O` is 0, followed by the B/I pair for each
//! entity type in declaration order (PERSON, PRODORG, LOCATION). Seven classes
//! total.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The closed set of entity types annotated in call transcripts: person names,
/// products or organizations (one merged type), and geopolitical locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityType {
    Person,
    ProdOrg,
    Location,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Person, EntityType::ProdOrg, EntityType::Location];

    pub fn name(&self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::ProdOrg => "PRODORG",
            EntityType::Location => "LOCATION",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PERSON" => Ok(EntityType::Person),
            "PRODORG" => Ok(EntityType::ProdOrg),
            "LOCATION" => Ok(EntityType::Location),
            other => Err(Error::Validation(format!("unknown entity type {other:?}"))),
        }
    }
}

/// A per-token BIO tag. `Begin` marks the first token of an entity, `Inside`
/// a continuation, `Outside` everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(EntityType),
    Inside(EntityType),
}

impl Tag {
    /// Number of distinct tag classes.
    pub const COUNT: usize = 7;

    /// Fixed class index: O = 0, then B/I pairs in entity-type declaration
    /// order.
    pub fn index(&self) -> usize {
        match self {
            Tag::Outside => 0,
            Tag::Begin(EntityType::Person) => 1,
            Tag::Inside(EntityType::Person) => 2,
            Tag::Begin(EntityType::ProdOrg) => 3,
            Tag::Inside(EntityType::ProdOrg) => 4,
            Tag::Begin(EntityType::Location) => 5,
            Tag::Inside(EntityType::Location) => 6,
        }
    }

    /// Inverse of [`Tag::index`].
    pub fn from_index(index: usize) -> Result<Tag> {
        Self::all()
            .get(index)
            .copied()
            .ok_or_else(|| Error::Validation(format!("tag class index {index} out of range")))
    }

    /// All tags in class-index order.
    pub fn all() -> [Tag; Tag::COUNT] {
        [
            Tag::Outside,
            Tag::Begin(EntityType::Person),
            Tag::Inside(EntityType::Person),
            Tag::Begin(EntityType::ProdOrg),
            Tag::Inside(EntityType::ProdOrg),
            Tag::Begin(EntityType::Location),
            Tag::Inside(EntityType::Location),
        ]
    }

    pub fn entity_type(&self) -> Option<EntityType> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(*t),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::Outside => "O",
            Tag::Begin(EntityType::Person) => "B-PERSON",
            Tag::Inside(EntityType::Person) => "I-PERSON",
            Tag::Begin(EntityType::ProdOrg) => "B-PRODORG",
            Tag::Inside(EntityType::ProdOrg) => "I-PRODORG",
            Tag::Begin(EntityType::Location) => "B-LOCATION",
            Tag::Inside(EntityType::Location) => "I-LOCATION",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" => Ok(Tag::Outside),
            "B-PERSON" => Ok(Tag::Begin(EntityType::Person)),
            "I-PERSON" => Ok(Tag::Inside(EntityType::Person)),
            "B-PRODORG" => Ok(Tag::Begin(EntityType::ProdOrg)),
            "I-PRODORG" => Ok(Tag::Inside(EntityType::ProdOrg)),
            "B-LOCATION" => Ok(Tag::Begin(EntityType::Location)),
            "I-LOCATION" => Ok(Tag::Inside(EntityType::Location)),
            other => Err(Error::Validation(format!("unknown tag {other:?}"))),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A typed, half-open token span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: EntityType,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: EntityType, start: usize, end: usize) -> Self {
        EntitySpan { entity_type, start, end }
    }
}

// Spans order by position, not by type.
impl Ord for EntitySpan {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.start, self.end, self.entity_type).cmp(&(other.start, other.end, other.entity_type))
    }
}

impl PartialOrd for EntitySpan {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// True when no `I-X` follows anything other than `B-X` or `I-X`.
pub fn is_bio_valid(tags: &[Tag]) -> bool {
    let mut prev: Option<EntityType> = None;
    for tag in tags {
        match tag {
            Tag::Outside => prev = None,
            Tag::Begin(t) => prev = Some(*t),
            Tag::Inside(t) => {
                if prev != Some(*t) {
                    return false;
                }
                prev = Some(*t);
            }
        }
    }
    true
}

/// Encodes spans as a BIO tag sequence of the given length.
///
/// Spans must be in range and non-overlapping; the input order does not
/// matter. Decoding the result returns exactly the input spans.
pub fn bio_encode(spans: &[EntitySpan], length: usize) -> Result<Vec<Tag>> {
    let mut sorted: Vec<EntitySpan> = spans.to_vec();
    sorted.sort();
    for span in &sorted {
        if span.start >= span.end || span.end > length {
            return Err(Error::Validation(format!(
                "span {}..{} invalid for length {length}",
                span.start, span.end
            )));
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::Validation(format!(
                "overlapping spans {}..{} and {}..{}",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    let mut tags = vec![Tag::Outside; length];
    for span in &sorted {
        tags[span.start] = Tag::Begin(span.entity_type);
        for slot in tags.iter_mut().take(span.end).skip(span.start + 1) {
            *slot = Tag::Inside(span.entity_type);
        }
    }
    Ok(tags)
}

/// Decodes a tag sequence into sorted, non-overlapping spans.
///
/// Total over all tag sequences, including BIO-invalid model output: a stray
/// `I-X` (one not preceded by `B-X` or `I-X`) opens a new span, exactly as if
/// it were `B-X`.
pub fn bio_decode(tags: &[Tag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(EntityType, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => {
                if let Some((t, start)) = open.take() {
                    spans.push(EntitySpan::new(t, start, i));
                }
            }
            Tag::Begin(t) => {
                if let Some((ot, start)) = open.take() {
                    spans.push(EntitySpan::new(ot, start, i));
                }
                open = Some((*t, i));
            }
            Tag::Inside(t) => match open {
                Some((ot, _)) if ot == *t => {}
                _ => {
                    if let Some((ot, start)) = open.take() {
                        spans.push(EntitySpan::new(ot, start, i));
                    }
                    open = Some((*t, i));
                }
            },
        }
    }
    if let Some((t, start)) = open {
        spans.push(EntitySpan::new(t, start, tags.len()));
    }
    spans
}
