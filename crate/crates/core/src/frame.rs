//! The fixed frame registry and label sets.
//!
//! Nine issue-specific frames grouped under three themes. A post either
//! fails the relevance filter ([`LabelSet::Filtered`]) or carries a
//! non-empty set of frames.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("a filtered post cannot carry frames")]
    ExclusivityViolation,
    #[error("a relevant post needs at least one frame")]
    EmptyLabelSet,
}

/// Overarching theme a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theme {
    Critiques,
    Responses,
    Perceptions,
}

impl Theme {
    pub const ALL: [Theme; 3] = [Theme::Critiques, Theme::Responses, Theme::Perceptions];

    pub fn name(self) -> &'static str {
        match self {
            Theme::Critiques => "Critiques",
            Theme::Responses => "Responses",
            Theme::Perceptions => "Perceptions",
        }
    }
}

impl fmt::Display for Theme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the nine issue-specific frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Frame {
    GovCrit,
    MoneyAid,
    SocCrit,
    SolnInt,
    Nimby,
    Interact,
    MediaPort,
    UnDeserv,
    HarmGen,
}

impl Frame {
    pub const COUNT: usize = 9;

    /// Registry order. Every per-frame vector in the crate is laid out this way.
    pub const ALL: [Frame; 9] = [
        Frame::GovCrit,
        Frame::MoneyAid,
        Frame::SocCrit,
        Frame::SolnInt,
        Frame::Nimby,
        Frame::Interact,
        Frame::MediaPort,
        Frame::UnDeserv,
        Frame::HarmGen,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Frame> {
        Frame::ALL.get(index).copied()
    }

    pub fn theme(self) -> Theme {
        match self {
            Frame::GovCrit | Frame::MoneyAid | Frame::SocCrit => Theme::Critiques,
            Frame::SolnInt => Theme::Responses,
            Frame::Nimby
            | Frame::Interact
            | Frame::MediaPort
            | Frame::UnDeserv
            | Frame::HarmGen => Theme::Perceptions,
        }
    }

    /// Short display name, e.g. `GovCrit.`.
    pub fn canonical_name(self) -> &'static str {
        match self {
            Frame::GovCrit => "GovCrit.",
            Frame::MoneyAid => "MoneyAid.",
            Frame::SocCrit => "SocCrit.",
            Frame::SolnInt => "SolnInt.",
            Frame::Nimby => "NIMBY",
            Frame::Interact => "Interact.",
            Frame::MediaPort => "MediaPort.",
            Frame::UnDeserv => "(Un)Deserv.",
            Frame::HarmGen => "HarmGen.",
        }
    }

    /// Tag used inside LLM prompts and responses (without angle brackets).
    pub fn prompt_tag(self) -> &'static str {
        match self {
            Frame::GovCrit => "government_critique",
            Frame::MoneyAid => "money_aid_resource",
            Frame::SocCrit => "public_critique",
            Frame::SolnInt => "solutions_interventions",
            Frame::Nimby => "not_in_my_backyard",
            Frame::Interact => "interaction_with_homeless_person",
            Frame::MediaPort => "media_portrayal",
            Frame::UnDeserv => "deserving_undeserving_of_resources",
            Frame::HarmGen => "harmful_statements_against_homelessness",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Frame::GovCrit => "Government Critique",
            Frame::MoneyAid => "Money Aid Resource Allocation",
            Frame::SocCrit => "Societal Critique",
            Frame::SolnInt => "Solutions and Interventions",
            Frame::Nimby => "Not in my Backyard",
            Frame::Interact => "Personal Interaction",
            Frame::MediaPort => "Media Portrayal",
            Frame::UnDeserv => "Deserving vs. Undeserving of Resources",
            Frame::HarmGen => "Harmful Generalization",
        }
    }

    /// Annotator-facing definition of the frame.
    pub fn definition(self) -> &'static str {
        match self {
            Frame::GovCrit => {
                "Criticism about government body, policies and laws including discussion of \
                 homelessness through the lens of political parties and values."
            }
            Frame::MoneyAid => {
                "Discussion of money, aid or resource disbursement on addressing the homelessness \
                 issue. Examples include the allocation of necessities such as essential items for \
                 emergency relief supplies, or government budgeting with respect to competing \
                 priorities."
            }
            Frame::SocCrit => {
                "Criticism of social norms, systems and society at large in how homelessness is \
                 being addressed and perceived. Also includes pointing out hypocrisy and \
                 performative activism."
            }
            Frame::SolnInt => {
                "Discussion of solutions, interventions, charitable acts and remedies to address \
                 the homelessness crisis."
            }
            Frame::Nimby => {
                "Opposition by residents to proposed developments in their local area, as well as \
                 support for strict land use regulations against wanting to see homelessness in \
                 their local area and neighborhood."
            }
            Frame::Interact => "Anecdote describing a direct personal exchange with PEH.",
            Frame::MediaPort => {
                "Portrayal of (fictional or real) PEH as described in the media (e.g. discussing \
                 PEH in a TV show or in the news)."
            }
            Frame::UnDeserv => {
                "Perpetuating a hierarchy of PEH with other marginalized communities or the use of \
                 harmful generalizations such as substance use and mental illness to justify that \
                 PEH that are more or less deserving of aid. Includes nationalistic rhetoric."
            }
            Frame::HarmGen => {
                "Blanket statements that ascribe an undesirable characteristic to PEH that include \
                 but are not limited to generalizing all PEH as having an unkempt appearance, or \
                 being violent, racist, thieves, or sexual predators."
            }
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

fn normalize_frame_key(raw: &str) -> String {
    let s = raw.trim();
    let s = s.strip_prefix('<').unwrap_or(s);
    let s = s.strip_suffix('>').unwrap_or(s);
    s.trim().trim_end_matches('.').to_ascii_lowercase()
}

/// Resolves a prompt tag (bracketed or not) or a canonical short name,
/// case-insensitively and ignoring trailing periods.
pub fn parse_frame(tag: &str) -> Result<Frame, LabelError> {
    let key = normalize_frame_key(tag);
    Frame::ALL
        .into_iter()
        .find(|f| {
            key == f.prompt_tag()
                || key == normalize_frame_key(f.canonical_name())
                || (*f == Frame::UnDeserv && key == "undeserv")
        })
        .ok_or_else(|| LabelError::UnknownFrame(tag.to_string()))
}

pub fn theme_of(frame: Frame) -> Theme {
    frame.theme()
}

impl FromStr for Frame {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_frame(s)
    }
}

impl Serialize for Frame {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.prompt_tag())
    }
}

impl<'de> Deserialize<'de> for Frame {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_frame(&s).map_err(de::Error::custom)
    }
}

/// One of the ten classifier/evaluation labels: a frame, or the filter state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Frame(Frame),
    Filtered,
}

impl Label {
    pub const COUNT: usize = 10;

    pub const ALL: [Label; 10] = [
        Label::Frame(Frame::GovCrit),
        Label::Frame(Frame::MoneyAid),
        Label::Frame(Frame::SocCrit),
        Label::Frame(Frame::SolnInt),
        Label::Frame(Frame::Nimby),
        Label::Frame(Frame::Interact),
        Label::Frame(Frame::MediaPort),
        Label::Frame(Frame::UnDeserv),
        Label::Frame(Frame::HarmGen),
        Label::Filtered,
    ];

    pub fn index(self) -> usize {
        match self {
            Label::Frame(f) => f.index(),
            Label::Filtered => Frame::COUNT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Frame(f) => f.canonical_name(),
            Label::Filtered => "Filtered",
        }
    }
}

impl From<Frame> for Label {
    fn from(f: Frame) -> Self {
        Label::Frame(f)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of frames packed into a bitmask, iterated in registry order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameSet(u16);

impl FrameSet {
    pub const fn empty() -> Self {
        FrameSet(0)
    }

    pub fn all() -> Self {
        FrameSet((1 << Frame::COUNT) - 1)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn from_bits(bits: u16) -> Self {
        FrameSet(bits & Self::all().0)
    }

    pub fn insert(&mut self, f: Frame) -> bool {
        let had = self.contains(f);
        self.0 |= 1 << f.index();
        !had
    }

    pub fn remove(&mut self, f: Frame) -> bool {
        let had = self.contains(f);
        self.0 &= !(1 << f.index());
        had
    }

    pub fn contains(self, f: Frame) -> bool {
        self.0 & (1 << f.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: FrameSet) -> FrameSet {
        FrameSet(self.0 | other.0)
    }

    pub fn intersection(self, other: FrameSet) -> FrameSet {
        FrameSet(self.0 & other.0)
    }

    pub fn difference(self, other: FrameSet) -> FrameSet {
        FrameSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: FrameSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Frame> {
        Frame::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

impl FromIterator<Frame> for FrameSet {
    fn from_iter<I: IntoIterator<Item = Frame>>(iter: I) -> Self {
        let mut set = FrameSet::empty();
        for f in iter {
            set.insert(f);
        }
        set
    }
}

impl Serialize for FrameSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for f in self.iter() {
            seq.serialize_element(&f)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for FrameSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let frames = Vec::<Frame>::deserialize(deserializer)?;
        Ok(frames.into_iter().collect())
    }
}

/// Labels attached to one post.
///
/// Serialized as the string `"filtered"` or `{"frames": [tag, ...]}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "LabelSetRepr")]
pub enum LabelSet {
    Filtered,
    Frames(FrameSet),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum LabelSetRepr {
    Filtered,
    Frames(FrameSet),
}

impl TryFrom<LabelSetRepr> for LabelSet {
    type Error = LabelError;

    fn try_from(repr: LabelSetRepr) -> Result<Self, Self::Error> {
        match repr {
            LabelSetRepr::Filtered => Ok(LabelSet::Filtered),
            LabelSetRepr::Frames(set) => LabelSet::frames(set),
        }
    }
}

impl LabelSet {
    /// Builds a relevant label set; rejects the empty set.
    pub fn frames(set: FrameSet) -> Result<LabelSet, LabelError> {
        if set.is_empty() {
            Err(LabelError::EmptyLabelSet)
        } else {
            Ok(LabelSet::Frames(set))
        }
    }

    pub fn is_filtered(&self) -> bool {
        matches!(self, LabelSet::Filtered)
    }

    /// Frames carried; empty for filtered posts.
    pub fn frame_set(&self) -> FrameSet {
        match self {
            LabelSet::Filtered => FrameSet::empty(),
            LabelSet::Frames(set) => *set,
        }
    }

    pub fn has_frame(&self, f: Frame) -> bool {
        self.frame_set().contains(f)
    }

    pub fn has_label(&self, label: Label) -> bool {
        match label {
            Label::Filtered => self.is_filtered(),
            Label::Frame(f) => self.has_frame(f),
        }
    }
}

pub fn make_labelset(frames: FrameSet, filtered: bool) -> Result<LabelSet, LabelError> {
    match (filtered, frames.is_empty()) {
        (true, true) => Ok(LabelSet::Filtered),
        (true, false) => Err(LabelError::ExclusivityViolation),
        (false, _) => LabelSet::frames(frames),
    }
}
