use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::prompt::{Stage, OTHER_TAG, RELEVANT_TAG};
use super::LlmError;
use crate::frame::{parse_frame, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterDecision {
    Relevant,
    Other,
}

impl FilterDecision {
    pub fn tag(self) -> &'static str {
        match self {
            FilterDecision::Relevant => RELEVANT_TAG,
            FilterDecision::Other => OTHER_TAG,
        }
    }
}

/// `Strict` demands exactly `<tag> because reason` per line; `Tolerant` accepts
/// missing brackets, any case, list markers and `:` separators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    Strict,
    #[default]
    Tolerant,
}

static FRAME_TAG: LazyLock<Regex> = LazyLock::new(|| {
    let alts: Vec<&str> = Frame::ALL.iter().map(|f| f.prompt_tag()).collect();
    Regex::new(&format!(r"(?i)<?\b({})\b>?", alts.join("|"))).unwrap()
});

static FILTER_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)<?\b({RELEVANT_TAG}|{OTHER_TAG})\b>?")).unwrap());

static STRICT_FRAME_LINE: LazyLock<Regex> = LazyLock::new(|| {
    let alts: Vec<&str> = Frame::ALL.iter().map(|f| f.prompt_tag()).collect();
    Regex::new(&format!(r"^<({})> because\s+(\S.*)$", alts.join("|"))).unwrap()
});

static STRICT_FILTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?s)^<({RELEVANT_TAG}|{OTHER_TAG})> because\s+(\S.*)$")).unwrap());

static BECAUSE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^because\b").unwrap());

fn followed_by_because(rest: &str) -> bool {
    let rest = rest.trim_start_matches(|c: char| c == '>' || c == ':' || c == '-' || c.is_whitespace());
    BECAUSE.is_match(rest)
}

fn at_line_start(text: &str, start: usize) -> bool {
    let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
    text[line_start..start]
        .chars()
        .all(|c| c.is_whitespace() || c.is_ascii_digit() || matches!(c, '-' | '*' | '•' | '.' | ')' | '#'))
}

fn clean_reason(s: &str) -> String {
    let s = s.trim_start_matches(|c: char| c == '>' || c == ':' || c == '-' || c.is_whitespace());
    let s = match BECAUSE.find(s) {
        Some(m) => &s[m.end()..],
        None => s,
    };
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '-' | '*' | '•'))
        .to_string()
}

pub fn parse_filter_response(raw: &str) -> Result<(FilterDecision, String), LlmError> {
    parse_filter_response_with(raw, ParseMode::Tolerant)
}

pub fn parse_filter_response_with(raw: &str, mode: ParseMode) -> Result<(FilterDecision, String), LlmError> {
    let decision = |tag: &str| {
        if tag.eq_ignore_ascii_case(RELEVANT_TAG) {
            FilterDecision::Relevant
        } else {
            FilterDecision::Other
        }
    };
    if mode == ParseMode::Strict {
        let caps = STRICT_FILTER
            .captures(raw.trim())
            .ok_or_else(|| LlmError::ParseError("expected `<label> because reason`".into()))?;
        return Ok((decision(&caps[1]), caps[2].trim().to_string()));
    }
    // "other" is an ordinary word, so a bare occurrence counts only when bracketed or anchored.
    let chosen = FILTER_TAG.captures_iter(raw).find(|c| {
        let m = c.get(0).unwrap();
        let tag = &c[1];
        m.as_str().starts_with('<')
            || tag.eq_ignore_ascii_case(RELEVANT_TAG)
            || followed_by_because(&raw[m.end()..])
            || at_line_start(raw, m.start())
    });
    let caps = chosen.ok_or_else(|| LlmError::ParseError("no filter label found".into()))?;
    let m = caps.get(0).unwrap();
    Ok((decision(&caps[1]), clean_reason(&raw[m.end()..])))
}

pub fn parse_frames_response(raw: &str) -> Result<Vec<(Frame, String)>, LlmError> {
    parse_frames_response_with(raw, ParseMode::Tolerant)
}

/// Frames in order of first mention, each with its reason; repeated tags keep the first reason.
pub fn parse_frames_response_with(raw: &str, mode: ParseMode) -> Result<Vec<(Frame, String)>, LlmError> {
    let mut out: Vec<(Frame, String)> = Vec::new();
    let mut push = |f: Frame, reason: String| {
        if !out.iter().any(|(g, _)| *g == f) {
            out.push((f, reason));
        }
    };
    match mode {
        ParseMode::Strict => {
            for (i, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let caps = STRICT_FRAME_LINE
                    .captures(line.trim_end())
                    .ok_or_else(|| LlmError::ParseError(format!("line {}: expected `<label> because reason`", i + 1)))?;
                push(parse_frame(&caps[1]).unwrap(), caps[2].trim().to_string());
            }
        }
        ParseMode::Tolerant => {
            let spans: Vec<(usize, usize, Frame)> = FRAME_TAG
                .captures_iter(raw)
                .filter_map(|c| {
                    let m = c.get(0).unwrap();
                    let anchored = followed_by_because(&raw[m.end()..]) || at_line_start(raw, m.start());
                    anchored.then(|| (m.start(), m.end(), parse_frame(&c[1]).unwrap()))
                })
                .collect();
            for (k, &(_, end, f)) in spans.iter().enumerate() {
                let stop = spans.get(k + 1).map_or(raw.len(), |s| s.0);
                push(f, clean_reason(&raw[end..stop]));
            }
        }
    }
    if out.is_empty() {
        return Err(LlmError::ParseError("no frame labels found".into()));
    }
    Ok(out)
}

/// A stage-agnostic view of a parsed reply: `(tag, reason)` pairs plus the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub stage: Stage,
    pub labels: Vec<(String, String)>,
    pub raw: String,
}

pub fn parse_response(stage: Stage, raw: &str, mode: ParseMode) -> Result<ParsedResponse, LlmError> {
    let labels = match stage {
        Stage::Filter => {
            let (d, reason) = parse_filter_response_with(raw, mode)?;
            vec![(d.tag().to_string(), reason)]
        }
        Stage::Frames => parse_frames_response_with(raw, mode)?
            .into_iter()
            .map(|(f, r)| (f.prompt_tag().to_string(), r))
            .collect(),
    };
    Ok(ParsedResponse { stage, labels, raw: raw.to_string() })
}

pub fn render_filter_response(decision: FilterDecision, reason: &str) -> String {
    format!("<{}> because {}", decision.tag(), reason)
}

pub fn render_frames_response<S: AsRef<str>>(labels: &[(Frame, S)]) -> String {
    labels
        .iter()
        .map(|(f, r)| format!("<{}> because {}", f.prompt_tag(), r.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}
