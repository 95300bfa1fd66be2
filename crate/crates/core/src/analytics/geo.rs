use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;

use super::AnalyticsError;
use crate::corpus::Corpus;

const STATES: [(&str, &str); 51] = [
    ("AL", "alabama"),
    ("AK", "alaska"),
    ("AZ", "arizona"),
    ("AR", "arkansas"),
    ("CA", "california"),
    ("CO", "colorado"),
    ("CT", "connecticut"),
    ("DE", "delaware"),
    ("DC", "district of columbia"),
    ("FL", "florida"),
    ("GA", "georgia"),
    ("HI", "hawaii"),
    ("ID", "idaho"),
    ("IL", "illinois"),
    ("IN", "indiana"),
    ("IA", "iowa"),
    ("KS", "kansas"),
    ("KY", "kentucky"),
    ("LA", "louisiana"),
    ("ME", "maine"),
    ("MD", "maryland"),
    ("MA", "massachusetts"),
    ("MI", "michigan"),
    ("MN", "minnesota"),
    ("MS", "mississippi"),
    ("MO", "missouri"),
    ("MT", "montana"),
    ("NE", "nebraska"),
    ("NV", "nevada"),
    ("NH", "new hampshire"),
    ("NJ", "new jersey"),
    ("NM", "new mexico"),
    ("NY", "new york"),
    ("NC", "north carolina"),
    ("ND", "north dakota"),
    ("OH", "ohio"),
    ("OK", "oklahoma"),
    ("OR", "oregon"),
    ("PA", "pennsylvania"),
    ("RI", "rhode island"),
    ("SC", "south carolina"),
    ("SD", "south dakota"),
    ("TN", "tennessee"),
    ("TX", "texas"),
    ("UT", "utah"),
    ("VT", "vermont"),
    ("VA", "virginia"),
    ("WA", "washington"),
    ("WV", "west virginia"),
    ("WI", "wisconsin"),
    ("WY", "wyoming"),
];

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{Alphabetic}\p{N}]+").unwrap());

/// Place names (matched case-insensitively, longest first) and two-letter
/// codes (matched only as standalone uppercase tokens) mapped to state keys.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    names: HashMap<Vec<String>, String>,
    codes: HashSet<String>,
    longest: usize,
}

impl Gazetteer {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The 50 states plus DC, with "washington dc" resolving to DC.
    pub fn us_states() -> Self {
        let mut g = Self::empty();
        for (code, name) in STATES {
            g.add_name(name, code);
            g.add_code(code);
        }
        g.add_name("washington dc", "DC");
        g.add_name("washington d c", "DC");
        g
    }

    pub fn add_name(&mut self, name: &str, key: &str) {
        let toks: Vec<String> = WORD.find_iter(&name.to_lowercase()).map(|m| m.as_str().to_string()).collect();
        if toks.is_empty() {
            return;
        }
        self.longest = self.longest.max(toks.len());
        self.names.insert(toks, key.to_string());
    }

    pub fn add_code(&mut self, code: &str) {
        self.codes.insert(code.to_uppercase());
    }

    /// Adds `alias \t state` lines, e.g. city names.
    pub fn load_aliases(&mut self, path: &Path) -> Result<usize, AnalyticsError> {
        let text = std::fs::read_to_string(path)?;
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (alias, key) = line.split_once('\t').ok_or(AnalyticsError::MalformedLine(i + 1))?;
            self.add_name(alias.trim(), key.trim());
            n += 1;
        }
        Ok(n)
    }

    /// Every state mentioned in `text`.
    pub fn states_in(&self, text: &str) -> BTreeSet<String> {
        let raw: Vec<&str> = WORD.find_iter(text).map(|m| m.as_str()).collect();
        let lower: Vec<String> = raw.iter().map(|t| t.to_lowercase()).collect();
        let mut found = BTreeSet::new();
        let mut i = 0;
        while i < raw.len() {
            let mut matched = 0;
            for len in (1..=self.longest.min(raw.len() - i)).rev() {
                if let Some(key) = self.names.get(&lower[i..i + len]) {
                    found.insert(key.clone());
                    matched = len;
                    break;
                }
            }
            if matched == 0 {
                let t = raw[i];
                if t.len() == 2 && t.chars().all(|c| c.is_ascii_uppercase()) && self.codes.contains(t) {
                    found.insert(t.to_string());
                }
                i += 1;
            } else {
                i += matched;
            }
        }
        found
    }
}

/// Post positions per state; a post can land in several states.
pub fn state_positions(corpus: &Corpus, gazetteer: &Gazetteer) -> BTreeMap<String, Vec<usize>> {
    let per_post: Vec<BTreeSet<String>> = corpus.posts().par_iter().map(|p| gazetteer.states_in(&p.text)).collect();
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, states) in per_post.into_iter().enumerate() {
        for s in states {
            out.entry(s).or_default().push(i);
        }
    }
    out
}

pub fn state_segment(corpus: &Corpus, gazetteer: &Gazetteer) -> BTreeMap<String, Corpus> {
    state_positions(corpus, gazetteer).into_iter().map(|(s, pos)| (s, corpus.select(&pos))).collect()
}

/// Reads externally produced `post_id \t state` tags in place of gazetteer matching.
pub fn read_state_tags(path: &Path, corpus: &Corpus) -> Result<BTreeMap<String, Corpus>, AnalyticsError> {
    let text = std::fs::read_to_string(path)?;
    let mut buckets: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, state) = line.split_once('\t').ok_or(AnalyticsError::MalformedLine(i + 1))?;
        let pos = corpus.position(id.trim()).ok_or(AnalyticsError::UnresolvedPost(i + 1))?;
        buckets.entry(state.trim().to_string()).or_default().insert(pos);
    }
    Ok(buckets
        .into_iter()
        .map(|(s, pos)| (s, corpus.select(&pos.into_iter().collect::<Vec<_>>())))
        .collect())
}
