//! Toolkit for studying how social-media posts frame an issue.
//!
//! The pipeline: clean and split a corpus ([`preprocess`]), label posts with a
//! nine-frame multi-label typology via an LLM ([`llm`]) and expert validation
//! ([`validate`]), scale the labels with a linear classifier ([`classifier`]),
//! measure agreement ([`agreement`]) and run corpus statistics ([`analytics`]).

pub mod agreement;
pub mod analytics;
pub mod classifier;
pub mod corpus;
pub mod frame;
pub mod io;
pub mod llm;
pub mod preprocess;
pub mod validate;

pub use corpus::{Annotation, Annotator, AnnotatorKind, Corpus, LabelIndex, Post};
pub use frame::{make_labelset, parse_frame, theme_of, Frame, FrameSet, Label, LabelError, LabelSet, Theme};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
