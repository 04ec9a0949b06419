use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Toxic,
    Nontoxic,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Toxic => "toxic",
            Label::Nontoxic => "nontoxic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    InLanguage,
    Translated,
}

/// One corpus line: `{"text", "lang", "label", "source_id", "parallel_group", "origin"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub text: String,
    pub lang: String,
    pub label: Label,
    pub source_id: String,
    #[serde(default)]
    pub parallel_group: Option<i64>,
    #[serde(default)]
    pub origin: Origin,
}

impl LabeledSample {
    pub fn new(text: impl Into<String>, lang: impl Into<String>, label: Label, source_id: impl Into<String>) -> Self {
        LabeledSample {
            text: text.into(),
            lang: lang.into(),
            label,
            source_id: source_id.into(),
            parallel_group: None,
            origin: Origin::InLanguage,
        }
    }

    pub fn with_group(mut self, group: i64) -> Self {
        self.parallel_group = Some(group);
        self
    }
}
