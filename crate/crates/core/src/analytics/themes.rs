//! Manually assigned healing-theme codes on patient reflections.
//!
//! The set of valid themes is a [`ThemeCodebook`]; the default holds the ten
//! themes used for coding. A different codebook can be loaded as data.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeDef {
    pub key: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeCodebook {
    pub themes: Vec<ThemeDef>,
}

const DEFAULT_THEMES: [(&str, &str); 10] = [
    ("hope_and_purpose", "Hope and Purpose"),
    ("rejuvenation", "Rejuvenation"),
    ("engagement", "Engagement"),
    ("safety", "Safety"),
    ("sensory_pleasure", "Sensory Pleasure"),
    ("relevance", "Relevance"),
    ("personal_preference", "Personal Preference"),
    ("togetherness_vs_solitude", "Togetherness vs Solitude"),
    ("awe", "Awe"),
    ("escape_and_refuge", "Escape and Refuge"),
];

impl Default for ThemeCodebook {
    fn default() -> Self {
        Self {
            themes: DEFAULT_THEMES
                .iter()
                .map(|(key, label)| ThemeDef {
                    key: key.to_string(),
                    label: label.to_string(),
                })
                .collect(),
        }
    }
}

impl ThemeCodebook {
    pub fn contains(&self, key: &str) -> bool {
        self.themes.iter().any(|t| t.key == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.themes.iter().map(|t| t.key.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeCode {
    pub theme: String,
    pub coder_id: String,
    pub reflection_ref: String,
}

/// Append-only collection of codes. A reflection may carry several codes.
#[derive(Debug, Clone, Default)]
pub struct ThemeStore {
    codebook: ThemeCodebook,
    codes: Vec<ThemeCode>,
}

impl ThemeStore {
    pub fn new(codebook: ThemeCodebook) -> Self {
        Self {
            codebook,
            codes: Vec::new(),
        }
    }

    pub fn codebook(&self) -> &ThemeCodebook {
        &self.codebook
    }

    pub fn validate(&self, theme: &str) -> Result<(), AnalyticsError> {
        if self.codebook.contains(theme) {
            Ok(())
        } else {
            Err(AnalyticsError::UnknownTheme(theme.to_string()))
        }
    }

    pub fn record_theme_code(
        &mut self,
        reflection_ref: &str,
        theme: &str,
        coder_id: &str,
    ) -> Result<&ThemeCode, AnalyticsError> {
        self.validate(theme)?;
        self.codes.push(ThemeCode {
            theme: theme.to_string(),
            coder_id: coder_id.to_string(),
            reflection_ref: reflection_ref.to_string(),
        });
        Ok(self.codes.last().expect("just pushed"))
    }

    /// Re-inserts a previously persisted code, still checking the codebook.
    pub fn restore(&mut self, code: ThemeCode) -> Result<(), AnalyticsError> {
        self.validate(&code.theme)?;
        self.codes.push(code);
        Ok(())
    }

    pub fn codes_for<'a>(
        &'a self,
        reflection_ref: &'a str,
    ) -> impl Iterator<Item = &'a ThemeCode> + 'a {
        self.codes
            .iter()
            .filter(move |c| c.reflection_ref == reflection_ref)
    }

    pub fn all(&self) -> &[ThemeCode] {
        &self.codes
    }
}
