//! Sentiment labelling behind a replaceable classifier port.
//!
//! [`LexiconClassifier`] is the built-in deterministic baseline. Model-based
//! classifiers run out of process through [`CommandClassifier`].

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentLabel {
    pub label: Polarity,
    pub confidence: f64,
    pub classifier_id: String,
}

pub trait SentimentClassifier: Send + Sync {
    fn id(&self) -> &str;

    /// Labels non-empty text. Callers go through [`classify_sentiment`],
    /// which rejects empty input first.
    fn classify(&self, text: &str) -> Result<SentimentLabel, AnalyticsError>;
}

pub fn classify_sentiment(
    text: &str,
    classifier: &dyn SentimentClassifier,
) -> Result<SentimentLabel, AnalyticsError> {
    if text.trim().is_empty() {
        return Err(AnalyticsError::EmptyText);
    }
    let label = classifier.classify(text)?;
    if !(0.0..=1.0).contains(&label.confidence) {
        return Err(AnalyticsError::ClassifierUnavailable(format!(
            "{} returned confidence {}",
            classifier.id(),
            label.confidence
        )));
    }
    Ok(label)
}

const POSITIVE_WORDS: &[&str] = &[
    "beautiful",
    "bright",
    "calm",
    "calming",
    "cheerful",
    "comfort",
    "comfortable",
    "content",
    "delight",
    "enjoy",
    "enjoyed",
    "enjoying",
    "free",
    "gentle",
    "glad",
    "good",
    "grateful",
    "happy",
    "harmony",
    "hope",
    "hopeful",
    "joy",
    "joyful",
    "love",
    "lovely",
    "nice",
    "peace",
    "peaceful",
    "pleasant",
    "protected",
    "refreshed",
    "relaxed",
    "relaxing",
    "relief",
    "rested",
    "safe",
    "secure",
    "serene",
    "smile",
    "soothing",
    "strong",
    "thankful",
    "tranquil",
    "tranquillity",
    "warm",
    "wonderful",
];

const NEGATIVE_WORDS: &[&str] = &[
    "afraid",
    "alone",
    "angry",
    "anxiety",
    "anxious",
    "bad",
    "bored",
    "boring",
    "cold",
    "dark",
    "depressed",
    "depressing",
    "distressed",
    "dread",
    "fear",
    "frightened",
    "gloomy",
    "hate",
    "hopeless",
    "hurt",
    "lonely",
    "lost",
    "nervous",
    "overwhelmed",
    "overwhelming",
    "pain",
    "panic",
    "sad",
    "scared",
    "scary",
    "stress",
    "stressed",
    "tense",
    "terrible",
    "tired",
    "trapped",
    "uncomfortable",
    "uneasy",
    "unsettling",
    "upset",
    "worried",
    "worry",
];

/// Signed word-lexicon vote. Each token found in the lexicon adds its weight
/// to the positive or negative tally; the larger tally wins with confidence
/// `winner / (positive + negative)`. Equal tallies, including texts with no
/// lexicon words at all, are labelled positive with confidence 0.5.
#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    id: String,
    weights: HashMap<String, i32>,
}

impl Default for LexiconClassifier {
    fn default() -> Self {
        let weights = POSITIVE_WORDS
            .iter()
            .map(|w| (w.to_string(), 1))
            .chain(NEGATIVE_WORDS.iter().map(|w| (w.to_string(), -1)))
            .collect();
        Self {
            id: "lexicon-baseline-v1".into(),
            weights,
        }
    }
}

impl LexiconClassifier {
    pub fn new(id: impl Into<String>, weights: HashMap<String, i32>) -> Self {
        Self {
            id: id.into(),
            weights: weights
                .into_iter()
                .map(|(w, s)| (w.to_lowercase(), s))
                .collect(),
        }
    }

    /// Reads `word<whitespace>weight` lines; `#` starts a comment.
    pub fn from_reader<R: BufRead>(
        id: impl Into<String>,
        reader: R,
    ) -> Result<Self, AnalyticsError> {
        let mut weights = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| AnalyticsError::Lexicon(e.to_string()))?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(word), Some(weight), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(AnalyticsError::Lexicon(format!(
                    "line {}: expected `word weight`",
                    n + 1
                )));
            };
            let weight: i32 = weight.parse().map_err(|_| {
                AnalyticsError::Lexicon(format!("line {}: bad weight {weight:?}", n + 1))
            })?;
            weights.insert(word.to_string(), weight);
        }
        Ok(Self::new(id, weights))
    }

    /// Positive and negative tallies for `text`.
    pub fn tally(&self, text: &str) -> (u64, u64) {
        let mut pos = 0u64;
        let mut neg = 0u64;
        for token in text
            .split(|c: char| !c.is_alphabetic() && c != '\'')
            .filter(|t| !t.is_empty())
        {
            match self.weights.get(&token.to_lowercase()) {
                Some(&w) if w > 0 => pos += w as u64,
                Some(&w) if w < 0 => neg += w.unsigned_abs() as u64,
                _ => {}
            }
        }
        (pos, neg)
    }
}

impl SentimentClassifier for LexiconClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, text: &str) -> Result<SentimentLabel, AnalyticsError> {
        let (pos, neg) = self.tally(text);
        let (label, confidence) = if pos == neg {
            (Polarity::Positive, 0.5)
        } else if pos > neg {
            (Polarity::Positive, pos as f64 / (pos + neg) as f64)
        } else {
            (Polarity::Negative, neg as f64 / (pos + neg) as f64)
        };
        Ok(SentimentLabel {
            label,
            confidence,
            classifier_id: self.id.clone(),
        })
    }
}

#[derive(Deserialize)]
struct CommandReply {
    label: Polarity,
    confidence: f64,
}

/// Runs an external program per text: the text goes to stdin and the
/// program must print `{"label": "positive"|"negative", "confidence": x}`.
#[derive(Debug, Clone)]
pub struct CommandClassifier {
    id: String,
    program: String,
    args: Vec<String>,
}

impl CommandClassifier {
    pub fn new(id: impl Into<String>, program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            id: id.into(),
            program: program.into(),
            args,
        }
    }
}

impl SentimentClassifier for CommandClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, text: &str) -> Result<SentimentLabel, AnalyticsError> {
        let unavailable =
            |why: String| AnalyticsError::ClassifierUnavailable(format!("{}: {why}", self.id));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| unavailable(e.to_string()))?;
        child
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(text.as_bytes())
            .map_err(|e| unavailable(e.to_string()))?;
        let output = child
            .wait_with_output()
            .map_err(|e| unavailable(e.to_string()))?;
        if !output.status.success() {
            return Err(unavailable(format!("exited with {}", output.status)));
        }
        let reply: CommandReply =
            serde_json::from_slice(&output.stdout).map_err(|e| unavailable(e.to_string()))?;
        Ok(SentimentLabel {
            label: reply.label,
            confidence: reply.confidence,
            classifier_id: self.id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_examples() {
        let lex = LexiconClassifier::default();
        let pos = classify_sentiment("I felt calm and peaceful and happy", &lex).unwrap();
        assert_eq!(lex.tally("I felt calm and peaceful and happy"), (3, 0));
        assert_eq!(pos.label, Polarity::Positive);
        assert_eq!(pos.confidence, 1.0);

        let neg = classify_sentiment("anxious scared overwhelmed", &lex).unwrap();
        assert_eq!(lex.tally("anxious scared overwhelmed"), (0, 3));
        assert_eq!(neg.label, Polarity::Negative);

        assert_eq!(
            classify_sentiment("", &lex).unwrap_err(),
            AnalyticsError::EmptyText
        );
    }

    #[test]
    fn ties_are_positive_half() {
        let lex = LexiconClassifier::default();
        for text in ["The river.", "calm but scared"] {
            let l = classify_sentiment(text, &lex).unwrap();
            assert_eq!((l.label, l.confidence), (Polarity::Positive, 0.5), "{text}");
        }
        let l = classify_sentiment("Calm, calm, SAD.", &lex).unwrap();
        assert!((l.confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let lex = LexiconClassifier::default();
        let text = "It was warm and bright but a little lonely";
        assert_eq!(lex.classify(text).unwrap(), lex.classify(text).unwrap());
    }

    #[test]
    fn custom_lexicon() {
        let src = "# weights\nserene 2\ngloomy -1\n\n";
        let lex = LexiconClassifier::from_reader("custom", src.as_bytes()).unwrap();
        let l = lex.classify("serene yet gloomy").unwrap();
        assert_eq!(l.label, Polarity::Positive);
        assert!((l.confidence - 2.0 / 3.0).abs() < 1e-12);
        assert!(LexiconClassifier::from_reader("bad", "word".as_bytes()).is_err());
    }

    #[test]
    fn command_classifier() {
        let ok = CommandClassifier::new(
            "echo-model",
            "sh",
            vec![
                "-c".into(),
                r#"cat > /dev/null; echo '{"label":"negative","confidence":0.9}'"#.into(),
            ],
        );
        let l = classify_sentiment("anything", &ok).unwrap();
        assert_eq!((l.label, l.confidence), (Polarity::Negative, 0.9));
        assert_eq!(l.classifier_id, "echo-model");

        let missing = CommandClassifier::new("gone", "/nonexistent/classifier", vec![]);
        assert!(matches!(
            classify_sentiment("text", &missing),
            Err(AnalyticsError::ClassifierUnavailable(_))
        ));
        let failing = CommandClassifier::new("fail", "sh", vec!["-c".into(), "exit 3".into()]);
        assert!(matches!(
            classify_sentiment("text", &failing),
            Err(AnalyticsError::ClassifierUnavailable(_))
        ));
    }
}
