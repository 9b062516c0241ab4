use std::path::Path;

use super::ModelWeights;
use crate::error::{Error, Result};

/// Token strings indexed by vocabulary id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self { tokens })
    }

    /// Parses either a JSON array of strings or newline-delimited tokens.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        if trimmed.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if trimmed.starts_with('[') {
            let tokens: Vec<String> = serde_json::from_str(text).map_err(|e| Error::malformed("vocabulary JSON", e))?;
            return Self::new(tokens);
        }
        let tokens = text
            .strip_suffix('\n')
            .unwrap_or(text)
            .split('\n')
            .map(|t| t.strip_suffix('\r').unwrap_or(t).to_string())
            .collect();
        Self::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Checks the vocabulary length against the model's unembedding.
    /// Without an unembedding only a warning is logged.
    pub fn check_against(&self, model: &ModelWeights) -> Result<()> {
        match model.unembed() {
            Some(u) if u.rows() != self.len() => Err(Error::VocabMismatch {
                vocab: self.len(),
                unembed: u.rows(),
            }),
            Some(_) => Ok(()),
            None => {
                if model.meta().d_vocab != 0 && model.meta().d_vocab != self.len() {
                    log::warn!(
                        "vocabulary has {} tokens but the embedding has {} rows",
                        self.len(),
                        model.meta().d_vocab
                    );
                }
                Ok(())
            }
        }
    }
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::parse(&text)
}
