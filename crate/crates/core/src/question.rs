use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    Categorical,
    #[default]
    OpenEnded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub answer_mode: AnswerMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

impl Question {
    pub fn open_ended(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        Self::new(id, text, AnswerMode::OpenEnded, None)
    }

    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        answer_mode: AnswerMode,
        options: Option<Vec<String>>,
    ) -> Result<Self> {
        let q = Self { id: id.into(), text: text.into(), answer_mode, options };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidQuestion("text is empty".into()));
        }
        let has_options = self.options.as_ref().is_some_and(|o| !o.is_empty());
        match self.answer_mode {
            AnswerMode::Categorical if !has_options => {
                Err(Error::InvalidQuestion("categorical question without options".into()))
            }
            AnswerMode::OpenEnded if self.options.is_some() => {
                Err(Error::InvalidQuestion("open-ended question with options".into()))
            }
            _ => Ok(()),
        }
    }

    /// The text shown to the model; categorical options are listed after the question.
    pub fn prompt_text(&self) -> String {
        match (&self.answer_mode, &self.options) {
            (AnswerMode::Categorical, Some(options)) => {
                let mut s = self.text.clone();
                s.push_str("\nOptions: ");
                s.push_str(&options.join("; "));
                s
            }
            _ => self.text.to_string(),
        }
    }
}

/// One line of a benchmark dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub answerable: bool,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default)]
    pub answer_mode: AnswerMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

impl DatasetRecord {
    pub fn to_question(&self) -> Result<Question> {
        Question::new(self.id.clone(), self.question.clone(), self.answer_mode, self.options.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn invariants() {
        assert!(Question::open_ended("q", "   ").is_err());
        assert!(Question::new("q", "Pick", AnswerMode::Categorical, None).is_err());
        assert!(Question::new("q", "Pick", AnswerMode::Categorical, Some(vec![])).is_err());
        assert!(Question::new("q", "Why", AnswerMode::OpenEnded, Some(vec!["a".into()])).is_err());
        let q = Question::new("q", "Pick", AnswerMode::Categorical, Some(vec!["A".into(), "B".into()])).unwrap();
        assert_eq!(q.prompt_text(), "Pick\nOptions: A; B");
    }
}
