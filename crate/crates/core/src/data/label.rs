use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The six emotion classes in label-id order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Happiness = 0,
    Surprise = 1,
    Sadness = 2,
    Anger = 3,
    Disgust = 4,
    Fear = 5,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 6] =
        [ClassLabel::Happiness, ClassLabel::Surprise, ClassLabel::Sadness, ClassLabel::Anger, ClassLabel::Disgust, ClassLabel::Fear];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL.get(id).copied().ok_or(Error::Label(id))
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Happiness => "happiness",
            ClassLabel::Surprise => "surprise",
            ClassLabel::Sadness => "sadness",
            ClassLabel::Anger => "anger",
            ClassLabel::Disgust => "disgust",
            ClassLabel::Fear => "fear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name().eq_ignore_ascii_case(name.trim()))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<usize> for ClassLabel {
    type Error = Error;

    fn try_from(id: usize) -> Result<Self> {
        Self::from_id(id)
    }
}
