use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary offensive-language label. `Not` is class 0, `Off` class 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "NOT")]
    Not,
    #[serde(rename = "OFF")]
    Off,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Not, Label::Off];

    pub fn index(self) -> usize {
        match self {
            Label::Not => 0,
            Label::Off => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Not),
            1 => Some(Label::Off),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Not => "NOT",
            Label::Off => "OFF",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Not => Label::Off,
            Label::Off => Label::Not,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NOT" => Ok(Label::Not),
            "OFF" => Ok(Label::Off),
            other => Err(format!("expected NOT or OFF, got `{other}`")),
        }
    }
}
