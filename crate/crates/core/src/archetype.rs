use serde::{Deserialize, Serialize};

/// Trust-dynamics archetypes found by clustering participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    /// Well predicted, generally high trust.
    BayesianDecisionMaker,
    /// Rapidly changing trust, poorly predicted.
    Oscillator,
    /// Well predicted, generally low trust.
    Disbeliever,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [
        Archetype::BayesianDecisionMaker,
        Archetype::Oscillator,
        Archetype::Disbeliever,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::BayesianDecisionMaker => "bayesian_decision_maker",
            Archetype::Oscillator => "oscillator",
            Archetype::Disbeliever => "disbeliever",
        }
    }
}

impl std::fmt::Display for Archetype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Archetype {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| crate::Error::invalid(format!("unknown archetype {s:?}")))
    }
}
