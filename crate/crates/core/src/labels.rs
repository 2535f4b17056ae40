//! Stance and party-affinity label enums with tolerant parsing.
//!
//! Label strings arrive from hand-edited spreadsheets and from model
//! replies, so parsing accepts capitalization variants, the `de ` prefix
//! used by the annotation tables ("de apoyo" vs "Apoyo") and unaccented
//! spellings.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("unknown stance label: {0:?}")]
    UnknownStance(String),
    #[error("unknown party label: {0:?}")]
    UnknownParty(String),
}

/// The attitude a comment expresses toward its subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StanceLabel {
    Apoyo,
    Critica,
    Acusacion,
    Rechazo,
    Admiracion,
    Pregunta,
    Informacion,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 7] = [
        StanceLabel::Apoyo,
        StanceLabel::Critica,
        StanceLabel::Acusacion,
        StanceLabel::Rechazo,
        StanceLabel::Admiracion,
        StanceLabel::Pregunta,
        StanceLabel::Informacion,
    ];

    /// Canonical display string as it appears in the annotation tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            StanceLabel::Apoyo => "de apoyo",
            StanceLabel::Critica => "de crítica",
            StanceLabel::Acusacion => "de acusación",
            StanceLabel::Rechazo => "de rechazo",
            StanceLabel::Admiracion => "de admiración",
            StanceLabel::Pregunta => "Pregunta",
            StanceLabel::Informacion => "Información",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for StanceLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_lowercase();
        let core = lower.strip_prefix("de ").unwrap_or(&lower).trim();
        match core {
            "apoyo" => Ok(StanceLabel::Apoyo),
            "crítica" | "critica" => Ok(StanceLabel::Critica),
            "acusación" | "acusacion" => Ok(StanceLabel::Acusacion),
            "rechazo" => Ok(StanceLabel::Rechazo),
            "admiración" | "admiracion" => Ok(StanceLabel::Admiracion),
            "pregunta" => Ok(StanceLabel::Pregunta),
            "información" | "informacion" => Ok(StanceLabel::Informacion),
            _ => Err(LabelError::UnknownStance(s.to_string())),
        }
    }
}

/// Party affinity, with `Indeterminado` as the sentinel for comments whose
/// alignment cannot be established.
///
/// The variant order is the canonical ordering used whenever parties are
/// rendered as a sequence (prompt context docs, matrix rows, table rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyLabel {
    #[serde(rename = "LFI")]
    Lfi,
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "RN")]
    Rn,
    #[serde(rename = "LREM")]
    Lrem,
    #[serde(rename = "LR")]
    Lr,
    Indeterminado,
}

impl PartyLabel {
    pub const ALL: [PartyLabel; 6] = [
        PartyLabel::Lfi,
        PartyLabel::Ps,
        PartyLabel::Rn,
        PartyLabel::Lrem,
        PartyLabel::Lr,
        PartyLabel::Indeterminado,
    ];

    /// Parties proper, excluding the `Indeterminado` sentinel.
    pub const PARTIES: [PartyLabel; 5] = [
        PartyLabel::Lfi,
        PartyLabel::Ps,
        PartyLabel::Rn,
        PartyLabel::Lrem,
        PartyLabel::Lr,
    ];

    /// Short code, used for file names and compact table output.
    pub fn code(&self) -> &'static str {
        match self {
            PartyLabel::Lfi => "LFI",
            PartyLabel::Ps => "PS",
            PartyLabel::Rn => "RN",
            PartyLabel::Lrem => "LREM",
            PartyLabel::Lr => "LR",
            PartyLabel::Indeterminado => "Indeterminado",
        }
    }

    /// Canonical display name as it appears in the annotation tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            PartyLabel::Lfi => "Francia Insumisa (LFI)",
            PartyLabel::Ps => "Partido Socialista (PS)",
            PartyLabel::Rn => "Reagrupación Nacional (RN)",
            PartyLabel::Lrem => "La République En Marche! (LREM)",
            PartyLabel::Lr => "Los Republicanos (LR)",
            PartyLabel::Indeterminado => "Indeterminado",
        }
    }
}

impl fmt::Display for PartyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for PartyLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let lower = trimmed.to_lowercase();
        // A parenthesized code anywhere in the string wins, e.g.
        // "Francia Insumisa (LFI)" or a model's free-form "(RN)".
        for party in PartyLabel::PARTIES {
            let code = format!("({})", party.code().to_lowercase());
            if lower.contains(&code) {
                return Ok(party);
            }
        }
        match lower.as_str() {
            "lfi" => Ok(PartyLabel::Lfi),
            "ps" => Ok(PartyLabel::Ps),
            "rn" => Ok(PartyLabel::Rn),
            "lrem" => Ok(PartyLabel::Lrem),
            "lr" => Ok(PartyLabel::Lr),
            "indeterminado" => Ok(PartyLabel::Indeterminado),
            _ => Err(LabelError::UnknownParty(s.to_string())),
        }
    }
}
