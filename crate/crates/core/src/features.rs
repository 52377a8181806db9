//! Workpiece features produced by skills.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A property a workpiece acquires when a production or inspection skill runs on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    RawChecked,
    FaultChecked,
    QualityTested,
    Drilled,
    Milled,
    Polished,
    Coated,
    PaintPattern,
    LaserPattern,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 9] = [
        FeatureKind::RawChecked,
        FeatureKind::FaultChecked,
        FeatureKind::QualityTested,
        FeatureKind::Drilled,
        FeatureKind::Milled,
        FeatureKind::Polished,
        FeatureKind::Coated,
        FeatureKind::PaintPattern,
        FeatureKind::LaserPattern,
    ];

    /// Features that change the product itself, as opposed to checks on it.
    pub const PRODUCTION: [FeatureKind; 6] = [
        FeatureKind::Drilled,
        FeatureKind::Milled,
        FeatureKind::Polished,
        FeatureKind::Coated,
        FeatureKind::PaintPattern,
        FeatureKind::LaserPattern,
    ];

    pub const CHECKS: [FeatureKind; 3] = [
        FeatureKind::RawChecked,
        FeatureKind::FaultChecked,
        FeatureKind::QualityTested,
    ];

    pub fn is_production(self) -> bool {
        !self.is_check()
    }

    pub fn is_check(self) -> bool {
        matches!(
            self,
            FeatureKind::RawChecked | FeatureKind::FaultChecked | FeatureKind::QualityTested
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::RawChecked => "raw_checked",
            FeatureKind::FaultChecked => "fault_checked",
            FeatureKind::QualityTested => "quality_tested",
            FeatureKind::Drilled => "drilled",
            FeatureKind::Milled => "milled",
            FeatureKind::Polished => "polished",
            FeatureKind::Coated => "coated",
            FeatureKind::PaintPattern => "paint_pattern",
            FeatureKind::LaserPattern => "laser_pattern",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature kind {0:?}")]
pub struct UnknownFeature(pub String);

impl FromStr for FeatureKind {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownFeature(s.to_string()))
    }
}

/// A feature together with an optional free-text qualifier such as
/// "backside customer logo".
///
/// Deserializes from either a bare kind string or `{"kind": ..., "detail": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "FeatureRepr")]
pub struct Feature {
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Feature {
    pub fn new(kind: FeatureKind) -> Self {
        Self { kind, detail: None }
    }

    pub fn with_detail(kind: FeatureKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: Some(detail.into()),
        }
    }
}

impl From<FeatureKind> for Feature {
    fn from(kind: FeatureKind) -> Self {
        Feature::new(kind)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FeatureRepr {
    Bare(FeatureKind),
    Full {
        kind: FeatureKind,
        #[serde(default)]
        detail: Option<String>,
    },
}

impl From<FeatureRepr> for Feature {
    fn from(repr: FeatureRepr) -> Self {
        match repr {
            FeatureRepr::Bare(kind) => Feature::new(kind),
            FeatureRepr::Full { kind, detail } => Feature { kind, detail },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bare_and_detailed_forms() {
        let bare: Feature = serde_json::from_str("\"drilled\"").unwrap();
        assert_eq!(bare, Feature::new(FeatureKind::Drilled));
        let full: Feature =
            serde_json::from_str(r#"{"kind":"paint_pattern","detail":"logo"}"#).unwrap();
        assert_eq!(full, Feature::with_detail(FeatureKind::PaintPattern, "logo"));
    }

    #[test]
    fn name_round_trip() {
        for kind in FeatureKind::ALL {
            assert_eq!(kind.as_str().parse::<FeatureKind>().unwrap(), kind);
        }
        assert!("sanded".parse::<FeatureKind>().is_err());
    }

    #[test]
    fn production_and_checks_partition_all() {
        assert_eq!(FeatureKind::PRODUCTION.len() + FeatureKind::CHECKS.len(), 9);
        assert!(FeatureKind::PRODUCTION.iter().all(|k| k.is_production()));
        assert!(FeatureKind::CHECKS.iter().all(|k| k.is_check()));
    }
}
