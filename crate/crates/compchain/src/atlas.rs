//! Registry of adversarial-AI techniques and the mapping from attack chains
//! to the technique sets they exercise.
//!
//! Immutable after load; concurrent reads are safe.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::catalog::numbered_lines;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AtlasError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown technique {0}")]
    UnknownTechnique(String),
    #[error("unknown chain {0}")]
    UnknownChain(String),
}

/// A technique identifier of the form `AML.T` + 4 digits + optional `.` + 3 digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TechniqueId(String);

impl TechniqueId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TechniqueId {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || AtlasError::Parse {
            line: 0,
            msg: format!("malformed technique id {s}"),
        };
        let digits = s.strip_prefix("AML.T").ok_or_else(malformed)?;
        let (major, minor) = match digits.split_once('.') {
            Some((major, minor)) => (major, Some(minor)),
            None => (digits, None),
        };
        let all_digits = |part: &str| part.chars().all(|c| c.is_ascii_digit());
        if major.len() != 4 || !all_digits(major) {
            return Err(malformed());
        }
        if let Some(minor) = minor {
            if minor.len() != 3 || !all_digits(minor) {
                return Err(malformed());
            }
        }
        Ok(TechniqueId(s.to_string()))
    }
}

/// Which phase of an attack a technique belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Reconnaissance,
    ResourceDevelopment,
    Execution,
    Impact,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Reconnaissance => "RECONNAISSANCE",
            Phase::ResourceDevelopment => "RESOURCE_DEVELOPMENT",
            Phase::Execution => "EXECUTION",
            Phase::Impact => "IMPACT",
        }
    }
}

impl FromStr for Phase {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RECONNAISSANCE" => Ok(Phase::Reconnaissance),
            "RESOURCE_DEVELOPMENT" => Ok(Phase::ResourceDevelopment),
            "EXECUTION" => Ok(Phase::Execution),
            "IMPACT" => Ok(Phase::Impact),
            other => Err(AtlasError::Parse {
                line: 0,
                msg: format!("unknown phase {other}"),
            }),
        }
    }
}

/// One registered technique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Technique {
    pub id: TechniqueId,
    pub name: String,
    pub phase: Phase,
}

/// A named chain's ordered technique set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtpMapping {
    pub chain_name: String,
    pub techniques: Vec<TechniqueId>,
}

/// The canonical chain-to-technique table, as shipped with the scenario pack.
const CANONICAL_MAPPINGS: [(&str, &[&str]); 7] = [
    ("gluttony", &["AML.T0002", "AML.T0020", "AML.T0048.003"]),
    ("greed", &["AML.T0043", "AML.T0048.000", "AML.T0051"]),
    ("sloth", &["AML.T0010", "AML.T0041", "AML.T0070"]),
    ("lust", &["AML.T0052", "AML.T0043", "AML.T0048.003"]),
    ("pride", &["AML.T0048.001", "AML.T0067", "AML.T0031"]),
    ("envy", &["AML.T0048.002", "AML.T0031"]),
    ("wrath", &["AML.T0048", "AML.T0051"]),
];

const REGISTRY_DATA: &str = include_str!("../data/atlas_registry.txt");

/// Technique registry plus chain mappings.
#[derive(Debug, Clone)]
pub struct AtlasRegistry {
    techniques: BTreeMap<TechniqueId, Technique>,
    mappings: BTreeMap<String, TtpMapping>,
}

impl AtlasRegistry {
    /// The bundled registry with the canonical chain mappings preloaded.
    pub fn standard() -> AtlasRegistry {
        let mut registry =
            AtlasRegistry::parse(REGISTRY_DATA).expect("bundled registry is valid");
        for (chain, ids) in CANONICAL_MAPPINGS {
            let techniques = ids
                .iter()
                .map(|id| id.parse().expect("canonical ids are well-formed"))
                .collect();
            registry
                .register_chain(chain, techniques)
                .expect("canonical mappings resolve");
        }
        registry
    }

    /// Parse a registry file: header `atlas v1`, then
    /// `ttp <id> "<name>" <PHASE>` lines. `#` comments allowed.
    pub fn parse(source: &str) -> Result<AtlasRegistry, AtlasError> {
        let mut lines = numbered_lines(source);
        let (line_no, header) = lines.next().ok_or(AtlasError::Parse {
            line: 1,
            msg: "empty registry: missing `atlas v1` header".into(),
        })?;
        if header != "atlas v1" {
            return Err(AtlasError::Parse {
                line: line_no,
                msg: format!("expected `atlas v1` header, got `{header}`"),
            });
        }
        let mut techniques = BTreeMap::new();
        for (line_no, line) in lines {
            let rest = line.strip_prefix("ttp ").ok_or_else(|| AtlasError::Parse {
                line: line_no,
                msg: format!("expected `ttp <id> \"<name>\" <PHASE>`, got `{line}`"),
            })?;
            let (id_str, rest) = rest.split_once(' ').ok_or_else(|| AtlasError::Parse {
                line: line_no,
                msg: "missing technique name".into(),
            })?;
            let id: TechniqueId = id_str.parse().map_err(|_| AtlasError::Parse {
                line: line_no,
                msg: format!("malformed technique id {id_str}"),
            })?;
            let rest = rest.trim();
            let name_end = rest
                .strip_prefix('"')
                .and_then(|r| r.find('"'))
                .ok_or_else(|| AtlasError::Parse {
                    line: line_no,
                    msg: "technique name must be double-quoted".into(),
                })?;
            let name = rest[1..=name_end].to_string();
            if name.is_empty() {
                return Err(AtlasError::Parse {
                    line: line_no,
                    msg: "technique name must be non-empty".into(),
                });
            }
            let phase: Phase =
                rest[name_end + 2..]
                    .trim()
                    .parse()
                    .map_err(|_| AtlasError::Parse {
                        line: line_no,
                        msg: format!("unknown phase in `{line}`"),
                    })?;
            techniques.insert(id.clone(), Technique { id, name, phase });
        }
        Ok(AtlasRegistry {
            techniques,
            mappings: BTreeMap::new(),
        })
    }

    /// Look up a technique record by id.
    pub fn lookup(&self, id: &TechniqueId) -> Result<&Technique, AtlasError> {
        self.techniques
            .get(id)
            .ok_or_else(|| AtlasError::UnknownTechnique(id.to_string()))
    }

    /// The technique set for a canonical or user-registered chain.
    pub fn map_chain(&self, chain_name: &str) -> Result<&TtpMapping, AtlasError> {
        self.mappings
            .get(chain_name)
            .ok_or_else(|| AtlasError::UnknownChain(chain_name.to_string()))
    }

    /// Register a chain's technique set; every id must resolve.
    pub fn register_chain(
        &mut self,
        chain_name: &str,
        techniques: Vec<TechniqueId>,
    ) -> Result<(), AtlasError> {
        if techniques.is_empty() {
            return Err(AtlasError::Parse {
                line: 0,
                msg: format!("chain {chain_name} has no techniques"),
            });
        }
        for id in &techniques {
            self.lookup(id)?;
        }
        self.mappings.insert(
            chain_name.to_string(),
            TtpMapping {
                chain_name: chain_name.to_string(),
                techniques,
            },
        );
        Ok(())
    }

    pub fn techniques(&self) -> impl Iterator<Item = &Technique> {
        self.techniques.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> TechniqueId {
        s.parse().unwrap()
    }

    #[test]
    fn id_pattern_enforced() {
        assert!("AML.T0051".parse::<TechniqueId>().is_ok());
        assert!("AML.T0048.003".parse::<TechniqueId>().is_ok());
        assert!("AML.T51".parse::<TechniqueId>().is_err());
        assert!("AML.T00511".parse::<TechniqueId>().is_err());
        assert!("AML.T0048.03".parse::<TechniqueId>().is_err());
        assert!("T0051".parse::<TechniqueId>().is_err());
        assert!("aml.t0051".parse::<TechniqueId>().is_err());
    }

    #[test]
    fn lookup_known_and_unknown() {
        let registry = AtlasRegistry::standard();
        assert_eq!(
            registry.lookup(&id("AML.T0051")).unwrap().name,
            "LLM Prompt Injection"
        );
        assert_eq!(
            registry.lookup(&id("AML.T0010")).unwrap().name,
            "AI Supply Chain Compromise"
        );
        assert_eq!(
            registry.lookup(&id("AML.T9999")),
            Err(AtlasError::UnknownTechnique("AML.T9999".to_string()))
        );
    }

    #[test]
    fn registry_is_complete() {
        // Every technique id the scenario pack can reference must resolve.
        let expected = [
            "AML.T0000", "AML.T0001", "AML.T0002", "AML.T0003", "AML.T0010",
            "AML.T0016", "AML.T0017", "AML.T0018", "AML.T0019", "AML.T0020",
            "AML.T0024", "AML.T0025", "AML.T0026", "AML.T0028", "AML.T0030",
            "AML.T0031", "AML.T0033", "AML.T0041", "AML.T0043", "AML.T0048",
            "AML.T0048.000", "AML.T0048.001", "AML.T0048.002", "AML.T0048.003",
            "AML.T0051", "AML.T0052", "AML.T0067", "AML.T0070",
        ];
        let registry = AtlasRegistry::standard();
        for raw in expected {
            assert!(registry.lookup(&id(raw)).is_ok(), "{raw} must resolve");
        }
        assert_eq!(registry.techniques().count(), expected.len());
    }

    #[test]
    fn phases_follow_the_grouping() {
        let registry = AtlasRegistry::standard();
        let phase = |raw: &str| registry.lookup(&id(raw)).unwrap().phase;
        assert_eq!(phase("AML.T0000"), Phase::Reconnaissance);
        assert_eq!(phase("AML.T0003"), Phase::Reconnaissance);
        assert_eq!(phase("AML.T0016"), Phase::ResourceDevelopment);
        assert_eq!(phase("AML.T0017"), Phase::ResourceDevelopment);
        assert_eq!(phase("AML.T0043"), Phase::Execution);
        assert_eq!(phase("AML.T0051"), Phase::Execution);
        assert_eq!(phase("AML.T0048"), Phase::Impact);
        assert_eq!(phase("AML.T0048.000"), Phase::Impact);
        assert_eq!(phase("AML.T0048.003"), Phase::Impact);
    }

    #[test]
    fn canonical_mappings_exact() {
        let registry = AtlasRegistry::standard();
        let expect = |chain: &str, ids: &[&str]| {
            let mapping = registry.map_chain(chain).unwrap();
            let got: Vec<&str> = mapping.techniques.iter().map(|t| t.as_str()).collect();
            assert_eq!(got, ids, "mapping for {chain}");
        };
        expect("gluttony", &["AML.T0002", "AML.T0020", "AML.T0048.003"]);
        expect("greed", &["AML.T0043", "AML.T0048.000", "AML.T0051"]);
        expect("sloth", &["AML.T0010", "AML.T0041", "AML.T0070"]);
        expect("lust", &["AML.T0052", "AML.T0043", "AML.T0048.003"]);
        expect("pride", &["AML.T0048.001", "AML.T0067", "AML.T0031"]);
        expect("envy", &["AML.T0048.002", "AML.T0031"]);
        expect("wrath", &["AML.T0048", "AML.T0051"]);
    }

    #[test]
    fn unknown_chain_rejected() {
        let registry = AtlasRegistry::standard();
        assert_eq!(
            registry.map_chain("unknown_chain").err(),
            Some(AtlasError::UnknownChain("unknown_chain".to_string()))
        );
    }

    #[test]
    fn user_chains_can_register() {
        let mut registry = AtlasRegistry::standard();
        registry
            .register_chain("custom", vec![id("AML.T0051")])
            .unwrap();
        assert!(registry.map_chain("custom").is_ok());
        assert!(registry
            .register_chain("bad", vec![id("AML.T9999")])
            .is_err());
    }
}
