//! Chain grammar, parser, and validator, plus the bundled scenario pack.
//!
//! A chain file is line-oriented:
//!
//! ```text
//! chain "<name>" [sin=<SIN>] [complexity=<text>] [detect=<text>]
//! ttp <technique-id>
//! step <index> service=<CATEGORY> cap=<TAG> target=<@entity> delay=<minutes>m [task=<task-id>] [digest=<text>]
//! ```
//!
//! `#` starts a comment. Values containing spaces are double-quoted.
//! Parsed chains are immutable; concurrent reads are safe.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::atlas::TechniqueId;
use crate::catalog::{numbered_lines, standard_capability_map, CapabilityTag, ServiceCategory};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("step indices must run 1..N without gaps: expected {expected}, found {found}")]
    NoncontiguousSteps { expected: u32, found: u32 },
    #[error("capability {capability} not permitted for {category}")]
    CapabilityMismatch {
        category: ServiceCategory,
        capability: CapabilityTag,
    },
    #[error("unknown service category {0}")]
    UnknownCategory(String),
}

/// A pseudonymous target identifier; the `@` prefix is mandatory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRef(String);

impl EntityRef {
    pub fn new(id: &str) -> Result<EntityRef, ChainError> {
        if !id.starts_with('@') || id.len() < 2 {
            return Err(ChainError::Parse {
                line: 0,
                msg: format!("entity ref `{id}` must start with `@` and be non-empty"),
            });
        }
        Ok(EntityRef(id.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The seven scenario archetypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinLabel {
    Gluttony,
    Greed,
    Sloth,
    Lust,
    Pride,
    Envy,
    Wrath,
}

impl SinLabel {
    pub const ALL: [SinLabel; 7] = [
        SinLabel::Gluttony,
        SinLabel::Greed,
        SinLabel::Sloth,
        SinLabel::Lust,
        SinLabel::Pride,
        SinLabel::Envy,
        SinLabel::Wrath,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SinLabel::Gluttony => "GLUTTONY",
            SinLabel::Greed => "GREED",
            SinLabel::Sloth => "SLOTH",
            SinLabel::Lust => "LUST",
            SinLabel::Pride => "PRIDE",
            SinLabel::Envy => "ENVY",
            SinLabel::Wrath => "WRATH",
        }
    }
}

impl FromStr for SinLabel {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SinLabel::ALL
            .iter()
            .copied()
            .find(|l| l.label() == s)
            .ok_or_else(|| ChainError::Parse {
                line: 0,
                msg: format!("unknown sin label {s}"),
            })
    }
}

/// One timed, entity-targeted service call in a chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStep {
    pub index: u32,
    pub category: ServiceCategory,
    pub capability: CapabilityTag,
    pub target: EntityRef,
    /// Simulated minutes to wait before this step executes.
    pub delay: u64,
    pub task_id: Option<String>,
    pub params_digest: String,
}

/// A validated chain: an ordered, timed step sequence with metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSpec {
    pub name: String,
    pub sin_label: Option<SinLabel>,
    pub ttps: Vec<TechniqueId>,
    pub steps: Vec<ChainStep>,
    pub complexity: String,
    pub detection_difficulty: String,
}

impl ChainSpec {
    /// Distinct service categories across all steps.
    pub fn services_used(&self) -> BTreeSet<ServiceCategory> {
        self.steps.iter().map(|s| s.category).collect()
    }

    /// Total simulated span in minutes (sum of step delays).
    pub fn total_span(&self) -> u64 {
        self.steps.iter().map(|s| s.delay).sum()
    }

    /// Serialize back to the chain grammar (comments are not preserved).
    pub fn to_text(&self) -> String {
        let mut out = format!("chain \"{}\"", self.name);
        if let Some(sin) = self.sin_label {
            out.push_str(&format!(" sin={}", sin.label()));
        }
        if !self.complexity.is_empty() {
            out.push_str(&format!(" complexity=\"{}\"", self.complexity));
        }
        if !self.detection_difficulty.is_empty() {
            out.push_str(&format!(" detect=\"{}\"", self.detection_difficulty));
        }
        out.push('\n');
        for ttp in &self.ttps {
            out.push_str(&format!("ttp {ttp}\n"));
        }
        for step in &self.steps {
            out.push_str(&format!(
                "step {} service={} cap={} target={} delay={}m",
                step.index, step.category, step.capability, step.target, step.delay
            ));
            if let Some(task) = &step.task_id {
                out.push_str(&format!(" task={task}"));
            }
            if !step.params_digest.is_empty() {
                out.push_str(&format!(" digest={}", step.params_digest));
            }
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

/// Split a line into tokens; `key="quoted value"` stays one token with the
/// quotes stripped.
fn tokenize(line: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            c if c.is_whitespace() && !in_quotes => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if in_quotes {
        return Err("unterminated quote".to_string());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    Ok(tokens)
}

fn split_attr(token: &str) -> Option<(&str, &str)> {
    token.split_once('=')
}

/// Parse and validate one chain from its text form.
pub fn parse_chain(source: &str) -> Result<ChainSpec, ChainError> {
    let capability_map = standard_capability_map();
    let mut lines = numbered_lines(source);

    let (line_no, header) = lines.next().ok_or(ChainError::Parse {
        line: 1,
        msg: "empty chain: missing `chain \"<name>\"` header".into(),
    })?;
    let tokens = tokenize(header).map_err(|msg| ChainError::Parse { line: line_no, msg })?;
    if tokens.len() < 2 || tokens[0] != "chain" {
        return Err(ChainError::Parse {
            line: line_no,
            msg: format!("expected `chain \"<name>\" ...`, got `{header}`"),
        });
    }
    let name = tokens[1].clone();
    let mut sin_label = None;
    let mut complexity = String::new();
    let mut detection_difficulty = String::new();
    for token in &tokens[2..] {
        let (key, value) = split_attr(token).ok_or_else(|| ChainError::Parse {
            line: line_no,
            msg: format!("expected key=value, got `{token}`"),
        })?;
        match key {
            "sin" => {
                sin_label = Some(value.parse().map_err(|_| ChainError::Parse {
                    line: line_no,
                    msg: format!("unknown sin label {value}"),
                })?)
            }
            "complexity" => complexity = value.to_string(),
            "detect" => detection_difficulty = value.to_string(),
            other => {
                return Err(ChainError::Parse {
                    line: line_no,
                    msg: format!("unknown chain attribute {other}"),
                })
            }
        }
    }

    let mut ttps = Vec::new();
    let mut steps: Vec<ChainStep> = Vec::new();
    for (line_no, line) in lines {
        let tokens = tokenize(line).map_err(|msg| ChainError::Parse { line: line_no, msg })?;
        match tokens[0].as_str() {
            "ttp" => {
                if steps.len() > 0 {
                    return Err(ChainError::Parse {
                        line: line_no,
                        msg: "ttp lines must precede step lines".into(),
                    });
                }
                if tokens.len() != 2 {
                    return Err(ChainError::Parse {
                        line: line_no,
                        msg: "expected `ttp <technique-id>`".into(),
                    });
                }
                let id: TechniqueId = tokens[1].parse().map_err(|_| ChainError::Parse {
                    line: line_no,
                    msg: format!("malformed technique id {}", tokens[1]),
                })?;
                ttps.push(id);
            }
            "step" => {
                if tokens.len() < 2 {
                    return Err(ChainError::Parse {
                        line: line_no,
                        msg: "expected `step <index> key=value...`".into(),
                    });
                }
                let index: u32 = tokens[1].parse().map_err(|_| ChainError::Parse {
                    line: line_no,
                    msg: format!("bad step index {}", tokens[1]),
                })?;
                let expected = steps.len() as u32 + 1;
                if index != expected {
                    return Err(ChainError::NoncontiguousSteps {
                        expected,
                        found: index,
                    });
                }
                let mut category = None;
                let mut capability = None;
                let mut target = None;
                let mut delay = None;
                let mut task_id = None;
                let mut digest = String::new();
                for token in &tokens[2..] {
                    let (key, value) = split_attr(token).ok_or_else(|| ChainError::Parse {
                        line: line_no,
                        msg: format!("expected key=value, got `{token}`"),
                    })?;
                    match key {
                        "service" => {
                            category = Some(value.parse::<ServiceCategory>().map_err(|_| {
                                ChainError::UnknownCategory(value.to_string())
                            })?)
                        }
                        "cap" => {
                            capability =
                                Some(value.parse::<CapabilityTag>().map_err(|_| {
                                    ChainError::Parse {
                                        line: line_no,
                                        msg: format!("unknown capability tag {value}"),
                                    }
                                })?)
                        }
                        "target" => {
                            target = Some(EntityRef::new(value).map_err(|_| ChainError::Parse {
                                line: line_no,
                                msg: format!("bad entity ref {value}"),
                            })?)
                        }
                        "delay" => {
                            let minutes =
                                value.strip_suffix('m').ok_or_else(|| ChainError::Parse {
                                    line: line_no,
                                    msg: format!("delay must end in `m`, got {value}"),
                                })?;
                            delay = Some(minutes.parse::<u64>().map_err(|_| {
                                ChainError::Parse {
                                    line: line_no,
                                    msg: format!("bad delay {value}"),
                                }
                            })?);
                        }
                        "task" => task_id = Some(value.to_string()),
                        "digest" => digest = value.to_string(),
                        other => {
                            return Err(ChainError::Parse {
                                line: line_no,
                                msg: format!("unknown step attribute {other}"),
                            })
                        }
                    }
                }
                let missing = |what: &str| ChainError::Parse {
                    line: line_no,
                    msg: format!("step {index} missing {what}"),
                };
                let category = category.ok_or_else(|| missing("service="))?;
                let capability = capability.ok_or_else(|| missing("cap="))?;
                let target = target.ok_or_else(|| missing("target="))?;
                let delay = delay.ok_or_else(|| missing("delay="))?;
                if !capability_map[&category].contains(&capability) {
                    return Err(ChainError::CapabilityMismatch {
                        category,
                        capability,
                    });
                }
                steps.push(ChainStep {
                    index,
                    category,
                    capability,
                    target,
                    delay,
                    task_id,
                    params_digest: digest,
                });
            }
            other => {
                return Err(ChainError::Parse {
                    line: line_no,
                    msg: format!("unknown directive {other}"),
                })
            }
        }
    }

    if steps.is_empty() {
        return Err(ChainError::Parse {
            line: 0,
            msg: format!("chain {name} has no steps"),
        });
    }

    Ok(ChainSpec {
        name,
        sin_label,
        ttps,
        steps,
        complexity,
        detection_difficulty,
    })
}

// ---------------------------------------------------------------------------
// Bundled scenario pack
// ---------------------------------------------------------------------------

/// Raw text of the seven bundled chains, in canonical order.
pub const CANONICAL_CHAIN_SOURCES: [(&str, &str); 7] = [
    ("gluttony", include_str!("../data/chains/gluttony.chain")),
    ("greed", include_str!("../data/chains/greed.chain")),
    ("sloth", include_str!("../data/chains/sloth.chain")),
    ("lust", include_str!("../data/chains/lust.chain")),
    ("pride", include_str!("../data/chains/pride.chain")),
    ("envy", include_str!("../data/chains/envy.chain")),
    ("wrath", include_str!("../data/chains/wrath.chain")),
];

/// Raw text of the four-step surveillance example chain.
pub const SURVEILLANCE_CHAIN_SOURCE: &str = include_str!("../data/chains/surveillance.chain");

/// The seven bundled chains, in canonical order.
pub fn canonical_pack() -> Vec<ChainSpec> {
    CANONICAL_CHAIN_SOURCES
        .iter()
        .map(|(name, source)| {
            let chain = parse_chain(source).expect("bundled chains are valid");
            debug_assert_eq!(&chain.name, name);
            chain
        })
        .collect()
}

/// The four-step single-target surveillance chain.
pub fn surveillance_chain() -> ChainSpec {
    parse_chain(SURVEILLANCE_CHAIN_SOURCE).expect("bundled chain is valid")
}
