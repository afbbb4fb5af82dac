//! Task universe: service categories, capability tags, the task catalog,
//! combination enumeration, and the combination danger matrix.
//!
//! All values are immutable after load and safe to share across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Errors raised by catalog parsing, enumeration, and danger scoring.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate task id {0}")]
    DuplicateId(String),
    #[error("unknown service category {0}")]
    UnknownCategory(String),
    #[error("combination size {0} out of range (2..=6)")]
    OutOfRange(usize),
    #[error("no danger entry for pair {0}")]
    MissingPair(String),
}

// ---------------------------------------------------------------------------
// Categories and capabilities
// ---------------------------------------------------------------------------

/// One of the six mocked service categories.
///
/// Variants are declared in alphabetical label order; this is the canonical
/// ordering used by [`CombinationKey`] and combination enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ServiceCategory {
    BrowserAutomation,
    FinancialAnalysis,
    LocationServices,
    Modeling3d,
    RepositoryManagement,
    WebSearch,
}

impl ServiceCategory {
    /// All six categories in canonical order.
    pub const ALL: [ServiceCategory; 6] = [
        ServiceCategory::BrowserAutomation,
        ServiceCategory::FinancialAnalysis,
        ServiceCategory::LocationServices,
        ServiceCategory::Modeling3d,
        ServiceCategory::RepositoryManagement,
        ServiceCategory::WebSearch,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ServiceCategory::BrowserAutomation => "BROWSER_AUTOMATION",
            ServiceCategory::FinancialAnalysis => "FINANCIAL_ANALYSIS",
            ServiceCategory::LocationServices => "LOCATION_SERVICES",
            ServiceCategory::Modeling3d => "MODELING_3D",
            ServiceCategory::RepositoryManagement => "REPOSITORY_MANAGEMENT",
            ServiceCategory::WebSearch => "WEB_SEARCH",
        }
    }
}

impl fmt::Display for ServiceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ServiceCategory {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ServiceCategory::ALL
            .iter()
            .copied()
            .find(|c| c.label() == s)
            .ok_or_else(|| CatalogError::UnknownCategory(s.to_string()))
    }
}

/// A discrete behavior a task can exercise against its service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CapabilityTag {
    InfoGather,
    Scrape,
    FormFill,
    Transact,
    MarketData,
    Geolocate,
    Route,
    DeployCode,
    ReviewCode,
    RenderMedia,
    Publish,
    Message,
}

impl CapabilityTag {
    pub const ALL: [CapabilityTag; 12] = [
        CapabilityTag::InfoGather,
        CapabilityTag::Scrape,
        CapabilityTag::FormFill,
        CapabilityTag::Transact,
        CapabilityTag::MarketData,
        CapabilityTag::Geolocate,
        CapabilityTag::Route,
        CapabilityTag::DeployCode,
        CapabilityTag::ReviewCode,
        CapabilityTag::RenderMedia,
        CapabilityTag::Publish,
        CapabilityTag::Message,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CapabilityTag::InfoGather => "INFO_GATHER",
            CapabilityTag::Scrape => "SCRAPE",
            CapabilityTag::FormFill => "FORM_FILL",
            CapabilityTag::Transact => "TRANSACT",
            CapabilityTag::MarketData => "MARKET_DATA",
            CapabilityTag::Geolocate => "GEOLOCATE",
            CapabilityTag::Route => "ROUTE",
            CapabilityTag::DeployCode => "DEPLOY_CODE",
            CapabilityTag::ReviewCode => "REVIEW_CODE",
            CapabilityTag::RenderMedia => "RENDER_MEDIA",
            CapabilityTag::Publish => "PUBLISH",
            CapabilityTag::Message => "MESSAGE",
        }
    }
}

impl fmt::Display for CapabilityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CapabilityTag {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CapabilityTag::ALL
            .iter()
            .copied()
            .find(|t| t.label() == s)
            .ok_or_else(|| CatalogError::Parse {
                line: 0,
                msg: format!("unknown capability tag {s}"),
            })
    }
}

/// The capability alphabet each service category exposes.
pub fn standard_capability_map() -> BTreeMap<ServiceCategory, BTreeSet<CapabilityTag>> {
    use CapabilityTag::*;
    use ServiceCategory::*;
    let mut map = BTreeMap::new();
    map.insert(WebSearch, BTreeSet::from([InfoGather]));
    map.insert(
        BrowserAutomation,
        BTreeSet::from([Scrape, FormFill, Publish, Message, InfoGather]),
    );
    map.insert(FinancialAnalysis, BTreeSet::from([MarketData, Transact]));
    map.insert(LocationServices, BTreeSet::from([Geolocate, Route]));
    map.insert(RepositoryManagement, BTreeSet::from([DeployCode, ReviewCode]));
    map.insert(Modeling3d, BTreeSet::from([RenderMedia]));
    map
}

// ---------------------------------------------------------------------------
// Tasks and the catalog
// ---------------------------------------------------------------------------

/// One task entry: a unit of authorized work a service offers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub id: String,
    pub category: ServiceCategory,
    pub capabilities: BTreeSet<CapabilityTag>,
    pub calibration_group: String,
}

/// The full task universe plus the per-category capability alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskCatalog {
    tasks: Vec<TaskSpec>,
    capability_map: BTreeMap<ServiceCategory, BTreeSet<CapabilityTag>>,
}

const REFERENCE_CATALOG: &str = include_str!("../data/reference_catalog.txt");

impl TaskCatalog {
    /// The shipped reference catalog (271 tasks over the six categories).
    pub fn reference() -> TaskCatalog {
        TaskCatalog::parse(REFERENCE_CATALOG).expect("bundled catalog is valid")
    }

    /// Parse a catalog from its line-oriented text form.
    ///
    /// Format: header `catalog v1`, then one
    /// `task <id> <CATEGORY> <tag[,tag...]> <calibration_group>` per line.
    /// Lines starting with `#` are comments.
    pub fn parse(source: &str) -> Result<TaskCatalog, CatalogError> {
        let capability_map = standard_capability_map();
        let mut lines = numbered_lines(source);
        let (line_no, header) = lines.next().ok_or(CatalogError::Parse {
            line: 1,
            msg: "empty catalog: missing `catalog v1` header".into(),
        })?;
        if header != "catalog v1" {
            return Err(CatalogError::Parse {
                line: line_no,
                msg: format!("expected `catalog v1` header, got `{header}`"),
            });
        }

        let mut tasks: Vec<TaskSpec> = Vec::new();
        let mut seen = BTreeSet::new();
        for (line_no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 || fields[0] != "task" {
                return Err(CatalogError::Parse {
                    line: line_no,
                    msg: format!("expected `task <id> <CATEGORY> <tags> <group>`, got `{line}`"),
                });
            }
            let id = fields[1].to_string();
            if !seen.insert(id.clone()) {
                return Err(CatalogError::DuplicateId(id));
            }
            let category: ServiceCategory = fields[2].parse()?;
            let mut capabilities = BTreeSet::new();
            for tag in fields[3].split(',') {
                let tag: CapabilityTag = tag.parse().map_err(|_| CatalogError::Parse {
                    line: line_no,
                    msg: format!("unknown capability tag {tag}"),
                })?;
                capabilities.insert(tag);
            }
            if capabilities.is_empty() {
                return Err(CatalogError::Parse {
                    line: line_no,
                    msg: "task has no capabilities".into(),
                });
            }
            let allowed = &capability_map[&category];
            if let Some(bad) = capabilities.iter().find(|t| !allowed.contains(t)) {
                return Err(CatalogError::Parse {
                    line: line_no,
                    msg: format!("capability {bad} not permitted for {category}"),
                });
            }
            tasks.push(TaskSpec {
                id,
                category,
                capabilities,
                calibration_group: fields[4].to_string(),
            });
        }
        Ok(TaskCatalog {
            tasks,
            capability_map,
        })
    }

    /// Serialize back to the catalog text form (comments are not preserved).
    pub fn to_text(&self) -> String {
        let mut out = String::from("catalog v1\n");
        for t in &self.tasks {
            let tags: Vec<&str> = t.capabilities.iter().map(|c| c.label()).collect();
            out.push_str(&format!(
                "task {} {} {} {}\n",
                t.id,
                t.category,
                tags.join(","),
                t.calibration_group
            ));
        }
        out
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn tasks_in(&self, category: ServiceCategory) -> Vec<&TaskSpec> {
        self.tasks.iter().filter(|t| t.category == category).collect()
    }

    /// First task matching a category and capability, in catalog order.
    pub fn bind(&self, category: ServiceCategory, capability: CapabilityTag) -> Option<&TaskSpec> {
        self.tasks
            .iter()
            .find(|t| t.category == category && t.capabilities.contains(&capability))
    }

    pub fn capability_map(&self) -> &BTreeMap<ServiceCategory, BTreeSet<CapabilityTag>> {
        &self.capability_map
    }

    pub fn allows(&self, category: ServiceCategory, capability: CapabilityTag) -> bool {
        self.capability_map
            .get(&category)
            .is_some_and(|set| set.contains(&capability))
    }

    /// Distinct calibration groups referenced by this catalog.
    pub fn calibration_groups(&self) -> BTreeSet<String> {
        self.tasks.iter().map(|t| t.calibration_group.clone()).collect()
    }
}

/// Iterate non-comment, non-blank lines with their 1-based line numbers.
pub(crate) fn numbered_lines(source: &str) -> impl Iterator<Item = (usize, &str)> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

// ---------------------------------------------------------------------------
// Combinations
// ---------------------------------------------------------------------------

/// Number of unordered pairs over `n` distinct items.
pub fn pair_count(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// A canonical (sorted, deduplicated) set of at least two service categories.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CombinationKey {
    categories: BTreeSet<ServiceCategory>,
}

impl CombinationKey {
    pub fn new(categories: impl IntoIterator<Item = ServiceCategory>) -> Result<Self, CatalogError> {
        let categories: BTreeSet<ServiceCategory> = categories.into_iter().collect();
        if categories.len() < 2 {
            return Err(CatalogError::OutOfRange(categories.len()));
        }
        Ok(CombinationKey { categories })
    }

    pub fn pair(a: ServiceCategory, b: ServiceCategory) -> Result<Self, CatalogError> {
        CombinationKey::new([a, b])
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least two members by construction
    }

    pub fn categories(&self) -> impl Iterator<Item = ServiceCategory> + '_ {
        self.categories.iter().copied()
    }

    pub fn contains(&self, category: ServiceCategory) -> bool {
        self.categories.contains(&category)
    }

    pub fn is_subset(&self, other: &CombinationKey) -> bool {
        self.categories.is_subset(&other.categories)
    }

    /// All contained 2-subsets, in canonical order.
    pub fn pairs(&self) -> Vec<CombinationKey> {
        let cats: Vec<ServiceCategory> = self.categories().collect();
        let mut out = Vec::new();
        for i in 0..cats.len() {
            for j in (i + 1)..cats.len() {
                out.push(CombinationKey::pair(cats[i], cats[j]).expect("two distinct categories"));
            }
        }
        out
    }
}

impl fmt::Display for CombinationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<&str> = self.categories.iter().map(|c| c.label()).collect();
        f.write_str(&labels.join("+"))
    }
}

/// All size-`k` category subsets in canonical lexicographic order.
pub fn enumerate_combinations(k: usize) -> Result<Vec<CombinationKey>, CatalogError> {
    if !(2..=6).contains(&k) {
        return Err(CatalogError::OutOfRange(k));
    }
    let mut out = Vec::new();
    // 6 categories: walk bitmasks in an order that yields lexicographic subsets.
    let mut stack: Vec<(usize, Vec<ServiceCategory>)> = vec![(0, Vec::new())];
    while let Some((start, partial)) = stack.pop() {
        if partial.len() == k {
            out.push(CombinationKey::new(partial).expect("k >= 2"));
            continue;
        }
        // Push in reverse so the smallest next category is processed first.
        for i in (start..ServiceCategory::ALL.len()).rev() {
            let mut next = partial.clone();
            next.push(ServiceCategory::ALL[i]);
            stack.push((i + 1, next));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Danger matrix
// ---------------------------------------------------------------------------

/// A scored risk entry for one category combination.
#[derive(Debug, Clone, PartialEq)]
pub struct DangerEntry {
    pub score: f64,
    pub label: String,
}

/// Score ceiling: no partial combination outranks the full-spectrum campaign,
/// which keeps the matrix monotone under subset inclusion.
pub const ORCHESTRATED_SCORE: f64 = 0.95;

/// Per-category-step risk increment for combinations beyond a pair.
pub const EXTRA_CATEGORY_INCREMENT: f64 = 0.1;

/// Risk scores and vulnerability labels over category combinations.
///
/// Stores all fifteen pair entries plus the all-services entry; larger
/// combinations are scored from their worst contained pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DangerMatrix {
    entries: BTreeMap<CombinationKey, DangerEntry>,
}

impl DangerMatrix {
    /// The standard matrix: five named pairings, a default score for the
    /// rest, and the all-services orchestrated campaign.
    pub fn standard() -> DangerMatrix {
        use ServiceCategory::*;
        let named: [(ServiceCategory, ServiceCategory, f64, &str); 5] = [
            (BrowserAutomation, FinancialAnalysis, 0.5, "Data Correlation"),
            (RepositoryManagement, BrowserAutomation, 0.6, "Supply Chain Poisoning"),
            (LocationServices, FinancialAnalysis, 0.7, "Physical-Digital Convergence"),
            (Modeling3d, BrowserAutomation, 0.6, "Synthetic Media Attacks"),
            (RepositoryManagement, LocationServices, 0.8, "Infrastructure Compromise"),
        ];
        let mut entries = BTreeMap::new();
        for key in enumerate_combinations(2).expect("k=2 in range") {
            entries.insert(
                key,
                DangerEntry {
                    score: 0.4,
                    label: "Unclassified Pairing".to_string(),
                },
            );
        }
        for (a, b, score, label) in named {
            let key = CombinationKey::pair(a, b).expect("distinct");
            entries.insert(
                key,
                DangerEntry {
                    score,
                    label: label.to_string(),
                },
            );
        }
        entries.insert(
            CombinationKey::new(ServiceCategory::ALL).expect("six categories"),
            DangerEntry {
                score: ORCHESTRATED_SCORE,
                label: "Orchestrated Campaign".to_string(),
            },
        );
        DangerMatrix { entries }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CombinationKey, &DangerEntry)> {
        self.entries.iter()
    }

    pub fn stored(&self, key: &CombinationKey) -> Option<&DangerEntry> {
        self.entries.get(key)
    }

    /// Score a combination: stored entries are returned as-is, larger
    /// combinations derive from their highest-scoring contained pair.
    pub fn score(&self, key: &CombinationKey) -> Result<DangerEntry, CatalogError> {
        if let Some(entry) = self.entries.get(key) {
            return Ok(entry.clone());
        }
        if key.len() == 2 {
            return Err(CatalogError::MissingPair(key.to_string()));
        }
        let mut best: Option<&DangerEntry> = None;
        for pair in key.pairs() {
            let entry = self
                .entries
                .get(&pair)
                .ok_or_else(|| CatalogError::MissingPair(pair.to_string()))?;
            if best.is_none_or(|b| entry.score > b.score) {
                best = Some(entry);
            }
        }
        let best = best.expect("a combination of size > 2 contains pairs");
        let score = (best.score + EXTRA_CATEGORY_INCREMENT * (key.len() as f64 - 2.0))
            .min(ORCHESTRATED_SCORE);
        Ok(DangerEntry {
            score,
            label: best.label.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pair_count_headline_and_edges() {
        assert_eq!(pair_count(271), 36_585);
        assert_eq!(pair_count(1), 0);
        assert_eq!(pair_count(0), 0);
        assert_eq!(pair_count(6), 15);
    }

    #[test]
    fn pair_count_matches_brute_force_up_to_300() {
        for n in 0..=300u64 {
            let mut count = 0;
            for i in 0..n {
                for _ in (i + 1)..n {
                    count += 1;
                }
            }
            assert_eq!(pair_count(n), count, "n = {n}");
        }
    }

    /// Independent subset enumerator over bitmasks, for cross-checking.
    fn brute_force_subsets(k: usize) -> Vec<Vec<ServiceCategory>> {
        let mut subsets = Vec::new();
        for mask in 0u32..64 {
            if mask.count_ones() as usize != k {
                continue;
            }
            let cats: Vec<ServiceCategory> = (0..6)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ServiceCategory::ALL[i])
                .collect();
            subsets.push(cats);
        }
        subsets.sort();
        subsets
    }

    #[test]
    fn enumerate_sizes_and_canonical_order() {
        assert_eq!(enumerate_combinations(2).unwrap().len(), 15);
        assert_eq!(enumerate_combinations(6).unwrap().len(), 1);
        let threes = enumerate_combinations(3).unwrap();
        assert_eq!(threes.len(), 20);
        assert_eq!(
            threes[0],
            CombinationKey::new([
                ServiceCategory::BrowserAutomation,
                ServiceCategory::FinancialAnalysis,
                ServiceCategory::LocationServices,
            ])
            .unwrap()
        );
        // Cross-check against the independent bitmask enumerator.
        for k in 2..=6 {
            let ours: Vec<Vec<ServiceCategory>> = enumerate_combinations(k)
                .unwrap()
                .iter()
                .map(|key| key.categories().collect())
                .collect();
            assert_eq!(ours, brute_force_subsets(k), "k = {k}");
        }
    }

    #[test]
    fn enumerate_rejects_out_of_range() {
        assert_eq!(enumerate_combinations(1), Err(CatalogError::OutOfRange(1)));
        assert_eq!(enumerate_combinations(7), Err(CatalogError::OutOfRange(7)));
    }

    #[test]
    fn enumerate_is_duplicate_free() {
        for k in 2..=6 {
            let keys = enumerate_combinations(k).unwrap();
            let unique: BTreeSet<&CombinationKey> = keys.iter().collect();
            assert_eq!(unique.len(), keys.len());
        }
    }

    #[test]
    fn combination_key_canonicalizes() {
        let a = CombinationKey::new([
            ServiceCategory::WebSearch,
            ServiceCategory::BrowserAutomation,
        ])
        .unwrap();
        let b = CombinationKey::new([
            ServiceCategory::BrowserAutomation,
            ServiceCategory::WebSearch,
            ServiceCategory::BrowserAutomation,
        ])
        .unwrap();
        assert_eq!(a, b);
        assert!(CombinationKey::new([ServiceCategory::WebSearch]).is_err());
    }

    #[test]
    fn danger_named_pairs() {
        let m = DangerMatrix::standard();
        let browser_financial = CombinationKey::pair(
            ServiceCategory::BrowserAutomation,
            ServiceCategory::FinancialAnalysis,
        )
        .unwrap();
        let entry = m.score(&browser_financial).unwrap();
        assert_eq!(entry.label, "Data Correlation");
        assert_eq!(entry.score, 0.5);

        let repo_browser = CombinationKey::pair(
            ServiceCategory::RepositoryManagement,
            ServiceCategory::BrowserAutomation,
        )
        .unwrap();
        assert_eq!(m.score(&repo_browser).unwrap().label, "Supply Chain Poisoning");

        let all = CombinationKey::new(ServiceCategory::ALL).unwrap();
        let entry = m.score(&all).unwrap();
        assert_eq!(entry.label, "Orchestrated Campaign");
        assert_eq!(entry.score, ORCHESTRATED_SCORE);
    }

    #[test]
    fn danger_missing_pair() {
        let m = DangerMatrix { entries: BTreeMap::new() };
        let key = CombinationKey::pair(
            ServiceCategory::WebSearch,
            ServiceCategory::Modeling3d,
        )
        .unwrap();
        assert!(matches!(m.score(&key), Err(CatalogError::MissingPair(_))));
    }

    #[test]
    fn danger_monotone_on_random_subset_pairs() {
        let m = DangerMatrix::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1_000 {
            let b_len = rng.gen_range(3..=6);
            let mut cats = ServiceCategory::ALL.to_vec();
            cats.shuffle(&mut rng);
            let b_cats = &cats[..b_len];
            let a_len = rng.gen_range(2..b_len);
            let a = CombinationKey::new(b_cats[..a_len].iter().copied()).unwrap();
            let b = CombinationKey::new(b_cats.iter().copied()).unwrap();
            let sa = m.score(&a).unwrap().score;
            let sb = m.score(&b).unwrap().score;
            assert!(sa <= sb + 1e-12, "score({a}) = {sa} > score({b}) = {sb}");
        }
    }

    #[test]
    fn reference_catalog_loads() {
        let catalog = TaskCatalog::reference();
        assert_eq!(catalog.tasks().len(), 271);
        let categories: BTreeSet<ServiceCategory> =
            catalog.tasks().iter().map(|t| t.category).collect();
        assert_eq!(categories.len(), 6);
        // Task ids referenced elsewhere must exist with the right shape.
        assert_eq!(
            catalog.task("google_maps_0004").unwrap().category,
            ServiceCategory::LocationServices
        );
        assert!(catalog
            .task("google_maps_0004")
            .unwrap()
            .capabilities
            .contains(&CapabilityTag::Route));
        assert!(catalog
            .task("google_maps_0019")
            .unwrap()
            .capabilities
            .contains(&CapabilityTag::Geolocate));
        assert!(catalog.task("weather_maps_0001").is_some());
        assert!(catalog.task("info_search_0002").is_some());
    }

    #[test]
    fn catalog_round_trips() {
        let catalog = TaskCatalog::reference();
        let text = catalog.to_text();
        let reloaded = TaskCatalog::parse(&text).unwrap();
        assert_eq!(catalog, reloaded);
    }

    #[test]
    fn catalog_rejects_empty_and_duplicates() {
        assert!(matches!(
            TaskCatalog::parse(""),
            Err(CatalogError::Parse { line: 1, .. })
        ));
        let dup = "catalog v1\n\
                   task t1 WEB_SEARCH INFO_GATHER g\n\
                   task t1 WEB_SEARCH INFO_GATHER g\n";
        assert_eq!(
            TaskCatalog::parse(dup),
            Err(CatalogError::DuplicateId("t1".to_string()))
        );
        let bad_cat = "catalog v1\ntask t1 TELEPATHY INFO_GATHER g\n";
        assert_eq!(
            TaskCatalog::parse(bad_cat),
            Err(CatalogError::UnknownCategory("TELEPATHY".to_string()))
        );
    }

    #[test]
    fn catalog_rejects_capability_outside_category() {
        let bad = "catalog v1\ntask t1 MODELING_3D TRANSACT g\n";
        assert!(matches!(
            TaskCatalog::parse(bad),
            Err(CatalogError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn every_tag_belongs_to_a_category() {
        let map = standard_capability_map();
        for tag in CapabilityTag::ALL {
            assert!(
                map.values().any(|set| set.contains(&tag)),
                "{tag} missing from the capability map"
            );
        }
    }

    #[test]
    fn reference_catalog_covers_every_category_capability() {
        // Task binding by (category, capability) must always succeed.
        let catalog = TaskCatalog::reference();
        for (category, tags) in catalog.capability_map() {
            for tag in tags {
                assert!(
                    catalog.bind(*category, *tag).is_some(),
                    "no task for {category} / {tag}"
                );
            }
        }
    }
}
