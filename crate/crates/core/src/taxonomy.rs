//! Theme label → category mapping by ordered substring rules.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Rule table shipped with the crate (`data/theme_rules.csv`).
pub const DEFAULT_RULES: &str = include_str!("../data/theme_rules.csv");

macro_rules! categories {
    ($($variant:ident => $label:literal),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum Category {
            $(#[serde(rename = $label)] $variant),+
        }

        impl Category {
            pub const ALL: [Category; 30] = [$(Category::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $(Category::$variant => $label),+
                }
            }
        }

        impl FromStr for Category {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let wanted = s.trim();
                $(if wanted.eq_ignore_ascii_case($label) {
                    return Ok(Category::$variant);
                })+
                Err(Error::InvalidInput(format!("unknown theme category `{wanted}`")))
            }
        }
    };
}

categories! {
    Ecofin => "Ecofin",
    Disease => "Disease",
    Actor => "Actor",
    Action => "Action",
    Language => "Language",
    Ethnicity => "Ethnicity",
    Animal => "Animal",
    Disaster => "Disaster",
    Social => "Social",
    Relation => "Relation",
    Political => "Political",
    Health => "Health",
    Weapons => "Weapons",
    Military => "Military",
    Terror => "Terror",
    Environment => "Environment",
    Food => "Food",
    Government => "Government",
    AidGroups => "Aid groups",
    Information => "Information",
    Conflict => "Conflict",
    Emergency => "Emergency",
    HumanRights => "Human rights",
    Migration => "Migration",
    Agriculture => "Agriculture",
    Discrimination => "Discrimination",
    Incident => "Incident",
    Criminal => "Criminal",
    Tech => "Tech",
    PointsOfInterest => "Points of interest",
}

impl Category {
    /// Purely descriptive groups that carry no event or condition.
    pub fn is_descriptive(self) -> bool {
        matches!(
            self,
            Category::Actor
                | Category::Ethnicity
                | Category::Language
                | Category::PointsOfInterest
                | Category::Animal
        )
    }

    pub fn retained() -> impl Iterator<Item = Category> {
        Category::ALL.into_iter().filter(|c| !c.is_descriptive())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mapping {
    Category(Category),
    Unmapped,
}

/// What happens to labels no rule matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnmappedPolicy {
    /// Keep the theme and report it under [`Category::Action`].
    #[default]
    RetainAsAction,
    Drop,
}

#[derive(Debug)]
pub struct ThemeTaxonomy {
    rules: Vec<(String, Category)>,
    policy: UnmappedPolicy,
    hash: String,
    cache: RwLock<HashMap<String, Mapping>>,
}

impl Clone for ThemeTaxonomy {
    fn clone(&self) -> Self {
        ThemeTaxonomy {
            rules: self.rules.clone(),
            policy: self.policy,
            hash: self.hash.clone(),
            cache: RwLock::new(HashMap::new()),
        }
    }
}

#[derive(Deserialize)]
struct RuleRow {
    pattern: String,
    category: String,
}

impl ThemeTaxonomy {
    pub fn load_rules(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    pub fn default_rules() -> Self {
        Self::from_csv_str(DEFAULT_RULES, "default theme rules").expect("shipped rules are valid")
    }

    /// Parse a `pattern,category` CSV. `context` names the source in errors.
    pub fn from_csv_str(text: &str, context: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["pattern", "category"] {
            return Err(Error::Parse {
                context: context.into(),
                line: 1,
                message: "header must be `pattern,category`".into(),
            });
        }
        let mut rules = Vec::new();
        let mut seen = BTreeSet::new();
        for row in reader.deserialize::<RuleRow>() {
            let line = |e: &csv::Error| e.position().map_or(0, |p| p.line() as usize);
            let row = row.map_err(|e| Error::Parse {
                context: context.into(),
                line: line(&e),
                message: e.to_string(),
            })?;
            let lineno = rules.len() + 2;
            if row.pattern.is_empty() {
                return Err(Error::Parse {
                    context: context.into(),
                    line: lineno,
                    message: "empty pattern".into(),
                });
            }
            let category: Category = row.category.parse().map_err(|_| Error::Parse {
                context: context.into(),
                line: lineno,
                message: format!("unknown category `{}`", row.category),
            })?;
            if !seen.insert(row.pattern.clone()) {
                return Err(Error::Parse {
                    context: context.into(),
                    line: lineno,
                    message: format!("duplicate pattern `{}`", row.pattern),
                });
            }
            rules.push((row.pattern, category));
        }
        if rules.is_empty() {
            return Err(Error::Parse {
                context: context.into(),
                line: 1,
                message: "rules file contains no rules".into(),
            });
        }
        let mut hasher = Sha256::new();
        for (p, c) in &rules {
            hasher.update(p.as_bytes());
            hasher.update([0]);
            hasher.update(c.label().as_bytes());
            hasher.update(*b"\n");
        }
        Ok(ThemeTaxonomy {
            rules,
            policy: UnmappedPolicy::default(),
            hash: hex::encode(hasher.finalize()),
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn with_policy(mut self, policy: UnmappedPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn policy(&self) -> UnmappedPolicy {
        self.policy
    }

    pub fn rules(&self) -> &[(String, Category)] {
        &self.rules
    }

    /// Hex SHA-256 over the ordered rule list.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// First rule whose pattern occurs in `label` decides. Case-sensitive.
    pub fn categorize(&self, label: &str) -> Mapping {
        if let Some(m) = self.cache.read().expect("taxonomy cache poisoned").get(label) {
            return *m;
        }
        let m = self
            .rules
            .iter()
            .find(|(p, _)| label.contains(p.as_str()))
            .map_or(Mapping::Unmapped, |(_, c)| Mapping::Category(*c));
        self.cache
            .write()
            .expect("taxonomy cache poisoned")
            .insert(label.to_owned(), m);
        m
    }

    /// Category used for reporting; unmapped labels count as Action when kept.
    pub fn reporting_category(&self, label: &str) -> Option<Category> {
        match self.categorize(label) {
            Mapping::Category(c) => Some(c),
            Mapping::Unmapped => match self.policy {
                UnmappedPolicy::RetainAsAction => Some(Category::Action),
                UnmappedPolicy::Drop => None,
            },
        }
    }

    pub fn is_retained(&self, label: &str) -> bool {
        self.reporting_category(label)
            .is_some_and(|c| !c.is_descriptive())
    }

    pub fn is_ecofin(&self, label: &str) -> bool {
        self.categorize(label) == Mapping::Category(Category::Ecofin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_categories_five_descriptive() {
        assert_eq!(Category::ALL.len(), 30);
        assert_eq!(Category::ALL.iter().filter(|c| c.is_descriptive()).count(), 5);
        assert_eq!(Category::retained().count(), 25);
        let unique: BTreeSet<_> = Category::ALL.iter().map(|c| c.label()).collect();
        assert_eq!(unique.len(), 30);
    }

    #[test]
    fn labels_round_trip_through_parse() {
        for c in Category::ALL {
            assert_eq!(c.label().parse::<Category>().unwrap(), c);
        }
    }

    #[test]
    fn weapon_rule_maps_bomb_themes() {
        let tax = ThemeTaxonomy::from_csv_str("pattern,category\nWEAPON,Weapons\n", "t").unwrap();
        assert_eq!(tax.categorize("TAX_WEAPONS_BOMB"), Mapping::Category(Category::Weapons));
    }

    #[test]
    fn default_rules_examples() {
        let tax = ThemeTaxonomy::default_rules();
        assert_eq!(
            tax.categorize("TAX_WEAPONS_SUICIDE_BOMB"),
            Mapping::Category(Category::Weapons)
        );
        assert_eq!(
            tax.categorize("TAX_DISEASE_INFLUENZA"),
            Mapping::Category(Category::Disease)
        );
        assert_eq!(tax.categorize("ZZZ_NO_MATCH"), Mapping::Unmapped);
        assert_eq!(tax.categorize("ECON_INFLATION"), Mapping::Category(Category::Ecofin));
        assert_eq!(
            tax.categorize("TAX_FNCACT_PRESIDENT"),
            Mapping::Category(Category::Actor)
        );
    }

    #[test]
    fn retention_rules() {
        let tax = ThemeTaxonomy::default_rules();
        assert!(!tax.is_retained("TAX_FNCACT_MINISTER"));
        assert!(!tax.is_retained("TAX_ETHNICITY_AMERICAN"));
        assert!(!tax.is_retained("TAX_WORLDLANGUAGES_SPANISH"));
        assert!(!tax.is_retained("TAX_WORLDMAMMALS_DOG"));
        assert!(!tax.is_retained("TAX_POINTSOFINTEREST_AIRPORT"));
        assert!(tax.is_retained("ECON_STOCKMARKET"));
        assert!(tax.is_retained("ZZZ_NO_MATCH"));
        assert_eq!(tax.reporting_category("ZZZ_NO_MATCH"), Some(Category::Action));
        let dropping = tax.clone().with_policy(UnmappedPolicy::Drop);
        assert!(!dropping.is_retained("ZZZ_NO_MATCH"));
    }

    #[test]
    fn first_match_wins() {
        let tax = ThemeTaxonomy::from_csv_str(
            "pattern,category\nTAX_FNCACT,Actor\nECON,Ecofin\n",
            "t",
        )
        .unwrap();
        assert_eq!(
            tax.categorize("TAX_FNCACT_ECONOMIST"),
            Mapping::Category(Category::Actor)
        );
    }

    #[test]
    fn load_errors() {
        assert!(ThemeTaxonomy::from_csv_str("pattern,category\n", "t").is_err());
        let dup = ThemeTaxonomy::from_csv_str("pattern,category\nECON_,Ecofin\nECON_,Social\n", "t");
        match dup {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let unknown = ThemeTaxonomy::from_csv_str("pattern,category\nECON_,Finance\n", "t");
        assert!(matches!(unknown, Err(Error::Parse { line: 2, .. })));
        assert!(ThemeTaxonomy::from_csv_str("pat,cat\nECON_,Ecofin\n", "t").is_err());
    }

    #[test]
    fn hash_depends_on_order() {
        let a = ThemeTaxonomy::from_csv_str("pattern,category\nA,Ecofin\nB,Tech\n", "t").unwrap();
        let b = ThemeTaxonomy::from_csv_str("pattern,category\nB,Tech\nA,Ecofin\n", "t").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
