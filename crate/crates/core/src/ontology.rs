//! Typed ontologies for physical common sense and embodied reasoning.
//!
//! Questions are tagged with these types and scores are aggregated per
//! category. Machine names are lowercase snake_case (stable JSONL keys);
//! display names carry the human-facing capitalization.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Top-level common-sense category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Space,
    Time,
    FundamentalPhysics,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Space,
        Category::Time,
        Category::FundamentalPhysics,
    ];

    pub fn machine_name(self) -> &'static str {
        match self {
            Category::Space => "space",
            Category::Time => "time",
            Category::FundamentalPhysics => "fundamental_physics",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Category::Space => "Space",
            Category::Time => "Time",
            Category::FundamentalPhysics => "Fundamental Physics",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Fine-grained common-sense subcategory (4 Space + 5 Time + 7 Fundamental
/// Physics = 16).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcategory {
    // Space
    Relationship,
    Plausibility,
    Affordance,
    Environment,
    // Time
    Actions,
    Order,
    Causality,
    Camera,
    Planning,
    // Fundamental physics
    Attributes,
    States,
    ObjectPermanence,
    Mechanics,
    Electromagnetism,
    Thermodynamics,
    AntiPhysics,
}

impl Subcategory {
    pub const ALL: [Subcategory; 16] = [
        Subcategory::Relationship,
        Subcategory::Plausibility,
        Subcategory::Affordance,
        Subcategory::Environment,
        Subcategory::Actions,
        Subcategory::Order,
        Subcategory::Causality,
        Subcategory::Camera,
        Subcategory::Planning,
        Subcategory::Attributes,
        Subcategory::States,
        Subcategory::ObjectPermanence,
        Subcategory::Mechanics,
        Subcategory::Electromagnetism,
        Subcategory::Thermodynamics,
        Subcategory::AntiPhysics,
    ];

    /// The category this subcategory belongs to.
    pub fn category(self) -> Category {
        use Subcategory::*;
        match self {
            Relationship | Plausibility | Affordance | Environment => Category::Space,
            Actions | Order | Causality | Camera | Planning => Category::Time,
            Attributes | States | ObjectPermanence | Mechanics | Electromagnetism
            | Thermodynamics | AntiPhysics => Category::FundamentalPhysics,
        }
    }

    pub fn machine_name(self) -> &'static str {
        use Subcategory::*;
        match self {
            Relationship => "relationship",
            Plausibility => "plausibility",
            Affordance => "affordance",
            Environment => "environment",
            Actions => "actions",
            Order => "order",
            Causality => "causality",
            Camera => "camera",
            Planning => "planning",
            Attributes => "attributes",
            States => "states",
            ObjectPermanence => "object_permanence",
            Mechanics => "mechanics",
            Electromagnetism => "electromagnetism",
            Thermodynamics => "thermodynamics",
            AntiPhysics => "anti_physics",
        }
    }

    pub fn display_name(self) -> &'static str {
        use Subcategory::*;
        match self {
            Relationship => "Relationship",
            Plausibility => "Plausibility",
            Affordance => "Affordance",
            Environment => "Environment",
            Actions => "Actions",
            Order => "Order",
            Causality => "Causality",
            Camera => "Camera",
            Planning => "Planning",
            Attributes => "Attributes",
            States => "States",
            ObjectPermanence => "Object Permanence",
            Mechanics => "Mechanics",
            Electromagnetism => "Electromagnetism",
            Thermodynamics => "Thermodynamics",
            AntiPhysics => "Anti-Physics",
        }
    }
}

impl fmt::Display for Subcategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// One common-sense tag: a category plus a subcategory consistent with it.
///
/// Serializes as `{"category": "...", "subcategory": "..."}` in machine form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CommonSenseTag {
    category: Category,
    subcategory: Subcategory,
}

impl CommonSenseTag {
    /// Build a tag, enforcing category/subcategory consistency.
    pub fn new(category: Category, subcategory: Subcategory) -> Result<Self, OntologyError> {
        if subcategory.category() != category {
            return Err(OntologyError::MismatchedPair {
                category: category.display_name(),
                subcategory: subcategory.display_name(),
            });
        }
        Ok(Self {
            category,
            subcategory,
        })
    }

    /// Tag for a subcategory, with the category implied.
    pub fn of(subcategory: Subcategory) -> Self {
        Self {
            category: subcategory.category(),
            subcategory,
        }
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn subcategory(&self) -> Subcategory {
        self.subcategory
    }
}

impl<'de> Deserialize<'de> for CommonSenseTag {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            category: String,
            subcategory: String,
        }
        let raw = Raw::deserialize(deserializer)?;
        parse_common_sense_tag(&raw.category, &raw.subcategory).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for CommonSenseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category, self.subcategory)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error("unknown category '{0}'")]
    UnknownCategory(String),
    #[error("unknown subcategory '{0}'")]
    UnknownSubcategory(String),
    #[error("subcategory '{subcategory}' does not belong to category '{category}'")]
    MismatchedPair {
        category: &'static str,
        subcategory: &'static str,
    },
    #[error("unknown capability '{0}'")]
    UnknownCapability(String),
    #[error("unknown agent '{0}'")]
    UnknownAgent(String),
}

/// Lowercase and drop separators so "Object Permanence", "object_permanence"
/// and "Anti-Physics" all normalize to one key.
fn canon(name: &str) -> String {
    name.chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .flat_map(|c| c.to_lowercase())
        .collect()
}

/// Parse a (category, subcategory) name pair, case-insensitively on the
/// canonical names (machine or display form).
pub fn parse_common_sense_tag(
    category_name: &str,
    subcategory_name: &str,
) -> Result<CommonSenseTag, OntologyError> {
    let cat_key = canon(category_name);
    let category = Category::ALL
        .into_iter()
        .find(|c| canon(c.machine_name()) == cat_key)
        .ok_or_else(|| OntologyError::UnknownCategory(category_name.to_string()))?;
    let sub_key = canon(subcategory_name);
    let subcategory = Subcategory::ALL
        .into_iter()
        .find(|s| canon(s.machine_name()) == sub_key)
        .ok_or_else(|| OntologyError::UnknownSubcategory(subcategory_name.to_string()))?;
    CommonSenseTag::new(category, subcategory)
}

/// Count tags per category; categories absent from the input map to 0.
pub fn category_histogram(tags: &[CommonSenseTag]) -> BTreeMap<Category, usize> {
    let mut hist: BTreeMap<Category, usize> = Category::ALL.into_iter().map(|c| (c, 0)).collect();
    for tag in tags {
        *hist
            .get_mut(&tag.category())
            .expect("all categories present") += 1;
    }
    hist
}

/// Embodied-reasoning capability axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    ProcessSensoryInputs,
    PredictActionEffects,
    RespectPhysicalConstraints,
    LearnFromInteractions,
}

impl Capability {
    pub const ALL: [Capability; 4] = [
        Capability::ProcessSensoryInputs,
        Capability::PredictActionEffects,
        Capability::RespectPhysicalConstraints,
        Capability::LearnFromInteractions,
    ];

    pub fn machine_name(self) -> &'static str {
        match self {
            Capability::ProcessSensoryInputs => "process_sensory_inputs",
            Capability::PredictActionEffects => "predict_action_effects",
            Capability::RespectPhysicalConstraints => "respect_physical_constraints",
            Capability::LearnFromInteractions => "learn_from_interactions",
        }
    }
}

/// Embodied-agent axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Human,
    Animal,
    RobotArm,
    HumanoidRobot,
    AutonomousVehicle,
}

impl Agent {
    pub const ALL: [Agent; 5] = [
        Agent::Human,
        Agent::Animal,
        Agent::RobotArm,
        Agent::HumanoidRobot,
        Agent::AutonomousVehicle,
    ];

    pub fn machine_name(self) -> &'static str {
        match self {
            Agent::Human => "human",
            Agent::Animal => "animal",
            Agent::RobotArm => "robot_arm",
            Agent::HumanoidRobot => "humanoid_robot",
            Agent::AutonomousVehicle => "autonomous_vehicle",
        }
    }
}

/// One cell of the capability x agent embodied-reasoning ontology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbodiedTag {
    pub capability: Capability,
    pub agent: Agent,
}

impl EmbodiedTag {
    pub fn new(capability: Capability, agent: Agent) -> Self {
        Self { capability, agent }
    }

    /// Parse from machine or display-style names, case-insensitively.
    pub fn parse(capability_name: &str, agent_name: &str) -> Result<Self, OntologyError> {
        let cap_key = canon(capability_name);
        let capability = Capability::ALL
            .into_iter()
            .find(|c| canon(c.machine_name()) == cap_key)
            .ok_or_else(|| OntologyError::UnknownCapability(capability_name.to_string()))?;
        let agent_key = canon(agent_name);
        let agent = Agent::ALL
            .into_iter()
            .find(|a| canon(a.machine_name()) == agent_key)
            .ok_or_else(|| OntologyError::UnknownAgent(agent_name.to_string()))?;
        Ok(Self { capability, agent })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_subcategories_split_4_5_7() {
        assert_eq!(Subcategory::ALL.len(), 16);
        let per_cat = |c: Category| {
            Subcategory::ALL
                .iter()
                .filter(|s| s.category() == c)
                .count()
        };
        assert_eq!(per_cat(Category::Space), 4);
        assert_eq!(per_cat(Category::Time), 5);
        assert_eq!(per_cat(Category::FundamentalPhysics), 7);
    }

    #[test]
    fn parse_canonical_pair() {
        let tag = parse_common_sense_tag("Time", "Causality").unwrap();
        assert_eq!(tag.category(), Category::Time);
        assert_eq!(tag.subcategory(), Subcategory::Causality);
    }

    #[test]
    fn parse_is_case_insensitive() {
        let tag = parse_common_sense_tag("space", "relationship").unwrap();
        assert_eq!(tag.category(), Category::Space);
        assert_eq!(tag.subcategory(), Subcategory::Relationship);
        // Display-style names with separators also resolve.
        let tag = parse_common_sense_tag("Fundamental Physics", "Object Permanence").unwrap();
        assert_eq!(tag.subcategory(), Subcategory::ObjectPermanence);
        let tag = parse_common_sense_tag("fundamental_physics", "Anti-Physics").unwrap();
        assert_eq!(tag.subcategory(), Subcategory::AntiPhysics);
    }

    #[test]
    fn parse_rejects_mismatched_pair() {
        let err = parse_common_sense_tag("Space", "Causality").unwrap_err();
        assert!(matches!(err, OntologyError::MismatchedPair { .. }));
    }

    #[test]
    fn parse_rejects_unknown_names() {
        assert!(matches!(
            parse_common_sense_tag("Weather", "Causality"),
            Err(OntologyError::UnknownCategory(_))
        ));
        assert!(matches!(
            parse_common_sense_tag("Time", "Chronology"),
            Err(OntologyError::UnknownSubcategory(_))
        ));
    }

    #[test]
    fn parse_round_trips_all_subcategories() {
        for sub in Subcategory::ALL {
            let cat = sub.category();
            // Machine form.
            let tag = parse_common_sense_tag(cat.machine_name(), sub.machine_name()).unwrap();
            assert_eq!(tag.subcategory(), sub);
            // Display form.
            let tag = parse_common_sense_tag(cat.display_name(), sub.display_name()).unwrap();
            assert_eq!(tag.subcategory(), sub);
        }
    }

    #[test]
    fn histogram_counts_sum_to_input_length() {
        let tags = vec![
            CommonSenseTag::of(Subcategory::Relationship),
            CommonSenseTag::of(Subcategory::Plausibility),
            CommonSenseTag::of(Subcategory::Environment),
            CommonSenseTag::of(Subcategory::Order),
        ];
        let hist = category_histogram(&tags);
        assert_eq!(hist[&Category::Space], 3);
        assert_eq!(hist[&Category::Time], 1);
        assert_eq!(hist[&Category::FundamentalPhysics], 0);
        assert_eq!(hist.values().sum::<usize>(), tags.len());
    }

    #[test]
    fn histogram_of_empty_input_is_all_zeros() {
        let hist = category_histogram(&[]);
        assert_eq!(hist.len(), 3);
        assert!(hist.values().all(|&v| v == 0));
    }

    #[test]
    fn tag_serde_round_trip() {
        for sub in Subcategory::ALL {
            let tag = CommonSenseTag::of(sub);
            let json = serde_json::to_string(&tag).unwrap();
            let back: CommonSenseTag = serde_json::from_str(&json).unwrap();
            assert_eq!(tag, back);
        }
        let json =
            serde_json::to_string(&CommonSenseTag::of(Subcategory::ObjectPermanence)).unwrap();
        assert_eq!(
            json,
            r#"{"category":"fundamental_physics","subcategory":"object_permanence"}"#
        );
    }

    #[test]
    fn tag_deserialize_rejects_mismatch() {
        let err = serde_json::from_str::<CommonSenseTag>(
            r#"{"category":"space","subcategory":"causality"}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn embodied_ontology_dimensions() {
        assert_eq!(Capability::ALL.len(), 4);
        assert_eq!(Agent::ALL.len(), 5);
        let tag = EmbodiedTag::parse("Predict Action Effects", "robot_arm").unwrap();
        assert_eq!(tag.capability, Capability::PredictActionEffects);
        assert_eq!(tag.agent, Agent::RobotArm);
        let json = serde_json::to_string(&tag).unwrap();
        assert_eq!(
            json,
            r#"{"capability":"predict_action_effects","agent":"robot_arm"}"#
        );
        let back: EmbodiedTag = serde_json::from_str(&json).unwrap();
        assert_eq!(tag, back);
    }
}
