//! Scored individuals and the populations they form.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

/// Value of the sensitive attribute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub String);

impl GroupId {
    pub fn new(s: impl Into<String>) -> Self {
        GroupId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GroupId {
    fn from(s: &str) -> Self {
        GroupId(s.to_owned())
    }
}

/// A (group, legitimate stratum) pair. Rules and baselines are keyed by cells;
/// `stratum` is `None` unless conditional statistical parity is in play.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub group: GroupId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

impl CellKey {
    pub fn group(group: impl Into<GroupId>) -> Self {
        CellKey { group: group.into(), stratum: None }
    }

    pub fn with_stratum(group: impl Into<GroupId>, stratum: impl Into<String>) -> Self {
        CellKey { group: group.into(), stratum: Some(stratum.into()) }
    }
}

impl From<String> for GroupId {
    fn from(s: String) -> Self {
        GroupId(s)
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.stratum {
            Some(s) => write!(f, "{}/{}", self.group, s),
            None => write!(f, "{}", self.group),
        }
    }
}

/// One scored individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LabeledInstance<T = f64> {
    pub id: String,
    pub raw_score: T,
    pub group: GroupId,
    pub outcome: Option<bool>,
    pub stratum: Option<String>,
    pub decision: Option<bool>,
    pub calibrated_p: Option<T>,
}

impl<T: Real> LabeledInstance<T> {
    pub fn new(id: impl Into<String>, raw_score: T, group: impl Into<GroupId>) -> Self {
        LabeledInstance {
            id: id.into(),
            raw_score,
            group: group.into(),
            outcome: None,
            stratum: None,
            decision: None,
            calibrated_p: None,
        }
    }

    pub fn with_outcome(mut self, y: bool) -> Self {
        self.outcome = Some(y);
        self
    }

    pub fn with_decision(mut self, d: bool) -> Self {
        self.decision = Some(d);
        self
    }

    pub fn with_stratum(mut self, s: impl Into<String>) -> Self {
        self.stratum = Some(s.into());
        self
    }

    pub fn with_calibrated(mut self, p: T) -> Self {
        self.calibrated_p = Some(p);
        self
    }

    pub fn cell(&self) -> CellKey {
        CellKey { group: self.group.clone(), stratum: self.stratum.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopulationError {
    #[error("instance {id}: calibrated probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { id: String, value: f64 },
    #[error("instance {id}: group {group} is not in the declared group set")]
    UndeclaredGroup { id: String, group: GroupId },
    #[error("instance {id}: raw score is not finite")]
    NonFiniteScore { id: String },
}

/// Instances plus the declared finite group set.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<T = f64> {
    groups: BTreeSet<GroupId>,
    instances: Vec<LabeledInstance<T>>,
}

impl<T: Real> Population<T> {
    /// Declares exactly the groups that occur in `instances`.
    pub fn from_instances(instances: Vec<LabeledInstance<T>>) -> Result<Self, PopulationError> {
        let groups = instances.iter().map(|i| i.group.clone()).collect();
        Self::with_groups(groups, instances)
    }

    pub fn with_groups(
        groups: BTreeSet<GroupId>,
        instances: Vec<LabeledInstance<T>>,
    ) -> Result<Self, PopulationError> {
        for inst in &instances {
            if !inst.raw_score.is_finite() {
                return Err(PopulationError::NonFiniteScore { id: inst.id.clone() });
            }
            if let Some(p) = inst.calibrated_p {
                if !(p >= T::zero() && p <= T::one()) {
                    return Err(PopulationError::ProbabilityOutOfRange {
                        id: inst.id.clone(),
                        value: p.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
            if !groups.contains(&inst.group) {
                return Err(PopulationError::UndeclaredGroup {
                    id: inst.id.clone(),
                    group: inst.group.clone(),
                });
            }
        }
        Ok(Population { groups, instances })
    }

    pub fn groups(&self) -> &BTreeSet<GroupId> {
        &self.groups
    }

    pub fn instances(&self) -> &[LabeledInstance<T>] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<LabeledInstance<T>> {
        self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn in_group<'a>(&'a self, g: &'a GroupId) -> impl Iterator<Item = &'a LabeledInstance<T>> + 'a {
        self.instances.iter().filter(move |i| &i.group == g)
    }

    /// Distinct strata present, in order.
    pub fn strata(&self) -> BTreeSet<String> {
        self.instances.iter().filter_map(|i| i.stratum.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_probability() {
        let inst = LabeledInstance::new("a", 0.3, "g").with_calibrated(1.2);
        assert!(matches!(
            Population::from_instances(vec![inst]),
            Err(PopulationError::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_undeclared_group() {
        let groups = [GroupId::from("a")].into_iter().collect();
        let inst = LabeledInstance::new("x", 0.3, "b");
        assert!(matches!(
            Population::with_groups(groups, vec![inst]),
            Err(PopulationError::UndeclaredGroup { .. })
        ));
    }

    #[test]
    fn declared_groups_may_be_empty() {
        let groups: BTreeSet<_> = ["a", "b"].into_iter().map(GroupId::from).collect();
        let pop = Population::with_groups(groups, vec![LabeledInstance::new("x", 0.1, "a")]).unwrap();
        assert_eq!(pop.groups().len(), 2);
        assert_eq!(pop.in_group(&GroupId::from("b")).count(), 0);
    }
}
