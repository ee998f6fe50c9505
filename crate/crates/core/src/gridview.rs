//! Group-review workflow for machine-seeded annotations: group entries by an
//! attribute value, then accept, reject, relabel or prune whole groups.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::model::{AttributeId, MetadataId, ModelError, Project, Value};

/// Group key. `Unset` collects entries that lack the attribute and sorts
/// after every value. Checkbox values are sets, so they are already in
/// canonical (sorted) form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    Value(Value),
    Unset,
}

impl GroupKey {
    pub fn value(&self) -> Option<&Value> {
        match self {
            GroupKey::Value(v) => Some(v),
            GroupKey::Unset => None,
        }
    }

    pub fn is(&self, option: &str) -> bool {
        matches!(self, GroupKey::Value(Value::Text(v)) if v == option)
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Value(v) => v.fmt(f),
            GroupKey::Unset => f.write_str("(unset)"),
        }
    }
}

/// Snapshot of one group, valid for the revision it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub key: GroupKey,
    pub members: Vec<MetadataId>,
    pub source_attribute: AttributeId,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("unknown attribute {0}")]
    UnknownAttribute(AttributeId),
    #[error("invalid value for {aid}: {reason}")]
    InvalidValue { aid: AttributeId, reason: String },
    #[error("group {key} on {aid} no longer matches the project")]
    StaleGroup { aid: AttributeId, key: String },
    #[error("{0} is not a member of the group")]
    NotMember(MetadataId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Partitions every entry whose kind matches the attribute's anchor.
/// Groups are ordered by key with `Unset` last; members keep project order.
pub fn group_by(p: &Project, aid: &AttributeId) -> Result<Vec<Group>, GridError> {
    let attr = p
        .attribute(aid.as_str())
        .ok_or_else(|| GridError::UnknownAttribute(aid.clone()))?;
    let mut groups: BTreeMap<GroupKey, Vec<MetadataId>> = BTreeMap::new();
    for entry in p.metadata().values().filter(|e| e.anchor() == attr.anchor) {
        let key = entry
            .av
            .get(aid)
            .map_or(GroupKey::Unset, |v| GroupKey::Value(v.clone()));
        groups.entry(key).or_default().push(entry.mid.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(key, members)| Group {
            key,
            members,
            source_attribute: aid.clone(),
            revision: p.revision(),
        })
        .collect())
}

/// A group is still usable when the project has not moved since it was
/// taken, or when regrouping yields exactly the same members for its key.
fn ensure_current(p: &Project, group: &Group) -> Result<(), GridError> {
    if p.revision() == group.revision {
        return Ok(());
    }
    let stale = || GridError::StaleGroup {
        aid: group.source_attribute.clone(),
        key: group.key.to_string(),
    };
    let now = group_by(p, &group.source_attribute).map_err(|_| stale())?;
    match now.iter().find(|g| g.key == group.key) {
        Some(g) if g.members == group.members => Ok(()),
        _ => Err(stale()),
    }
}

/// Sets `aid = value` on every member. Members that already hold the value
/// are left alone, so the revision grows by the number of entries actually
/// changed. Returns that number.
pub fn bulk_set(p: &mut Project, group: &Group, aid: &AttributeId, value: Value) -> Result<usize, GridError> {
    let attr = p
        .attribute(aid.as_str())
        .ok_or_else(|| GridError::UnknownAttribute(aid.clone()))?;
    attr.check_value(&value).map_err(|reason| GridError::InvalidValue {
        aid: aid.clone(),
        reason,
    })?;
    ensure_current(p, group)?;

    let mut drafts = Vec::new();
    for mid in &group.members {
        let entry = p.entry(mid.as_str()).ok_or_else(|| GridError::NotMember(mid.clone()))?;
        if entry.av.get(aid) == Some(&value) {
            continue;
        }
        let mut draft = entry.to_draft();
        draft.av.insert(aid.clone(), value.clone());
        p.check_draft(&draft)?;
        drafts.push((mid.clone(), draft));
    }
    let changed = drafts.len();
    for (mid, draft) in drafts {
        p.upsert_metadata(Some(&mid), draft)?;
    }
    Ok(changed)
}

/// Keeps the groups whose key satisfies `keep`, in their original order.
pub fn filter_groups<F>(groups: &[Group], mut keep: F) -> Vec<Group>
where
    F: FnMut(&GroupKey) -> bool,
{
    groups.iter().filter(|g| keep(&g.key)).cloned().collect()
}

/// Deletes `mids` (a subset of the group's members) from the project.
pub fn remove_members(p: &mut Project, group: &Group, mids: &[MetadataId]) -> Result<(), GridError> {
    let members: HashSet<&MetadataId> = group.members.iter().collect();
    if let Some(outsider) = mids.iter().find(|m| !members.contains(m)) {
        return Err(GridError::NotMember(outsider.clone()));
    }
    if mids.is_empty() {
        return Ok(());
    }
    ensure_current(p, group)?;
    let unique: Vec<&MetadataId> = {
        let mut seen = HashSet::new();
        mids.iter().filter(|m| seen.insert(*m)).collect()
    };
    for mid in unique {
        p.delete_metadata(mid)?;
    }
    Ok(())
}
