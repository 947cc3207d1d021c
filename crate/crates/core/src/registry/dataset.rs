use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Example id -> integer class label (or predicted label).
pub type LabelMap = BTreeMap<String, i64>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetId(pub String);

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DatasetId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Developer,
    Labeler,
    Admin,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Developer, Role::Labeler, Role::Admin];

    /// Labelers and admins may see sealed labels.
    pub fn reads_sealed(self) -> bool {
        matches!(self, Role::Labeler | Role::Admin)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Developer => "developer",
            Role::Labeler => "labeler",
            Role::Admin => "admin",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "developer" => Ok(Role::Developer),
            "labeler" => Ok(Role::Labeler),
            "admin" => Ok(Role::Admin),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// An authenticated caller.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub name: String,
    pub role: Role,
    pub token: String,
}

impl Principal {
    pub fn new(name: impl Into<String>, role: Role, token: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            role,
            token: token.into(),
        }
    }
}

impl fmt::Debug for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Principal")
            .field("name", &self.name)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

/// A labeled dataset. Content is fixed at registration; only the sealing flag
/// changes, when a rotated-out test set is released to developers.
#[derive(Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    id: DatasetId,
    items: LabelMap,
    sealed: bool,
    owner_role: Role,
    created_at_ms: u64,
}

impl LabeledDataset {
    pub fn new(id: DatasetId, items: LabelMap, sealed: bool, owner_role: Role, created_at_ms: u64) -> Self {
        Self {
            id,
            items,
            sealed,
            owner_role,
            created_at_ms,
        }
    }

    pub fn id(&self) -> &DatasetId {
        &self.id
    }

    pub fn sealed(&self) -> bool {
        self.sealed
    }

    pub fn owner_role(&self) -> Role {
        self.owner_role
    }

    pub fn created_at_ms(&self) -> u64 {
        self.created_at_ms
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, example: &str) -> bool {
        self.items.contains_key(example)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.keys().map(String::as_str)
    }

    /// Labels for server-side evaluation. Callers outside the engine must go
    /// through the registry's role checks.
    pub(crate) fn labels(&self) -> &LabelMap {
        &self.items
    }

    pub(crate) fn unseal(&mut self) {
        self.sealed = false;
    }
}

impl fmt::Debug for LabeledDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // never print labels
        f.debug_struct("LabeledDataset")
            .field("id", &self.id)
            .field("len", &self.items.len())
            .field("sealed", &self.sealed)
            .field("owner_role", &self.owner_role)
            .finish()
    }
}

/// What a principal gets back when reading a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "snake_case")]
pub enum LabelView {
    Full { dataset: DatasetId, labels: LabelMap },
    IdsOnly { dataset: DatasetId, ids: Vec<String> },
}

impl LabelView {
    pub fn reveals_labels(&self) -> bool {
        matches!(self, LabelView::Full { .. })
    }
}
