//! Requested permissions: `(resource, access rights)` tuples exchanged
//! between the resource server, tickets, tokens and the policy engine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iri;

/// Flat access-right vocabulary shared by the resource server and policies.
pub mod actions {
    pub const READ: &str = "read";
    pub const MODIFY: &str = "modify";
    pub const CREATE: &str = "create";
    pub const DELETE: &str = "delete";
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermissionError {
    #[error("resource identifier must be a non-empty IRI")]
    InvalidResource,
    #[error("permission for {0} requires at least one access right")]
    NoAccessRights(String),
    #[error("access right {0:?} is not a valid IRI")]
    InvalidAccessRight(String),
}

/// A resource together with the access rights requested on it.
///
/// Serializes with the UMA wire names `resource_id` / `resource_scopes`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestedPermission {
    #[serde(rename = "resource_id")]
    pub resource: String,
    #[serde(rename = "resource_scopes")]
    pub access_rights: BTreeSet<String>,
}

impl RequestedPermission {
    pub fn new<I, S>(resource: impl Into<String>, rights: I) -> Result<Self, PermissionError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let p = Self {
            resource: resource.into(),
            access_rights: rights.into_iter().map(Into::into).collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PermissionError> {
        if !iri::is_valid_iri(&self.resource) {
            return Err(PermissionError::InvalidResource);
        }
        if self.access_rights.is_empty() {
            return Err(PermissionError::NoAccessRights(self.resource.clone()));
        }
        if let Some(bad) = self.access_rights.iter().find(|a| !iri::is_valid_iri(a)) {
            return Err(PermissionError::InvalidAccessRight(bad.clone()));
        }
        Ok(())
    }

    /// Expands into one `(resource, action)` pair per access right.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.access_rights
            .iter()
            .map(move |a| (self.resource.as_str(), a.as_str()))
    }
}

/// Merges permissions by resource, unioning their access rights.
///
/// The result is sorted by resource and contains no duplicate resources.
pub fn merge(perms: impl IntoIterator<Item = RequestedPermission>) -> Vec<RequestedPermission> {
    let mut by_resource: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in perms {
        by_resource
            .entry(p.resource)
            .or_default()
            .extend(p.access_rights);
    }
    by_resource
        .into_iter()
        .filter(|(_, rights)| !rights.is_empty())
        .map(|(resource, access_rights)| RequestedPermission { resource, access_rights })
        .collect()
}

/// True when every `(resource, right)` pair of `required` appears in
/// `granted`. Resources are compared under IRI normalization.
pub fn covers(granted: &[RequestedPermission], required: &[RequestedPermission]) -> bool {
    required.iter().all(|req| {
        req.access_rights.iter().all(|right| {
            granted.iter().any(|g| {
                iri::same_resource(&g.resource, &req.resource) && g.access_rights.contains(right)
            })
        })
    })
}
