//! Translation of HTTP operations into the permissions they require.
//!
//! | operation                  | required                                   |
//! |----------------------------|--------------------------------------------|
//! | GET, HEAD                  | `(path, read)`                             |
//! | PUT, existing resource     | `(path, modify)`                           |
//! | PUT, new resource          | `(path, create)`, `(parent, modify)`       |
//! | PATCH                      | `(path, modify)`                           |
//! | POST to a container        | `(container, modify)`, `(child, create)`   |
//! | DELETE                     | `(path, delete)`, `(parent, modify)`       |

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::permission::{actions, RequestedPermission};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("method {0} not allowed")]
    MethodNotAllowed(String),
    #[error("invalid resource path {0:?}")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Head,
    Put,
    Post,
    Patch,
    Delete,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Get, Method::Head, Method::Put, Method::Post, Method::Patch, Method::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Head => "HEAD",
            Method::Put => "PUT",
            Method::Post => "POST",
            Method::Patch => "PATCH",
            Method::Delete => "DELETE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = MappingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "GET" => Method::Get,
            "HEAD" => Method::Head,
            "PUT" => Method::Put,
            "POST" => Method::Post,
            "PATCH" => Method::Patch,
            "DELETE" => Method::Delete,
            _ => return Err(MappingError::MethodNotAllowed(s.to_string())),
        })
    }
}

/// A normalized resource path. Containers end with `/`, documents do not.
/// Segments are non-empty, never `.`/`..`, and never start with `.`
/// (dot-names are reserved for storage metadata).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourcePath(String);

impl ResourcePath {
    pub fn root() -> Self {
        Self("/".into())
    }

    pub fn parse(path: &str) -> Result<Self, MappingError> {
        let invalid = || MappingError::InvalidPath(path.to_string());
        let rest = path.strip_prefix('/').ok_or_else(invalid)?;
        if rest.is_empty() {
            return Ok(Self::root());
        }
        let body = rest.strip_suffix('/').unwrap_or(rest);
        for seg in body.split('/') {
            if seg.is_empty()
                || seg.starts_with('.')
                || seg.chars().any(|c| c.is_control() || c == '\\')
            {
                return Err(invalid());
            }
        }
        Ok(Self(path.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == "/"
    }

    pub fn is_container(&self) -> bool {
        self.0.ends_with('/')
    }

    pub fn parent(&self) -> Option<ResourcePath> {
        if self.is_root() {
            return None;
        }
        let trimmed = self.0.strip_suffix('/').unwrap_or(&self.0);
        let cut = trimmed.rfind('/').expect("paths start with /");
        Some(ResourcePath(trimmed[..=cut].to_string()))
    }

    /// Last segment, including the trailing `/` for containers.
    pub fn name(&self) -> &str {
        if self.is_root() {
            return "";
        }
        let trimmed = self.0.strip_suffix('/').unwrap_or(&self.0);
        let start = trimmed.rfind('/').expect("paths start with /") + 1;
        &self.0[start..]
    }

    /// Child document of this container.
    pub fn child(&self, name: &str) -> Result<ResourcePath, MappingError> {
        if !self.is_container() || name.contains('/') {
            return Err(MappingError::InvalidPath(format!("{}{name}", self.0)));
        }
        ResourcePath::parse(&format!("{}{name}", self.0))
    }

    /// Segments without separators, e.g. `["docs", "a"]` for `/docs/a`.
    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/').filter(|s| !s.is_empty())
    }
}

impl fmt::Display for ResourcePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Absolute resource identifier for `path` under `base` (no trailing `/`).
pub fn resource_iri(base: &str, path: &ResourcePath) -> String {
    format!("{}{}", base.trim_end_matches('/'), path.as_str())
}

fn one(base: &str, path: &ResourcePath, right: &str) -> RequestedPermission {
    RequestedPermission::new(resource_iri(base, path), [right]).expect("non-empty")
}

/// Permissions an operation needs.
///
/// `exists` only matters for PUT. `new_child` is the server-chosen name of
/// the document a POST creates.
pub fn required_permissions(
    method: Method,
    base: &str,
    path: &ResourcePath,
    exists: bool,
    new_child: Option<&str>,
) -> Result<Vec<RequestedPermission>, MappingError> {
    let not_allowed = || MappingError::MethodNotAllowed(format!("{method} {path}"));
    Ok(match method {
        Method::Get | Method::Head => vec![one(base, path, actions::READ)],
        Method::Patch => vec![one(base, path, actions::MODIFY)],
        Method::Put if exists || path.is_root() => vec![one(base, path, actions::MODIFY)],
        Method::Put => vec![
            one(base, path, actions::CREATE),
            one(base, &path.parent().expect("non-root"), actions::MODIFY),
        ],
        Method::Post => {
            if !path.is_container() {
                return Err(not_allowed());
            }
            let child = path.child(new_child.ok_or_else(not_allowed)?)?;
            vec![one(base, path, actions::MODIFY), one(base, &child, actions::CREATE)]
        }
        Method::Delete => {
            let parent = path.parent().ok_or_else(not_allowed)?;
            vec![one(base, path, actions::DELETE), one(base, &parent, actions::MODIFY)]
        }
    })
}

/// Same as [`required_permissions`] but starting from a method name, so
/// unsupported methods map to [`MappingError::MethodNotAllowed`].
pub fn compute_required_permissions(
    method: &str,
    base: &str,
    path: &str,
    exists: bool,
    new_child: Option<&str>,
) -> Result<Vec<RequestedPermission>, MappingError> {
    let method: Method = method.parse()?;
    required_permissions(method, base, &ResourcePath::parse(path)?, exists, new_child)
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: &str = "http://rs.example";

    fn pairs(v: Vec<RequestedPermission>) -> Vec<(String, Vec<String>)> {
        v.into_iter().map(|p| (p.resource, p.access_rights.into_iter().collect())).collect()
    }

    fn p(r: &str, a: &str) -> (String, Vec<String>) {
        (format!("{B}{r}"), vec![a.to_string()])
    }

    #[test]
    fn get_and_head_read() {
        for m in ["GET", "HEAD", "get"] {
            assert_eq!(pairs(compute_required_permissions(m, B, "/docs/a", true, None).unwrap()), vec![p("/docs/a", "read")]);
        }
    }

    #[test]
    fn delete_needs_parent_modify() {
        assert_eq!(
            pairs(compute_required_permissions("DELETE", B, "/docs/a", true, None).unwrap()),
            vec![p("/docs/a", "delete"), p("/docs/", "modify")]
        );
        assert!(matches!(
            compute_required_permissions("DELETE", B, "/", true, None),
            Err(MappingError::MethodNotAllowed(_))
        ));
    }

    #[test]
    fn put_depends_on_existence() {
        assert_eq!(pairs(compute_required_permissions("PUT", B, "/docs/a", true, None).unwrap()), vec![p("/docs/a", "modify")]);
        assert_eq!(
            pairs(compute_required_permissions("PUT", B, "/docs/a", false, None).unwrap()),
            vec![p("/docs/a", "create"), p("/docs/", "modify")]
        );
        assert_eq!(
            pairs(compute_required_permissions("PUT", B, "/docs/sub/", false, None).unwrap()),
            vec![p("/docs/sub/", "create"), p("/docs/", "modify")]
        );
    }

    #[test]
    fn post_creates_child() {
        assert_eq!(
            pairs(compute_required_permissions("POST", B, "/docs/", true, Some("n1")).unwrap()),
            vec![p("/docs/", "modify"), p("/docs/n1", "create")]
        );
        assert!(compute_required_permissions("POST", B, "/docs/a", true, Some("n1")).is_err());
    }

    #[test]
    fn other_methods_not_allowed() {
        for m in ["OPTIONS", "TRACE", "CONNECT", "PROPFIND"] {
            assert!(matches!(
                compute_required_permissions(m, B, "/docs/a", true, None),
                Err(MappingError::MethodNotAllowed(_))
            ));
        }
    }

    #[test]
    fn path_rules() {
        for bad in ["", "docs", "/a//b", "/a/../b", "/.meta.a", "/a/./b", "/a/.hidden/"] {
            assert!(ResourcePath::parse(bad).is_err(), "{bad}");
        }
        let doc = ResourcePath::parse("/docs/a").unwrap();
        assert_eq!(doc.parent().unwrap().as_str(), "/docs/");
        assert_eq!(doc.name(), "a");
        let c = ResourcePath::parse("/docs/sub/").unwrap();
        assert_eq!(c.parent().unwrap().as_str(), "/docs/");
        assert_eq!(c.name(), "sub/");
        assert_eq!(ResourcePath::parse("/docs/").unwrap().parent().unwrap(), ResourcePath::root());
        assert!(ResourcePath::root().parent().is_none());
    }
}
