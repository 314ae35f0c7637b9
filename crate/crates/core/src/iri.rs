//! IRI helpers shared by policies, permissions and tokens.
//!
//! Equality of resource identifiers is string equality after a narrow
//! normalization: scheme and host are lowercased and the default port for
//! `http`/`https` is dropped. Paths, queries and percent-encodings are left
//! untouched.

/// True when `s` is usable as an identifier: non-empty, no whitespace or
/// control characters.
pub fn is_valid_iri(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// True when `s` is an absolute IRI with a scheme (`scheme:rest`).
pub fn is_absolute_iri(s: &str) -> bool {
    if !is_valid_iri(s) {
        return false;
    }
    match s.split_once(':') {
        Some((scheme, rest)) => {
            !rest.is_empty()
                && scheme.starts_with(|c: char| c.is_ascii_alphabetic())
                && scheme
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        }
        None => false,
    }
}

/// Normalizes scheme/host case and removes default ports.
///
/// Identifiers without an authority component are returned unchanged.
pub fn normalize(iri: &str) -> String {
    let Some((scheme, rest)) = iri.split_once("://") else {
        return iri.to_string();
    };
    if scheme.is_empty() || !scheme.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        return iri.to_string();
    }
    let scheme = scheme.to_ascii_lowercase();
    let split = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let (authority, tail) = rest.split_at(split);

    let (userinfo, hostport) = match authority.rsplit_once('@') {
        Some((u, h)) => (Some(u), h),
        None => (None, authority),
    };
    // IPv6 literals keep their brackets; the port follows the closing one.
    let (host, port) = if hostport.starts_with('[') {
        match hostport.find(']') {
            Some(end) => {
                let (h, p) = hostport.split_at(end + 1);
                (h, p.strip_prefix(':'))
            }
            None => (hostport, None),
        }
    } else {
        match hostport.rsplit_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (hostport, None),
        }
    };
    let default_port = match scheme.as_str() {
        "http" | "ws" => Some("80"),
        "https" | "wss" => Some("443"),
        _ => None,
    };
    let port = match port {
        Some(p) if Some(p) == default_port || p.is_empty() => None,
        other => other,
    };

    let mut out = String::with_capacity(iri.len());
    out.push_str(&scheme);
    out.push_str("://");
    if let Some(u) = userinfo {
        out.push_str(u);
        out.push('@');
    }
    out.push_str(&host.to_ascii_lowercase());
    if let Some(p) = port {
        out.push(':');
        out.push_str(p);
    }
    out.push_str(tail);
    out
}

/// Compares two identifiers under [`normalize`].
pub fn same_resource(a: &str, b: &str) -> bool {
    a == b || normalize(a) == normalize(b)
}
