//! Brute-force reference evaluator. Walks every rule of every policy for
//! every requested (resource, action) pair and applies the premise table
//! literally. Shares no code with the engine beyond the data types.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use std::collections::BTreeMap;

use serde_json::Value;

use uma_odrl::odrl::{Constraint, Policy, RightOperand, Rule, RuleKind};
use uma_odrl::permission::RequestedPermission;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Granted,
    NoActiveRule,
    ProhibitionOverride,
}

/// scheme://host[:port]/rest with scheme and host lowercased and the
/// default port dropped. Enough for the IRIs the generators produce.
pub fn norm(iri: &str) -> String {
    let Some((scheme, rest)) = iri.split_once("://") else {
        return iri.to_string();
    };
    let scheme = scheme.to_lowercase();
    let slash = rest.find('/').unwrap_or(rest.len());
    let (authority, path) = rest.split_at(slash);
    let mut host = authority.to_lowercase();
    let default_port = match scheme.as_str() {
        "http" => Some(":80"),
        "https" => Some(":443"),
        _ => None,
    };
    if let Some(p) = default_port {
        if let Some(stripped) = host.strip_suffix(p) {
            host = stripped.to_string();
        }
    }
    format!("{scheme}://{host}{path}")
}

fn constraint_holds(c: &Constraint, context: &BTreeMap<String, Value>, now: DateTime<Utc>) -> bool {
    let op = c.operator.as_str();
    match c.left_operand.as_str() {
        "dateTime" => {
            let n = now.timestamp_micros();
            match &c.right_operand {
                RightOperand::Timestamp(t) => {
                    let b = t.timestamp_micros();
                    match op {
                        "eq" => n == b,
                        "neq" => n != b,
                        "lt" => n < b,
                        "lteq" => n <= b,
                        "gt" => n > b,
                        "gteq" => n >= b,
                        _ => false,
                    }
                }
                RightOperand::TimestampList(ts) => op == "isAnyOf" && ts.iter().any(|t| t.timestamp_micros() == n),
                _ => false,
            }
        }
        "purpose" => {
            let Some(Value::String(p)) = context.get("purpose") else {
                return false;
            };
            match &c.right_operand {
                RightOperand::Text(s) => match op {
                    "eq" => p == s,
                    "neq" => p != s,
                    _ => false,
                },
                RightOperand::TextList(ss) => op == "isAnyOf" && ss.contains(p),
                _ => false,
            }
        }
        _ => false,
    }
}

pub fn rule_active(
    rule: &Rule,
    webid: &str,
    context: &BTreeMap<String, Value>,
    target: &str,
    action: &str,
    now: DateTime<Utc>,
) -> bool {
    let mut ok = norm(&rule.target) == norm(target);
    ok &= rule.action == action;
    ok &= match &rule.assignee {
        None => true,
        Some(a) => a == webid,
    };
    for c in &rule.constraints {
        ok &= constraint_holds(c, context, now);
    }
    ok
}

/// Verdict for every requested pair, keyed by the pair as requested.
pub fn decide(
    policies: &[Policy],
    webid: &str,
    context: &BTreeMap<String, Value>,
    requested: &[RequestedPermission],
    now: DateTime<Utc>,
) -> BTreeSet<(String, String, Verdict)> {
    let mut out = BTreeSet::new();
    for perm in requested {
        for action in &perm.access_rights {
            let mut permitted = false;
            let mut prohibited = false;
            for policy in policies {
                for rule in &policy.rules {
                    if rule_active(rule, webid, context, &perm.resource, action, now) {
                        match rule.kind {
                            RuleKind::Permission => permitted = true,
                            RuleKind::Prohibition => prohibited = true,
                        }
                    }
                }
            }
            let verdict = if prohibited {
                Verdict::ProhibitionOverride
            } else if permitted {
                Verdict::Granted
            } else {
                Verdict::NoActiveRule
            };
            out.insert((perm.resource.clone(), action.clone(), verdict));
        }
    }
    out
}

pub fn granted(verdicts: &BTreeSet<(String, String, Verdict)>) -> BTreeSet<(String, String)> {
    verdicts
        .iter()
        .filter(|(_, _, v)| *v == Verdict::Granted)
        .map(|(r, a, _)| (r.clone(), a.clone()))
        .collect()
}
