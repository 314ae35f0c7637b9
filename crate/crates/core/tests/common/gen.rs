//! proptest strategies over a small vocabulary so that generated rules and
//! requests actually collide.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, FixedOffset, TimeZone, Utc};
use proptest::prelude::*;
use proptest::sample::{select, subsequence};
use serde_json::Value;

use uma_odrl::claims::VerifiedClaims;
use uma_odrl::odrl::{Constraint, LeftOperand, Operator, Policy, PolicyType, RightOperand, Rule, RuleKind};
use uma_odrl::permission::RequestedPermission;
use uma_odrl::store::PolicySet;

pub const PARTIES: [&str; 3] = ["https://alice.example/id", "https://bob.example/id", "https://carol.example/id"];
pub const TARGETS: [&str; 7] = [
    "http://rs.example/docs/a",
    "HTTP://RS.Example:80/docs/a",
    "http://rs.example/docs/",
    "http://rs.example/docs/b",
    "http://rs.example/c/",
    "http://rs.example/c/x",
    "https://rs.example:443/docs/a",
];
pub const ACTIONS: [&str; 4] = ["read", "modify", "create", "delete"];
pub const PURPOSES: [&str; 3] = ["research", "marketing", "care"];
pub const ISSUER: &str = "https://idp.example";

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

/// Instants within a few seconds of `epoch()`, in UTC or +02:00.
pub fn instant() -> impl Strategy<Value = DateTime<FixedOffset>> {
    (-3i64..=3, any::<bool>()).prop_map(|(s, shifted)| {
        let t = epoch() + Duration::seconds(s);
        let zone = if shifted { FixedOffset::east_opt(7200).unwrap() } else { FixedOffset::east_opt(0).unwrap() };
        t.with_timezone(&zone)
    })
}

pub fn sotw_time() -> impl Strategy<Value = DateTime<Utc>> {
    (-4i64..=4).prop_map(|s| epoch() + Duration::seconds(s))
}

pub fn operator() -> impl Strategy<Value = Operator> {
    select(vec![
        Operator::Eq,
        Operator::Neq,
        Operator::Lt,
        Operator::Lteq,
        Operator::Gt,
        Operator::Gteq,
        Operator::IsAnyOf,
    ])
}

/// Valid constraints only.
pub fn constraint() -> impl Strategy<Value = Constraint> {
    let time = (operator(), instant(), proptest::collection::vec(instant(), 1..4)).prop_map(|(op, t, ts)| {
        let right = if op == Operator::IsAnyOf { RightOperand::TimestampList(ts) } else { RightOperand::Timestamp(t) };
        Constraint::new(LeftOperand::DateTime, op, right)
    });
    let purpose = (
        select(vec![Operator::Eq, Operator::Neq, Operator::IsAnyOf]),
        select(PURPOSES.to_vec()),
        subsequence(PURPOSES.to_vec(), 1..=3),
    )
        .prop_map(|(op, p, ps)| {
            let right = if op == Operator::IsAnyOf {
                RightOperand::TextList(ps.into_iter().map(String::from).collect())
            } else {
                RightOperand::Text(p.to_string())
            };
            Constraint::new(LeftOperand::Purpose, op, right)
        });
    prop_oneof![time, purpose]
}

/// A rule without a uid yet.
pub fn rule_body(targets: &'static [&'static str]) -> impl Strategy<Value = Rule> {
    (
        prop_oneof![3 => Just(RuleKind::Permission), 1 => Just(RuleKind::Prohibition)],
        select(targets.to_vec()),
        select(ACTIONS.to_vec()),
        proptest::option::of(select(PARTIES.to_vec())),
        proptest::collection::vec(constraint(), 0..=2),
    )
        .prop_map(|(kind, target, action, assignee, constraints)| {
            let mut r = Rule::new("", kind, target, action);
            r.assignee = assignee.map(String::from);
            for c in constraints {
                r = r.with_constraint(c);
            }
            r
        })
}

/// Up to `max_rules` rules spread over up to three policies.
pub fn policies_from(targets: &'static [&'static str], max_rules: usize) -> impl Strategy<Value = Vec<Policy>> {
    proptest::collection::vec((rule_body(targets), 0usize..3), 0..=max_rules).prop_map(|rules| {
        let mut buckets: Vec<Vec<Rule>> = vec![Vec::new(); 3];
        for (i, (mut r, bucket)) in rules.into_iter().enumerate() {
            r.uid = format!("urn:rule:{i}");
            buckets[bucket].push(r);
        }
        buckets
            .into_iter()
            .enumerate()
            .filter(|(_, rules)| !rules.is_empty())
            .map(|(i, rules)| Policy::new(format!("urn:policy:{i}"), PolicyType::Set, rules))
            .collect()
    })
}

pub fn policies() -> impl Strategy<Value = Vec<Policy>> {
    policies_from(&TARGETS, 6)
}

pub fn policy_set(policies: &[Policy]) -> PolicySet {
    policies.iter().map(|p| (p.uid.clone(), p.clone())).collect()
}

/// Verified claims with an optional purpose (sometimes not a string).
pub fn claims() -> impl Strategy<Value = VerifiedClaims> {
    (
        select(PARTIES.to_vec()),
        prop_oneof![
            2 => Just(None),
            6 => select(PURPOSES.to_vec()).prop_map(|p| Some(Value::from(p))),
            1 => Just(Some(Value::from(42))),
        ],
    )
        .prop_map(|(webid, purpose)| {
            let c = VerifiedClaims::trusted(webid, ISSUER, epoch());
            match purpose {
                Some(p) => c.with_context("purpose", p),
                None => c,
            }
        })
}

pub fn requested_from(targets: &'static [&'static str]) -> impl Strategy<Value = Vec<RequestedPermission>> {
    proptest::collection::vec(
        (select(targets.to_vec()), subsequence(ACTIONS.to_vec(), 1..=4))
            .prop_map(|(t, rights)| RequestedPermission::new(t, rights).unwrap()),
        1..=3,
    )
}

pub fn requested() -> impl Strategy<Value = Vec<RequestedPermission>> {
    requested_from(&TARGETS)
}

pub fn expansion(requested: &[RequestedPermission]) -> BTreeSet<(String, String)> {
    requested
        .iter()
        .flat_map(|p| p.access_rights.iter().map(move |a| (p.resource.clone(), a.clone())))
        .collect()
}
