//! Evaluate requests against a policy set and print the compliance reports
//! behind each decision.
//!
//!     cargo run --example evaluate_policy

use chrono::{DateTime, Duration, Utc};
use uma_odrl::claims::VerifiedClaims;
use uma_odrl::engine::{grant_with_reports, Resolution, StateOfTheWorld};
use uma_odrl::odrl::{Constraint, LeftOperand, Operator, Policy, PolicyType, RightOperand, Rule};
use uma_odrl::permission::RequestedPermission;
use uma_odrl::store::PolicySet;

const DOC: &str = "https://pod.example/notes/today";
const ALICE: &str = "https://alice.example/id";

fn main() {
    let deadline: DateTime<Utc> = "2026-03-01T00:00:00Z".parse().unwrap();
    let mut set = PolicySet::new();
    let p = Policy::new(
        "urn:policy:notes",
        PolicyType::Set,
        vec![
            Rule::permission("urn:rule:read", DOC, "read").with_assignee(ALICE).with_constraint(Constraint::new(
                LeftOperand::DateTime,
                Operator::Lt,
                RightOperand::Timestamp(deadline.fixed_offset()),
            )),
            Rule::permission("urn:rule:modify", DOC, "modify").with_assignee(ALICE),
            Rule::prohibition("urn:rule:no-ads", DOC, "read").with_constraint(Constraint::new(
                LeftOperand::Purpose,
                Operator::Eq,
                RightOperand::Text("advertising".into()),
            )),
        ],
    );
    set.insert(p.uid.clone(), p);

    let wanted = [RequestedPermission::new(DOC, ["read", "modify"]).unwrap()];
    let cases = [
        ("before the deadline", VerifiedClaims::trusted(ALICE, "https://idp.example", deadline), deadline - Duration::seconds(1)),
        ("at the deadline", VerifiedClaims::trusted(ALICE, "https://idp.example", deadline), deadline),
        (
            "for advertising",
            VerifiedClaims::trusted(ALICE, "https://idp.example", deadline).with_context("purpose", "advertising"),
            deadline - Duration::days(1),
        ),
    ];
    for (label, claims, now) in cases {
        let (decision, reports) =
            grant_with_reports(&set, &claims, &wanted, &StateOfTheWorld::at(now), Resolution::default()).unwrap();
        println!("== {label}");
        println!("granted: {:?}", decision.granted);
        for d in &decision.denied_with_reason {
            println!("denied:  {} {} ({:?})", d.resource, d.action, d.reason);
        }
        for r in &reports {
            for rr in &r.rule_reports {
                println!("  {} {:?} {:?}", rr.rule, rr.kind, rr.activation);
                for p in &rr.premises {
                    println!("    {:?} {:?}: {}", p.premise_kind, p.status, p.detail);
                }
            }
        }
    }

    // Reports export as canonical JSON.
    let claims = VerifiedClaims::trusted(ALICE, "https://idp.example", deadline);
    let (_, reports) = grant_with_reports(
        &set,
        &claims,
        &[RequestedPermission::new(DOC, ["modify"]).unwrap()],
        &StateOfTheWorld::at(deadline),
        Resolution::default(),
    )
    .unwrap();
    println!("{}", String::from_utf8_lossy(&reports[0].to_canonical_json()));
}
