//! Author an ODRL policy in code, serialize it, read it back, and see what
//! the validator rejects.
//!
//!     cargo run --example policy_authoring

use chrono::DateTime;
use uma_odrl::odrl::{
    parse_policy, serialize_policy, Constraint, LeftOperand, Operator, Policy, PolicyFormat, PolicyType,
    RightOperand, Rule,
};

fn main() {
    let until = DateTime::parse_from_rfc3339("2030-01-01T00:00:00Z").unwrap();
    let policy = Policy::new(
        "urn:policy:medical",
        PolicyType::Agreement,
        vec![
            Rule::permission("urn:rule:read-record", "https://pod.example/health/record", "read")
                .with_assignee("https://doctor.example/id")
                .with_assigner("https://patient.example/id")
                .with_constraint(Constraint::new(LeftOperand::DateTime, Operator::Lt, RightOperand::Timestamp(until)))
                .with_constraint(Constraint::new(
                    LeftOperand::Purpose,
                    Operator::IsAnyOf,
                    RightOperand::TextList(vec!["treatment".into(), "diagnosis".into()]),
                )),
            Rule::prohibition("urn:rule:no-marketing", "https://pod.example/health/record", "read").with_constraint(
                Constraint::new(LeftOperand::Purpose, Operator::Eq, RightOperand::Text("marketing".into())),
            ),
        ],
    );
    policy.validate().expect("valid policy");

    let bytes = serialize_policy(&policy);
    println!("{}", String::from_utf8_lossy(&bytes));
    let back = parse_policy(&bytes, PolicyFormat::OdrlJson).unwrap();
    assert_eq!(back, policy);

    let broken: [(&str, &str); 4] = [
        ("no rules", r#"{"uid":"urn:p","@type":"Set"}"#),
        ("unknown field", r#"{"uid":"urn:p","@type":"Set","permission":[{"uid":"urn:r","target":"https://a/x","action":"read","actor":"me"}]}"#),
        (
            "ordering on purpose",
            r#"{"uid":"urn:p","@type":"Set","permission":[{"uid":"urn:r","target":"https://a/x","action":"read",
               "constraint":[{"leftOperand":"purpose","operator":"gt","rightOperand":"research"}]}]}"#,
        ),
        (
            "timestamp without zone",
            r#"{"uid":"urn:p","@type":"Set","permission":[{"uid":"urn:r","target":"https://a/x","action":"read",
               "constraint":[{"leftOperand":"dateTime","operator":"lt","rightOperand":"2030-01-01T00:00:00"}]}]}"#,
        ),
    ];
    for (what, doc) in broken {
        match parse_policy(doc.as_bytes(), PolicyFormat::OdrlJson) {
            Ok(_) => println!("{what}: accepted?!"),
            Err(e) => println!("{what}: {e}"),
        }
    }
}
