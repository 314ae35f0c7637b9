//! Policy evaluation.
//!
//! Verified claims and requested permissions become [`EvaluationRequest`]s,
//! one per `(target, action)` pair. Each request is evaluated against every
//! rule whose target equals the request target, producing a
//! [`ComplianceReport`] of [`RuleReport`]s. A rule report is active only
//! when all of its premises are satisfied. [`resolve`] turns reports into a
//! [`Decision`]: a pair is granted iff some active permission report
//! supports it and no active prohibition report applies.
//!
//! Targets are compared as identifiers only. A rule on a container never
//! applies to the container's members.
//!
//! Everything here is a pure function of its inputs; the current time comes
//! from the [`StateOfTheWorld`].

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::claims::VerifiedClaims;
use crate::iri;
use crate::odrl::{format_timestamp, Constraint, LeftOperand, Operator, RightOperand, Rule, RuleKind};
use crate::permission::{self, RequestedPermission};
use crate::store::PolicySet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("no permissions were requested")]
    EmptyRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluationRequest {
    pub requesting_party: String,
    pub target: String,
    pub action: String,
    pub context: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StateOfTheWorld {
    pub current_time: DateTime<Utc>,
    pub facts: BTreeMap<String, Value>,
}

impl StateOfTheWorld {
    pub fn at(current_time: DateTime<Utc>) -> Self {
        Self { current_time, facts: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum PremiseKind {
    TargetMatch,
    ActionMatch,
    PartyMatch,
    ConstraintCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PremiseStatus {
    Satisfied,
    Unsatisfied,
}

impl From<bool> for PremiseStatus {
    fn from(ok: bool) -> Self {
        if ok {
            PremiseStatus::Satisfied
        } else {
            PremiseStatus::Unsatisfied
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PremiseReport {
    pub premise_kind: PremiseKind,
    pub detail: String,
    pub status: PremiseStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReportKind {
    PermissionReport,
    ProhibitionReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Activation {
    Active,
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleReport {
    pub rule: String,
    pub kind: ReportKind,
    pub premises: Vec<PremiseReport>,
    pub activation: Activation,
}

impl RuleReport {
    pub fn is_active(&self) -> bool {
        self.activation == Activation::Active
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComplianceReport {
    pub request: EvaluationRequest,
    pub rule_reports: Vec<RuleReport>,
}

impl ComplianceReport {
    /// Canonical JSON document (sorted keys, reports ordered by rule uid).
    pub fn to_canonical_json(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("report json");
        let mut out = serde_json::to_vec_pretty(&value).expect("report json");
        out.push(b'\n');
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum DenyReason {
    NoActiveRule,
    ProhibitionOverride,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Denial {
    pub resource: String,
    pub action: String,
    pub reason: DenyReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    pub granted: BTreeSet<(String, String)>,
    pub denied_with_reason: Vec<Denial>,
}

impl Decision {
    /// Granted pairs regrouped per resource.
    pub fn granted_permissions(&self) -> Vec<RequestedPermission> {
        permission::merge(self.granted.iter().map(|(r, a)| RequestedPermission {
            resource: r.clone(),
            access_rights: BTreeSet::from([a.clone()]),
        }))
    }

    pub fn is_empty(&self) -> bool {
        self.granted.is_empty()
    }
}

/// Conflict handling. Default-deny is always in force; overriding
/// permissions with prohibitions is on unless explicitly disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub prohibition_overrides_permission: bool,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { prohibition_overrides_permission: true }
    }
}

/// Expands requested permissions into one evaluation request per access
/// right, each carrying the verified WebID and claim context.
pub fn build_requests(
    claims: &VerifiedClaims,
    requested: &[RequestedPermission],
) -> Result<Vec<EvaluationRequest>, EngineError> {
    let requests: Vec<EvaluationRequest> = requested
        .iter()
        .flat_map(|p| p.pairs())
        .map(|(target, action)| EvaluationRequest {
            requesting_party: claims.webid.clone(),
            target: target.to_string(),
            action: action.to_string(),
            context: claims.context.clone(),
        })
        .collect();
    if requests.is_empty() {
        return Err(EngineError::EmptyRequest);
    }
    Ok(requests)
}

pub fn evaluate(policies: &PolicySet, request: &EvaluationRequest, sotw: &StateOfTheWorld) -> ComplianceReport {
    let mut rule_reports: Vec<RuleReport> = policies
        .values()
        .flat_map(|p| p.rules.iter())
        .filter(|r| iri::same_resource(&r.target, &request.target))
        .map(|r| rule_report(r, request, sotw))
        .collect();
    rule_reports.sort_by(|a, b| a.rule.cmp(&b.rule));
    ComplianceReport { request: request.clone(), rule_reports }
}

fn rule_report(rule: &Rule, request: &EvaluationRequest, sotw: &StateOfTheWorld) -> RuleReport {
    let mut premises = Vec::with_capacity(3 + rule.constraints.len());
    premises.push(PremiseReport {
        premise_kind: PremiseKind::TargetMatch,
        detail: format!("rule target {} vs request target {}", rule.target, request.target),
        status: iri::same_resource(&rule.target, &request.target).into(),
    });
    premises.push(PremiseReport {
        premise_kind: PremiseKind::ActionMatch,
        detail: format!("rule action {} vs requested action {}", rule.action, request.action),
        status: (rule.action == request.action).into(),
    });
    premises.push(match &rule.assignee {
        None => PremiseReport {
            premise_kind: PremiseKind::PartyMatch,
            detail: format!("rule has no assignee; requesting party {}", request.requesting_party),
            status: PremiseStatus::Satisfied,
        },
        Some(assignee) => PremiseReport {
            premise_kind: PremiseKind::PartyMatch,
            detail: format!("rule assignee {assignee} vs requesting party {}", request.requesting_party),
            status: (*assignee == request.requesting_party).into(),
        },
    });
    premises.extend(rule.constraints.iter().map(|c| check_constraint(c, request, sotw)));

    let activation = if premises.iter().all(|p| p.status == PremiseStatus::Satisfied) {
        Activation::Active
    } else {
        Activation::Inactive
    };
    RuleReport {
        rule: rule.uid.clone(),
        kind: match rule.kind {
            RuleKind::Permission => ReportKind::PermissionReport,
            RuleKind::Prohibition => ReportKind::ProhibitionReport,
        },
        premises,
        activation,
    }
}

enum Resolved<'a> {
    Time(DateTime<Utc>),
    Text(&'a str),
}

fn check_constraint(c: &Constraint, request: &EvaluationRequest, sotw: &StateOfTheWorld) -> PremiseReport {
    let left = match c.left_operand {
        LeftOperand::DateTime => Some(Resolved::Time(sotw.current_time)),
        LeftOperand::Purpose => request.context.get("purpose").and_then(Value::as_str).map(Resolved::Text),
    };
    let (status, shown) = match &left {
        None => (false, "<unresolved>".to_string()),
        Some(Resolved::Time(t)) => (apply_time(*t, c.operator, &c.right_operand), format_timestamp(&t.fixed_offset())),
        Some(Resolved::Text(s)) => (apply_text(s, c.operator, &c.right_operand), format!("{s:?}")),
    };
    PremiseReport {
        premise_kind: PremiseKind::ConstraintCheck,
        detail: format!(
            "{} ({shown}) {} {}",
            c.left_operand.as_str(),
            c.operator.as_str(),
            c.right_operand
        ),
        status: status.into(),
    }
}

fn apply_time(now: DateTime<Utc>, op: Operator, right: &RightOperand) -> bool {
    match (op, right) {
        (Operator::Eq, RightOperand::Timestamp(t)) => now == *t,
        (Operator::Neq, RightOperand::Timestamp(t)) => now != *t,
        (Operator::Lt, RightOperand::Timestamp(t)) => now < *t,
        (Operator::Lteq, RightOperand::Timestamp(t)) => now <= *t,
        (Operator::Gt, RightOperand::Timestamp(t)) => now > *t,
        (Operator::Gteq, RightOperand::Timestamp(t)) => now >= *t,
        (Operator::IsAnyOf, RightOperand::TimestampList(ts)) => ts.iter().any(|t| now == *t),
        _ => false,
    }
}

fn apply_text(value: &str, op: Operator, right: &RightOperand) -> bool {
    match (op, right) {
        (Operator::Eq, RightOperand::Text(s)) => value == s,
        (Operator::Neq, RightOperand::Text(s)) => value != s,
        (Operator::IsAnyOf, RightOperand::TextList(ss)) => ss.iter().any(|s| s == value),
        _ => false,
    }
}

/// Resolves compliance reports into a decision.
pub fn resolve(reports: &[ComplianceReport], resolution: Resolution) -> Decision {
    let mut outcome: BTreeMap<(String, String), Option<DenyReason>> = BTreeMap::new();
    for report in reports {
        let active = || report.rule_reports.iter().filter(|r| r.is_active());
        let permitted = active().any(|r| r.kind == ReportKind::PermissionReport);
        let prohibited = active().any(|r| r.kind == ReportKind::ProhibitionReport);
        let verdict = if prohibited && (resolution.prohibition_overrides_permission || !permitted) {
            Some(DenyReason::ProhibitionOverride)
        } else if permitted {
            None
        } else {
            Some(DenyReason::NoActiveRule)
        };
        let key = (report.request.target.clone(), report.request.action.clone());
        // Identical pairs evaluate identically; keep the first verdict.
        outcome.entry(key).or_insert(verdict);
    }

    let mut decision = Decision::default();
    for ((resource, action), verdict) in outcome {
        match verdict {
            None => {
                decision.granted.insert((resource, action));
            }
            Some(reason) => decision.denied_with_reason.push(Denial { resource, action, reason }),
        }
    }
    decision
}

/// Evaluates every request and returns the reports alongside the decision.
pub fn grant_with_reports(
    policies: &PolicySet,
    claims: &VerifiedClaims,
    requested: &[RequestedPermission],
    sotw: &StateOfTheWorld,
    resolution: Resolution,
) -> Result<(Decision, Vec<ComplianceReport>), EngineError> {
    let reports: Vec<ComplianceReport> = build_requests(claims, requested)?
        .iter()
        .map(|req| evaluate(policies, req, sotw))
        .collect();
    Ok((resolve(&reports, resolution), reports))
}

/// `build_requests`, then `evaluate` per request, then `resolve` with the
/// default resolution.
pub fn grant(
    policies: &PolicySet,
    claims: &VerifiedClaims,
    requested: &[RequestedPermission],
    sotw: &StateOfTheWorld,
) -> Result<Decision, EngineError> {
    grant_with_reports(policies, claims, requested, sotw, Resolution::default()).map(|(d, _)| d)
}
