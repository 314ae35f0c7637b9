//! User-managed access with ODRL usage-control policies.
//!
//! Two decoupled services:
//!
//! * an authorization server ([`auth_server`]) that issues permission
//!   tickets, verifies claim tokens ([`claims`]), evaluates ODRL policies
//!   ([`odrl`], [`store`], [`engine`]) and signs Requesting Party Tokens
//!   ([`rpt`]) carrying exactly the granted permissions;
//! * a resource server ([`resource_server`]) hosting a document/container
//!   hierarchy, which never evaluates policies: it computes the permissions
//!   an HTTP operation needs, checks them against a presented RPT, and
//!   otherwise answers `401` with a fresh ticket.
//!
//! [`client`] drives the grant flow as the requesting party's client.

pub mod auth_server;
pub mod claims;
pub mod client;
pub mod clock;
pub mod engine;
pub mod iri;
pub mod odrl;
pub mod permission;
pub mod resource_server;
pub mod rpt;
pub mod store;
pub mod ticket;
pub mod token;

/// The fixed UMA grant type accepted by the token endpoint.
pub const UMA_GRANT_TYPE: &str = "urn:ietf:params:oauth:grant-type:uma-ticket";
