//! Permission tickets: opaque, single-use, expiring handles for a set of
//! requested permissions.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use thiserror::Error;

use crate::permission::RequestedPermission;
use crate::token::b64;

pub const DEFAULT_TICKET_TTL_SECS: i64 = 300;

/// Random bytes per ticket (256 bits).
const TICKET_BYTES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionTicket {
    pub ticket: String,
    pub requested: Vec<RequestedPermission>,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub consumed: bool,
}

impl PermissionTicket {
    fn expired_at(&self, now: DateTime<Utc>) -> bool {
        now > self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TicketError {
    #[error("no permissions requested")]
    EmptyRequest,
    #[error("unknown ticket")]
    UnknownTicket,
    #[error("ticket expired")]
    ExpiredTicket,
    #[error("ticket already used")]
    ConsumedTicket,
}

#[derive(Debug)]
pub struct TicketStore {
    ttl: Duration,
    tickets: Mutex<HashMap<String, PermissionTicket>>,
}

impl Default for TicketStore {
    fn default() -> Self {
        Self::new(Duration::seconds(DEFAULT_TICKET_TTL_SECS))
    }
}

impl TicketStore {
    pub fn new(ttl: Duration) -> Self {
        assert!(ttl > Duration::zero(), "ticket ttl must be positive");
        Self { ttl, tickets: Mutex::new(HashMap::new()) }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn issue(&self, requested: Vec<RequestedPermission>, now: DateTime<Utc>) -> Result<PermissionTicket, TicketError> {
        if requested.is_empty() || requested.iter().any(|p| p.access_rights.is_empty()) {
            return Err(TicketError::EmptyRequest);
        }
        let mut tickets = self.tickets.lock().expect("ticket store poisoned");
        let ticket = loop {
            let mut bytes = [0u8; TICKET_BYTES];
            rand::rngs::OsRng.fill_bytes(&mut bytes);
            let candidate = b64(&bytes);
            if !tickets.contains_key(&candidate) {
                break candidate;
            }
        };
        let t = PermissionTicket {
            ticket: ticket.clone(),
            requested,
            issued_at: now,
            expires_at: now + self.ttl,
            consumed: false,
        };
        tickets.insert(ticket, t.clone());
        Ok(t)
    }

    /// Consumes the ticket and returns its permissions.
    pub fn resolve(&self, ticket: &str, now: DateTime<Utc>) -> Result<Vec<RequestedPermission>, TicketError> {
        let mut tickets = self.tickets.lock().expect("ticket store poisoned");
        let t = tickets.get_mut(ticket).ok_or(TicketError::UnknownTicket)?;
        if t.consumed {
            return Err(TicketError::ConsumedTicket);
        }
        if t.expired_at(now) {
            return Err(TicketError::ExpiredTicket);
        }
        t.consumed = true;
        Ok(t.requested.clone())
    }

    /// Looks at a ticket without consuming it.
    pub fn peek(&self, ticket: &str) -> Option<PermissionTicket> {
        self.tickets.lock().expect("ticket store poisoned").get(ticket).cloned()
    }

    /// Drops expired and consumed tickets, returning how many were removed.
    pub fn purge(&self, now: DateTime<Utc>) -> usize {
        let mut tickets = self.tickets.lock().expect("ticket store poisoned");
        let before = tickets.len();
        tickets.retain(|_, t| !t.consumed && !t.expired_at(now));
        before - tickets.len()
    }

    pub fn len(&self) -> usize {
        self.tickets.lock().expect("ticket store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::sync::Arc;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 5, 1, 8, 0, 0).unwrap()
    }

    fn perms() -> Vec<RequestedPermission> {
        vec![RequestedPermission::new("https://rs.example/a", ["read"]).unwrap()]
    }

    #[test]
    fn default_ttl_is_300s() {
        let s = TicketStore::default();
        let t = s.issue(perms(), t0()).unwrap();
        assert_eq!(t.expires_at, t0() + Duration::seconds(300));
        assert!(!t.consumed);
        // 32 random bytes, base64url without padding.
        assert_eq!(t.ticket.len(), 43);
        assert!(t.ticket.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
    }

    #[test]
    fn empty_request_rejected() {
        assert_eq!(TicketStore::default().issue(vec![], t0()), Err(TicketError::EmptyRequest));
    }

    #[test]
    fn identical_permissions_get_distinct_tickets() {
        let s = TicketStore::default();
        let a = s.issue(perms(), t0()).unwrap();
        let b = s.issue(perms(), t0()).unwrap();
        assert_ne!(a.ticket, b.ticket);
    }

    #[test]
    fn single_use() {
        let s = TicketStore::default();
        let t = s.issue(perms(), t0()).unwrap();
        assert_eq!(s.resolve(&t.ticket, t0()).unwrap(), perms());
        assert_eq!(s.resolve(&t.ticket, t0()), Err(TicketError::ConsumedTicket));
    }

    #[test]
    fn expiry_boundary() {
        let s = TicketStore::default();
        let a = s.issue(perms(), t0()).unwrap();
        let b = s.issue(perms(), t0()).unwrap();
        assert_eq!(s.resolve(&a.ticket, t0() + Duration::seconds(301)), Err(TicketError::ExpiredTicket));
        assert!(s.resolve(&b.ticket, t0() + Duration::seconds(300)).is_ok());
    }

    #[test]
    fn unknown_ticket() {
        assert_eq!(TicketStore::default().resolve("nope", t0()), Err(TicketError::UnknownTicket));
    }

    #[test]
    fn purge_counts() {
        let s = TicketStore::default();
        assert_eq!(s.purge(t0()), 0);
        for _ in 0..3 {
            s.issue(perms(), t0()).unwrap();
        }
        let live = s.issue(perms(), t0() + Duration::seconds(200)).unwrap();
        assert_eq!(s.purge(t0() + Duration::seconds(301)), 3);
        assert!(s.resolve(&live.ticket, t0() + Duration::seconds(301)).is_ok());
        assert_eq!(s.purge(t0() + Duration::seconds(301)), 1);
        assert!(s.is_empty());
    }

    #[test]
    fn concurrent_resolve_has_one_winner() {
        let s = Arc::new(TicketStore::default());
        let t = s.issue(perms(), t0()).unwrap();
        let barrier = Arc::new(std::sync::Barrier::new(64));
        let handles: Vec<_> = (0..64)
            .map(|_| {
                let (s, ticket, barrier) = (Arc::clone(&s), t.ticket.clone(), Arc::clone(&barrier));
                std::thread::spawn(move || {
                    barrier.wait();
                    s.resolve(&ticket, t0()).is_ok()
                })
            })
            .collect();
        let wins = handles.into_iter().map(|h| h.join().unwrap()).filter(|ok| *ok).count();
        assert_eq!(wins, 1);
    }
}
