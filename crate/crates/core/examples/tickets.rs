//! Permission tickets: single use, short lived, bound to the permissions
//! the resource server asked for.
//!
//!     cargo run --example tickets

use chrono::{Duration, Utc};
use uma_odrl::permission::RequestedPermission;
use uma_odrl::ticket::{TicketStore, DEFAULT_TICKET_TTL_SECS};

fn main() {
    let store = TicketStore::new(Duration::seconds(DEFAULT_TICKET_TTL_SECS));
    let now = Utc::now();
    let perms = vec![
        RequestedPermission::new("https://pod.example/docs/a", ["delete"]).unwrap(),
        RequestedPermission::new("https://pod.example/docs/", ["modify"]).unwrap(),
    ];
    let t = store.issue(perms, now).unwrap();
    println!("ticket {} expires {}", t.ticket, t.expires_at);

    println!("first resolve:  {:?}", store.resolve(&t.ticket, now).map(|p| p.len()));
    println!("second resolve: {:?}", store.resolve(&t.ticket, now));

    let late = store.issue(vec![RequestedPermission::new("https://pod.example/x", ["read"]).unwrap()], now).unwrap();
    let edge = now + Duration::seconds(DEFAULT_TICKET_TTL_SECS);
    println!("at ttl peek:    {:?}", store.peek(&late.ticket).map(|t| t.expires_at == edge));
    println!("past ttl:       {:?}", store.resolve(&late.ticket, edge + Duration::seconds(1)));
    println!("unknown:        {:?}", store.resolve("nope", now));
    println!("purged {} tickets", store.purge(edge + Duration::seconds(1)));
}
