//! A file-backed policy directory, the same layout `uma-odrl policy` and the
//! authorization server use.
//!
//!     cargo run --example policy_store

use uma_odrl::odrl::{Policy, PolicyType, Rule};
use uma_odrl::store::{policy_file_name, PolicyStore};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let store = PolicyStore::open(dir.path()).unwrap();
    for (uid, target) in [("urn:policy:a", "https://pod.example/a"), ("urn:policy:b", "https://pod.example/b")] {
        store
            .put(Policy::new(uid, PolicyType::Set, vec![Rule::permission(format!("{uid}:read"), target, "read")]))
            .unwrap();
    }
    store.save(dir.path()).unwrap();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        println!("file: {}", entry.unwrap().file_name().to_string_lossy());
    }
    println!("urn:policy:a is stored as {}", policy_file_name("urn:policy:a"));

    // Rule uids are unique across the store.
    let clash = Policy::new("urn:policy:c", PolicyType::Set, vec![Rule::permission("urn:policy:a:read", "https://x/", "read")]);
    println!("clash: {:?}", store.put(clash).unwrap_err());

    let other = PolicyStore::load(dir.path()).unwrap();
    println!("reloaded: {:?}", other.list());
    other.delete("urn:policy:b").unwrap();
    other.save(dir.path()).unwrap();
    store.reload().unwrap();
    println!("after delete elsewhere: {:?}", store.list());
    println!("missing: {}", store.get("urn:policy:zzz").unwrap_err());
}
