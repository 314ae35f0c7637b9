//! What a resource server asks the authorization server for: the permissions
//! each HTTP operation requires, and the storage the operation lands on.
//!
//!     cargo run --example resource_mapping

use uma_odrl::resource_server::mapping::{required_permissions, Method, ResourcePath};
use uma_odrl::resource_server::storage::{Resource, ResourceManager};

fn main() {
    let base = "https://pod.example";
    let ops: [(Method, &str, bool, Option<&str>); 7] = [
        (Method::Get, "/docs/a", true, None),
        (Method::Head, "/docs/", true, None),
        (Method::Patch, "/docs/a", true, None),
        (Method::Put, "/docs/a", true, None),
        (Method::Put, "/docs/new", false, None),
        (Method::Post, "/docs/", true, Some("minted-name")),
        (Method::Delete, "/docs/a", true, None),
    ];
    for (method, path, exists, child) in ops {
        let path = ResourcePath::parse(path).unwrap();
        let required = required_permissions(method, base, &path, exists, child).unwrap();
        let shown: Vec<String> =
            required.iter().map(|p| format!("{} {:?}", p.resource, p.access_rights)).collect();
        println!("{:<6} {:<10} exists={exists:<5} -> {}", method.as_str(), path.as_str(), shown.join(", "));
    }
    println!("DELETE / -> {:?}", required_permissions(Method::Delete, base, &ResourcePath::root(), true, None));
    println!("bad path -> {:?}", ResourcePath::parse("/docs/../etc"));

    let dir = tempfile::tempdir().unwrap();
    let store = ResourceManager::open(dir.path()).unwrap();
    let docs = ResourcePath::parse("/docs/").unwrap();
    store.write(&docs, b"", "").unwrap();
    let a = docs.child("a").unwrap();
    println!("created: {}", store.write(&a, b"{\"n\":1}", "application/json").unwrap());
    println!("created: {}", store.write(&a, b"{\"n\":2}", "application/json").unwrap());
    match store.read(&docs).unwrap() {
        Resource::Container { members } => println!("members of {docs}: {members:?}"),
        other => println!("{other:?}"),
    }
    println!("remove non-empty: {:?}", store.remove(&docs));
}
