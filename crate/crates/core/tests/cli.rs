//! Drives the `uma-odrl` binary the way an operator would.

use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_uma-odrl");
const ALICE: &str = "https://alice.example/id";
const IDP: &str = "https://idp.example";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn(dir: &Path, args: &[&str]) -> Server {
    Server(Command::new(BIN).args(args).current_dir(dir).stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap())
}

fn wait_healthy(url: &str) {
    let deadline = Instant::now() + Duration::from_secs(20);
    let client = reqwest::blocking_free_get;
    while Instant::now() < deadline {
        if client(url) {
            return;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    panic!("{url} never became healthy");
}

mod reqwest {
    /// Minimal HTTP/1.0 GET so the test needs no blocking client.
    pub fn blocking_free_get(url: &str) -> bool {
        use std::io::{Read, Write};
        let rest = url.strip_prefix("http://").unwrap();
        let (host, path) = rest.split_once('/').map(|(h, p)| (h, format!("/{p}"))).unwrap_or((rest, "/".into()));
        let Ok(mut s) = std::net::TcpStream::connect(host) else {
            return false;
        };
        let _ = write!(s, "GET {path} HTTP/1.0\r\nHost: {host}\r\n\r\n");
        let mut buf = String::new();
        let _ = s.read_to_string(&mut buf);
        buf.starts_with("HTTP/1.0 200") || buf.starts_with("HTTP/1.1 200")
    }
}

fn keygen(dir: &Path) {
    assert!(run(dir, &["keygen", "--out", "as.key"]).status.success());
    let o = run(dir, &["keygen", "--out", "idp.key", "--register", "issuers.json", "--issuer", IDP]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim().len(), 64);
}

#[test]
fn keygen_mint_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    keygen(d);
    let minted = run(d, &["mint-token", "--key", "idp.key", "--webid", ALICE, "--issuer", IDP, "--claim", "purpose=research"]);
    let token = stdout(&minted).trim().to_string();
    let verified = run(d, &["verify-token", "--issuers", "issuers.json", &token]);
    assert!(verified.status.success(), "{}", stderr(&verified));
    assert!(stdout(&verified).contains(ALICE));

    let decoded = run(d, &["mint-token", "--decode", &token]);
    assert!(stdout(&decoded).contains("\"purpose\": \"research\""), "{}", stdout(&decoded));

    let expired = run(d, &["mint-token", "--key", "idp.key", "--webid", ALICE, "--issuer", IDP, "--ttl", "-10"]);
    let o = run(d, &["verify-token", "--issuers", "issuers.json", stdout(&expired).trim()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Expired"), "{}", stderr(&o));
}

#[test]
fn policy_add_list_remove() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("p.json"),
        r#"{"uid":"urn:p1","@type":"Set","permission":[{"uid":"urn:r1","target":"http://rs.example/a","action":"read"}]}"#,
    )
    .unwrap();
    assert!(run(d, &["policy", "add", "--store", "policies", "p.json"]).status.success());
    assert_eq!(stdout(&run(d, &["policy", "list", "--store", "policies"])).trim(), "urn:p1");

    std::fs::write(d.join("bad.json"), "{\"uid\": \"urn:p2\",\n \"@type\": \"Set\", \"permission\": 7}").unwrap();
    let o = run(d, &["policy", "add", "--store", "policies", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2") && stderr(&o).contains("permission"), "{}", stderr(&o));

    assert_eq!(run(d, &["policy", "remove", "--store", "policies", "urn:nope"]).status.code(), Some(6));
    assert!(run(d, &["policy", "remove", "--store", "policies", "urn:p1"]).status.success());
    assert_eq!(stdout(&run(d, &["policy", "list", "--store", "policies"])).trim(), "");
}

#[test]
fn serve_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("policies")).unwrap();
    std::fs::write(d.join("issuers.json"), r#"{"issuers":[]}"#).unwrap();
    std::fs::write(
        d.join("as.json"),
        r#"{"issuer":"http://127.0.0.1:1","listen":"127.0.0.1:0","signing_key":"missing.key",
            "issuer_registry":"issuers.json","policy_store":"policies","rs_secret":"s"}"#,
    )
    .unwrap();
    let o = run(d, &["serve-as", "as.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.key"));

    std::fs::write(
        d.join("rs.json"),
        r#"{"listen":"127.0.0.1:0","as_uri":"http://127.0.0.1:1","rs_secret":"s","storage_root":"data"}"#,
    )
    .unwrap();
    let o = run(d, &["serve-rs", "rs.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unreachable"), "{}", stderr(&o));
}

#[test]
fn request_exit_codes_against_live_servers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    keygen(d);
    let (as_port, rs_port) = (free_port(), free_port());
    let as_uri = format!("http://127.0.0.1:{as_port}");
    let rs_base = format!("http://127.0.0.1:{rs_port}");
    std::fs::create_dir_all(d.join("data/docs")).unwrap();
    std::fs::write(d.join("data/docs/a"), "hello").unwrap();
    std::fs::write(
        d.join("p.json"),
        format!(
            r#"{{"uid":"urn:p","@type":"Set","permission":[{{"uid":"urn:r","target":"{rs_base}/docs/a","action":"read","assignee":"{ALICE}"}}]}}"#
        ),
    )
    .unwrap();
    assert!(run(d, &["policy", "add", "--store", "policies", "p.json"]).status.success());
    std::fs::write(
        d.join("as.json"),
        format!(
            r#"{{"issuer":"{as_uri}","listen":"127.0.0.1:{as_port}","signing_key":"as.key",
                "issuer_registry":"issuers.json","policy_store":"policies","rs_secret":"s"}}"#
        ),
    )
    .unwrap();
    std::fs::write(
        d.join("rs.json"),
        format!(r#"{{"listen":"127.0.0.1:{rs_port}","as_uri":"{as_uri}","rs_secret":"s","storage_root":"data"}}"#),
    )
    .unwrap();
    let _as = spawn(d, &["serve-as", "as.json"]);
    wait_healthy(&format!("{as_uri}/.well-known/uma2-configuration"));
    let _rs = spawn(d, &["serve-rs", "rs.json"]);
    wait_healthy(&format!("{rs_base}/healthz"));

    let url = format!("{rs_base}/docs/a");
    let as_alice = ["--webid-key", "idp.key", "--webid", ALICE, "--issuer", IDP];

    let o = run(d, &["request", "GET", &url]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("ticket: "));

    let o = run(d, &[&["request", "GET", &url][..], &as_alice].concat());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).matches("\n1. ").count() + stdout(&o).starts_with("1. ") as usize, 1);
    assert!(stdout(&o).contains("3. [RS-retry]"));

    let o = run(d, &["request", "GET", &url, "--webid-key", "idp.key", "--webid", "https://bob.example/id", "--issuer", IDP]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));

    let o = run(d, &[&["request", "GET", &url, "--direct", "--as-uri", &as_uri, "--existing", "--json"][..], &as_alice].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let t: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(t["steps"].as_array().unwrap().len(), 2);
    assert_eq!(t["rpt_permissions"][0]["resource_id"], url);

    let o = run(
        d,
        &[&["request", "GET", &url, "--explain", "--policies", "policies", "--issuers", "issuers.json"][..], &as_alice].concat(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"PermissionReport\""), "{}", stdout(&o));

    let o = run(d, &["request", "GET", &format!("http://127.0.0.1:{}/x", free_port())]);
    assert_eq!(o.status.code(), Some(5));
}
