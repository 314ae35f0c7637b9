use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use uma_odrl::auth_server::{self, AsConfig};
use uma_odrl::claims::{self, ClaimToken, IssuerRegistry};
use uma_odrl::client::{self, FlowClient, FlowRequest};
use uma_odrl::odrl::{self, PolicyError, PolicyFormat};
use uma_odrl::resource_server::{self, mapping::Method, RsConfig};
use uma_odrl::store::{PolicyStore, StoreError};
use uma_odrl::token;

const EXIT_USAGE: u8 = 2;
const EXIT_ERROR: u8 = 5;
const EXIT_NOT_FOUND: u8 = 6;

#[derive(Parser)]
#[command(name = "uma-odrl", version, about = "UMA 2.0 authorization with ODRL policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the authorization server.
    ServeAs { config: PathBuf },
    /// Run the resource server.
    ServeRs { config: PathBuf },
    /// Generate an Ed25519 key; prints the public key in hex.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Add the public key to this issuer registry under `--issuer`.
        #[arg(long, requires = "issuer")]
        register: Option<PathBuf>,
        #[arg(long)]
        issuer: Option<String>,
    },
    /// Mint an identity token, or decode one with `--decode`.
    MintToken(MintArgs),
    /// Verify an identity token against an issuer registry.
    VerifyToken {
        #[arg(long)]
        issuers: PathBuf,
        token: String,
    },
    /// Manage a policy directory.
    Policy {
        #[command(subcommand)]
        action: PolicyCommand,
    },
    /// Run the grant flow for one operation.
    Request(RequestArgs),
}

#[derive(Args)]
struct MintArgs {
    /// Print header and payload of an existing token.
    #[arg(long, conflicts_with_all = ["key", "webid", "issuer"])]
    decode: Option<String>,
    #[arg(long, required_unless_present = "decode")]
    key: Option<PathBuf>,
    #[arg(long, required_unless_present = "decode")]
    webid: Option<String>,
    #[arg(long, required_unless_present = "decode")]
    issuer: Option<String>,
    /// Extra claim as `name=value`; repeatable.
    #[arg(long = "claim", value_parser = parse_claim)]
    claims: Vec<(String, Value)>,
    /// Lifetime in seconds from now; negative values mint expired tokens.
    #[arg(long, default_value_t = 3600, allow_hyphen_values = true)]
    ttl: i64,
}

#[derive(Subcommand)]
enum PolicyCommand {
    Add {
        #[arg(long)]
        store: PathBuf,
        file: PathBuf,
    },
    List {
        #[arg(long)]
        store: PathBuf,
    },
    Remove {
        #[arg(long)]
        store: PathBuf,
        uid: String,
    },
}

#[derive(Args)]
struct RequestArgs {
    method: String,
    url: String,
    #[arg(long, conflicts_with = "webid_key")]
    claim_token: Option<String>,
    /// Mint a claim token on the fly with this key.
    #[arg(long, requires_all = ["webid", "issuer"])]
    webid_key: Option<PathBuf>,
    #[arg(long)]
    webid: Option<String>,
    #[arg(long)]
    issuer: Option<String>,
    #[arg(long = "claim", value_parser = parse_claim)]
    claims: Vec<(String, Value)>,
    /// Skip the RS attempt and ask this AS directly.
    #[arg(long)]
    direct: bool,
    #[arg(long, requires = "direct")]
    as_uri: Option<String>,
    /// In direct mode, treat the target as existing.
    #[arg(long)]
    existing: bool,
    #[arg(long)]
    body: Option<String>,
    #[arg(long, default_value = "text/plain")]
    content_type: String,
    /// Print the local compliance reports (co-located AS only).
    #[arg(long, requires_all = ["policies", "issuers"])]
    explain: bool,
    #[arg(long)]
    policies: Option<PathBuf>,
    #[arg(long)]
    issuers: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn parse_claim(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::ServeAs { config } => serve_as(config),
        Command::ServeRs { config } => serve_rs(config),
        Command::Keygen { out, register, issuer } => keygen(out, register, issuer),
        Command::MintToken(args) => mint_token(args),
        Command::VerifyToken { issuers, token } => verify_token(issuers, token),
        Command::Policy { action } => policy(action),
        Command::Request(args) => request(args),
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Runtime::new().expect("tokio runtime")
}

fn serve_as(path: PathBuf) -> ExitCode {
    let config = match AsConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    // Build once up front so key/registry/store problems are config errors.
    if let Err(e) = config.build() {
        return fail(EXIT_USAGE, e);
    }
    match runtime().block_on(auth_server::serve(&config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_ERROR, e),
    }
}

fn serve_rs(path: PathBuf) -> ExitCode {
    let config = match RsConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    match runtime().block_on(resource_server::serve(&config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_ERROR, e),
    }
}

fn keygen(out: PathBuf, register: Option<PathBuf>, issuer: Option<String>) -> ExitCode {
    let key = token::generate_signing_key();
    if let Err(e) = token::write_signing_key(&out, &key) {
        return fail(EXIT_ERROR, e);
    }
    if let (Some(reg_path), Some(issuer)) = (register, issuer) {
        let mut reg = if reg_path.exists() {
            match IssuerRegistry::load(&reg_path) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_USAGE, e),
            }
        } else {
            IssuerRegistry::new()
        };
        if let Err(e) = reg.register(issuer, key.verifying_key()) {
            return fail(EXIT_USAGE, e);
        }
        if let Err(e) = reg.save(&reg_path) {
            return fail(EXIT_ERROR, e);
        }
    }
    println!("{}", hex::encode(key.verifying_key().as_bytes()));
    ExitCode::SUCCESS
}

fn mint(key: &PathBuf, webid: &str, issuer: &str, claims: Vec<(String, Value)>, ttl: i64) -> Result<ClaimToken, String> {
    let key = token::read_signing_key(key).map_err(|e| e.to_string())?;
    let claims: BTreeMap<String, Value> = claims.into_iter().collect();
    Ok(claims::mint_test_token(webid, issuer, &key, &claims, Utc::now() + Duration::seconds(ttl)))
}

fn mint_token(args: MintArgs) -> ExitCode {
    if let Some(raw) = args.decode {
        return match token::decode(&raw) {
            Ok(d) => {
                let out = serde_json::json!({ "header": d.header, "payload": d.payload });
                println!("{}", serde_json::to_string_pretty(&out).unwrap());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_USAGE, e),
        };
    }
    let (key, webid, issuer) = (args.key.unwrap(), args.webid.unwrap(), args.issuer.unwrap());
    match mint(&key, &webid, &issuer, args.claims, args.ttl) {
        Ok(t) => {
            println!("{}", t.raw);
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn verify_token(issuers: PathBuf, raw: String) -> ExitCode {
    let registry = match IssuerRegistry::load(&issuers) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    match claims::verify(&ClaimToken::id_token(raw), &registry, Utc::now()) {
        Ok(c) => {
            println!("{}", serde_json::to_string_pretty(&c).unwrap());
            ExitCode::SUCCESS
        }
        Err(e) => fail(1, format!("{e:?}: {e}")),
    }
}

fn policy(action: PolicyCommand) -> ExitCode {
    let store_err = |e: StoreError| match e {
        StoreError::NotFound(_) => fail(EXIT_NOT_FOUND, e),
        other => fail(EXIT_USAGE, other),
    };
    match action {
        PolicyCommand::Add { store, file } => {
            let bytes = match std::fs::read(&file) {
                Ok(b) => b,
                Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", file.display())),
            };
            let policy = match odrl::parse_policy(&bytes, PolicyFormat::OdrlJson) {
                Ok(p) => p,
                Err(e @ PolicyError::Parse { .. }) => return fail(EXIT_USAGE, format!("{}: {e}", file.display())),
                Err(e) => return fail(EXIT_USAGE, e),
            };
            let uid = policy.uid.clone();
            let store_obj = match PolicyStore::open(&store) {
                Ok(s) => s,
                Err(e) => return store_err(e),
            };
            match store_obj.put(policy).and_then(|_| store_obj.save(&store)) {
                Ok(()) => {
                    println!("{uid}");
                    ExitCode::SUCCESS
                }
                Err(e) => store_err(e),
            }
        }
        PolicyCommand::List { store } => match PolicyStore::open(&store) {
            Ok(s) => {
                for uid in s.list() {
                    println!("{uid}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => store_err(e),
        },
        PolicyCommand::Remove { store, uid } => {
            let s = match PolicyStore::open(&store) {
                Ok(s) => s,
                Err(e) => return store_err(e),
            };
            match s.delete(&uid).and_then(|_| s.save(&store)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => store_err(e),
            }
        }
    }
}

fn request(args: RequestArgs) -> ExitCode {
    let method: Method = match args.method.parse() {
        Ok(m) => m,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let claim_token = match (&args.claim_token, &args.webid_key) {
        (Some(raw), _) => Some(ClaimToken::id_token(raw.clone())),
        (None, Some(key)) => {
            match mint(key, args.webid.as_deref().unwrap(), args.issuer.as_deref().unwrap(), args.claims.clone(), 300) {
                Ok(t) => Some(t),
                Err(e) => return fail(EXIT_USAGE, e),
            }
        }
        (None, None) => None,
    };
    let mut req = FlowRequest::new(method, &args.url);
    if let Some(body) = &args.body {
        req = req.with_body(body.clone().into_bytes(), &args.content_type);
    }
    if let Some(t) = &claim_token {
        req = req.with_claim_token(t.clone());
    }
    if args.direct {
        let Some(as_uri) = &args.as_uri else {
            return fail(EXIT_USAGE, "--direct needs --as-uri");
        };
        req = req.direct(as_uri, args.existing);
    }

    if args.explain {
        if let Err(code) = explain(&args, &req, claim_token.as_ref()) {
            return code;
        }
    }

    let transcript = runtime().block_on(FlowClient::new().run(&req));
    if args.json {
        println!("{}", serde_json::to_string_pretty(&transcript).unwrap());
    } else {
        print!("{}", transcript.to_text());
    }
    ExitCode::from(transcript.outcome.exit_code() as u8)
}

fn explain(args: &RequestArgs, req: &FlowRequest, claim_token: Option<&ClaimToken>) -> Result<(), ExitCode> {
    let Some(token) = claim_token else {
        return Err(fail(EXIT_USAGE, "--explain needs a claim token"));
    };
    let policies = PolicyStore::open(args.policies.as_ref().unwrap()).map_err(|e| fail(EXIT_USAGE, e))?;
    let registry = IssuerRegistry::load(args.issuers.as_ref().unwrap()).map_err(|e| fail(EXIT_USAGE, e))?;
    let requested = client::direct_permissions(req.method, &req.url, args.existing).map_err(|e| fail(EXIT_USAGE, e))?;
    let now: DateTime<Utc> = Utc::now();
    match client::explain(&policies.snapshot(), &registry, token, &requested, now) {
        Ok(reports) => {
            for r in reports {
                println!("{}", String::from_utf8_lossy(&r.to_canonical_json()));
            }
        }
        Err(e) => eprintln!("explain: {e}"),
    }
    Ok(())
}
