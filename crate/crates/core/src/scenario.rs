//! Scenario scripts: parsing, deterministic execution, and trace export.
//!
//! A script is line oriented. Blank lines and `#` comments are ignored.
//! Header lines (`seed`, `validators`, `clock-step`, `genesis-time`) must
//! precede the first directive. Any directive may be prefixed with
//! `require`, which aborts the run if that step does not succeed.
//!
//! ```text
//! seed 42
//! validators 4
//! create-principal alice owner
//! create-principal fog1 fog address=0x78731D3Ca6b7E34aC0F824c42a7cC18A495cabaB
//! owner-init alice
//! require map-device alice fog1 dev1
//! call alice adminAdd
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crypto::{keccak256, Address, Digest32, KeyPair};
use crate::ledger::{
    FaultMask, GasSchedule, LedgerError, OpTrace, Receipt, TxStatus, ValidatorId, ValidatorSet,
};
use crate::registry::{Operation, Query, QueryOutput, RegistryEvent};
use crate::sessions::{NftPass, Principal, Role, SessionDriver, SessionError, SessionOutcome};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("`{directive}` expects {expected}")]
    Arity {
        directive: String,
        expected: &'static str,
    },
    #[error("undeclared principal `{0}`")]
    UnknownPrincipal(String),
    #[error("principal `{0}` is declared twice")]
    DuplicatePrincipal(String),
    #[error("principal `{0}` has no private key and cannot sign")]
    NotSigner(String),
    #[error("malformed hex `{0}`")]
    MalformedHex(String),
    #[error("malformed number `{0}`")]
    MalformedNumber(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("unknown call method `{0}`")]
    UnknownMethod(String),
    #[error("header `{0}` after the first directive")]
    LateHeader(String),
    #[error("validator {0} is outside the validator set")]
    UnknownValidator(ValidatorId),
    #[error("fault injection needs at least 4 validators")]
    TooFewValidators,
    #[error("`require` must be followed by a directive")]
    EmptyRequire,
}

/// How a principal's identity is obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Identity {
    /// Key pair derived from `(seed, name)`.
    Seeded,
    /// Explicit private key.
    Key(String),
    /// Known address without a key; usable as a mapping target only.
    External(Address),
}

/// An address argument: a declared principal or a literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Principal(String),
    Literal(Address),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum CallSpec {
    AdminAdd,
    NoOfAdmins,
    UsersDevices { user: Target, index: u64 },
    FogDevices { fog: Target, index: u64 },
    TokensIssued,
    BalanceOf { owner: Target },
    OwnerOf { token_id: Digest32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "directive", rename_all = "kebab-case")]
pub enum Directive {
    CreatePrincipal {
        name: String,
        role: Role,
        identity: Identity,
    },
    OwnerInit {
        owner: String,
    },
    Approve {
        admin: String,
        new_admin: Target,
    },
    DelAdmin {
        admin: String,
        target: Target,
    },
    MapDevice {
        admin: String,
        fog: Target,
        device: Target,
    },
    AddUser {
        admin: String,
        user: Target,
        device: Target,
        fog: Target,
    },
    DelDev {
        admin: String,
        fog: Target,
    },
    DelUser {
        admin: String,
        user: Target,
    },
    Mint {
        user: String,
        device: Target,
        fog: Target,
    },
    Call {
        sender: Target,
        call: CallSpec,
    },
    AdvanceClock {
        seconds: u64,
    },
    InjectFault {
        validators: Vec<ValidatorId>,
    },
}

impl Directive {
    pub fn keyword(&self) -> &'static str {
        match self {
            Directive::CreatePrincipal { .. } => "create-principal",
            Directive::OwnerInit { .. } => "owner-init",
            Directive::Approve { .. } => "approve",
            Directive::DelAdmin { .. } => "del-admin",
            Directive::MapDevice { .. } => "map-device",
            Directive::AddUser { .. } => "add-user",
            Directive::DelDev { .. } => "del-dev",
            Directive::DelUser { .. } => "del-user",
            Directive::Mint { .. } => "mint",
            Directive::Call { .. } => "call",
            Directive::AdvanceClock { .. } => "advance-clock",
            Directive::InjectFault { .. } => "inject-fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub line: usize,
    pub required: bool,
    pub directive: Directive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub seed: u64,
    pub validators: usize,
    pub clock_step: u64,
    pub genesis_time: u64,
    pub steps: Vec<Step>,
}

impl Default for ScenarioScript {
    fn default() -> Self {
        Self {
            seed: 0,
            validators: 4,
            clock_step: 1,
            genesis_time: 0,
            steps: Vec::new(),
        }
    }
}

struct Parser {
    script: ScenarioScript,
    /// Declared principals and whether each holds a key.
    declared: BTreeMap<String, bool>,
    line: usize,
}

impl Parser {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            kind,
        }
    }

    fn number<T: std::str::FromStr>(&self, raw: &str) -> Result<T, ParseError> {
        raw.parse()
            .map_err(|_| self.err(ParseErrorKind::MalformedNumber(raw.to_string())))
    }

    fn hex<T: std::str::FromStr>(&self, raw: &str) -> Result<T, ParseError> {
        raw.parse()
            .map_err(|_| self.err(ParseErrorKind::MalformedHex(raw.to_string())))
    }

    fn principal(&self, name: &str) -> Result<String, ParseError> {
        match self.declared.get(name) {
            Some(_) => Ok(name.to_string()),
            None => Err(self.err(ParseErrorKind::UnknownPrincipal(name.to_string()))),
        }
    }

    fn signer(&self, name: &str) -> Result<String, ParseError> {
        match self.declared.get(name) {
            Some(true) => Ok(name.to_string()),
            Some(false) => Err(self.err(ParseErrorKind::NotSigner(name.to_string()))),
            None => Err(self.err(ParseErrorKind::UnknownPrincipal(name.to_string()))),
        }
    }

    fn target(&self, raw: &str) -> Result<Target, ParseError> {
        if raw.starts_with("0x") || raw.starts_with("0X") {
            Ok(Target::Literal(self.hex(raw)?))
        } else {
            Ok(Target::Principal(self.principal(raw)?))
        }
    }

    fn arity(
        &self,
        args: &[&str],
        n: usize,
        directive: &str,
        expected: &'static str,
    ) -> Result<(), ParseError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(self.err(ParseErrorKind::Arity {
                directive: directive.to_string(),
                expected,
            }))
        }
    }

    fn header(&mut self, key: &str, args: &[&str]) -> Result<bool, ParseError> {
        if !matches!(key, "seed" | "validators" | "clock-step" | "genesis-time") {
            return Ok(false);
        }
        if !self.script.steps.is_empty() {
            return Err(self.err(ParseErrorKind::LateHeader(key.to_string())));
        }
        self.arity(args, 1, key, "one number")?;
        match key {
            "seed" => self.script.seed = self.number(args[0])?,
            "validators" => self.script.validators = self.number(args[0])?,
            "clock-step" => self.script.clock_step = self.number(args[0])?,
            _ => self.script.genesis_time = self.number(args[0])?,
        }
        Ok(true)
    }

    fn call(&self, method: &str, args: &[&str]) -> Result<CallSpec, ParseError> {
        let want = |n, expected| self.arity(args, n, method, expected);
        Ok(match method {
            "adminAdd" => {
                want(0, "no arguments")?;
                CallSpec::AdminAdd
            }
            "No_ofAdmins" => {
                want(0, "no arguments")?;
                CallSpec::NoOfAdmins
            }
            "tokens_Issued" => {
                want(0, "no arguments")?;
                CallSpec::TokensIssued
            }
            "users_devices" => {
                want(2, "<user> <index>")?;
                CallSpec::UsersDevices {
                    user: self.target(args[0])?,
                    index: self.number(args[1])?,
                }
            }
            "fog_devices" => {
                want(2, "<fog> <index>")?;
                CallSpec::FogDevices {
                    fog: self.target(args[0])?,
                    index: self.number(args[1])?,
                }
            }
            "balanceOf" => {
                want(1, "<owner>")?;
                CallSpec::BalanceOf {
                    owner: self.target(args[0])?,
                }
            }
            "ownerOf" => {
                want(1, "<token-id>")?;
                CallSpec::OwnerOf {
                    token_id: self.hex(args[0])?,
                }
            }
            other => return Err(self.err(ParseErrorKind::UnknownMethod(other.to_string()))),
        })
    }

    fn directive(&mut self, keyword: &str, args: &[&str]) -> Result<Directive, ParseError> {
        use Directive as D;
        Ok(match keyword {
            "create-principal" => {
                if !(2..=3).contains(&args.len()) {
                    self.arity(args, 2, keyword, "<name> <role> [key=0x..|address=0x..]")?;
                }
                let name = args[0].to_string();
                if name.starts_with("0x") {
                    return Err(self.err(ParseErrorKind::MalformedHex(name)));
                }
                let role = args[1]
                    .parse()
                    .map_err(|_| self.err(ParseErrorKind::UnknownRole(args[1].to_string())))?;
                let identity = match args.get(2).map(|a| a.split_once('=')) {
                    None => Identity::Seeded,
                    Some(Some(("key", raw))) => {
                        let bytes = raw
                            .strip_prefix("0x")
                            .and_then(|h| hex::decode(h).ok())
                            .filter(|b| b.len() == 32)
                            .ok_or_else(|| {
                                self.err(ParseErrorKind::MalformedHex(raw.to_string()))
                            })?;
                        let key: [u8; 32] = bytes.try_into().expect("length checked");
                        if KeyPair::from_private_key(key).is_err() {
                            return Err(self.err(ParseErrorKind::MalformedHex(raw.to_string())));
                        }
                        Identity::Key(format!("0x{}", hex::encode(key)))
                    }
                    Some(Some(("address", raw))) => Identity::External(self.hex(raw)?),
                    Some(_) => {
                        return Err(self.err(ParseErrorKind::Arity {
                            directive: keyword.to_string(),
                            expected: "<name> <role> [key=0x..|address=0x..]",
                        }))
                    }
                };
                if self.declared.contains_key(&name) {
                    return Err(self.err(ParseErrorKind::DuplicatePrincipal(name)));
                }
                self.declared
                    .insert(name.clone(), !matches!(identity, Identity::External(_)));
                D::CreatePrincipal {
                    name,
                    role,
                    identity,
                }
            }
            "owner-init" => {
                self.arity(args, 1, keyword, "<owner>")?;
                D::OwnerInit {
                    owner: self.signer(args[0])?,
                }
            }
            "approve" => {
                self.arity(args, 2, keyword, "<admin> <new-admin>")?;
                D::Approve {
                    admin: self.signer(args[0])?,
                    new_admin: self.target(args[1])?,
                }
            }
            "del-admin" => {
                self.arity(args, 2, keyword, "<admin> <target>")?;
                D::DelAdmin {
                    admin: self.signer(args[0])?,
                    target: self.target(args[1])?,
                }
            }
            "map-device" => {
                self.arity(args, 3, keyword, "<admin> <fog> <device>")?;
                D::MapDevice {
                    admin: self.signer(args[0])?,
                    fog: self.target(args[1])?,
                    device: self.target(args[2])?,
                }
            }
            "add-user" => {
                self.arity(args, 4, keyword, "<admin> <user> <device> <fog>")?;
                D::AddUser {
                    admin: self.signer(args[0])?,
                    user: self.target(args[1])?,
                    device: self.target(args[2])?,
                    fog: self.target(args[3])?,
                }
            }
            "del-dev" => {
                self.arity(args, 2, keyword, "<admin> <fog>")?;
                D::DelDev {
                    admin: self.signer(args[0])?,
                    fog: self.target(args[1])?,
                }
            }
            "del-user" => {
                self.arity(args, 2, keyword, "<admin> <user>")?;
                D::DelUser {
                    admin: self.signer(args[0])?,
                    user: self.target(args[1])?,
                }
            }
            "mint" => {
                self.arity(args, 3, keyword, "<user> <device> <fog>")?;
                D::Mint {
                    user: self.signer(args[0])?,
                    device: self.target(args[1])?,
                    fog: self.target(args[2])?,
                }
            }
            "call" => {
                if args.len() < 2 {
                    self.arity(args, 2, keyword, "<sender> <method> [args..]")?;
                }
                D::Call {
                    sender: self.target(args[0])?,
                    call: self.call(args[1], &args[2..])?,
                }
            }
            "advance-clock" => {
                self.arity(args, 1, keyword, "<seconds>")?;
                D::AdvanceClock {
                    seconds: self.number(args[0])?,
                }
            }
            "inject-fault" => {
                if args.is_empty() {
                    self.arity(args, 1, keyword, "<validator ids..> or `none`")?;
                }
                let validators = if args == ["none"] {
                    Vec::new()
                } else {
                    let mut ids = Vec::new();
                    for raw in args
                        .iter()
                        .flat_map(|a| a.split(','))
                        .filter(|a| !a.is_empty())
                    {
                        let id: ValidatorId = self.number(raw)?;
                        if id as usize >= self.script.validators {
                            return Err(self.err(ParseErrorKind::UnknownValidator(id)));
                        }
                        ids.push(id);
                    }
                    if self.script.validators < 4 {
                        return Err(self.err(ParseErrorKind::TooFewValidators));
                    }
                    ids
                };
                D::InjectFault { validators }
            }
            other => return Err(self.err(ParseErrorKind::UnknownDirective(other.to_string()))),
        })
    }
}

/// Parses a script, reporting the first error with its line number.
pub fn parse(text: &str) -> Result<ScenarioScript, ParseError> {
    let mut p = Parser {
        script: ScenarioScript::default(),
        declared: BTreeMap::new(),
        line: 0,
    };
    for (idx, raw) in text.lines().enumerate() {
        p.line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let required = tokens[0] == "require";
        if required {
            tokens.remove(0);
            if tokens.is_empty() {
                return Err(p.err(ParseErrorKind::EmptyRequire));
            }
        }
        if !required && p.header(tokens[0], &tokens[1..])? {
            continue;
        }
        let directive = p.directive(tokens[0], &tokens[1..])?;
        p.script.steps.push(Step {
            line: p.line,
            required,
            directive,
        });
    }
    Ok(p.script)
}

/// Renders a script back to parseable text.
pub fn render(script: &ScenarioScript) -> String {
    fn target(t: &Target) -> String {
        match t {
            Target::Principal(name) => name.clone(),
            Target::Literal(addr) => addr.to_string(),
        }
    }
    let mut out = format!(
        "seed {}\nvalidators {}\nclock-step {}\ngenesis-time {}\n",
        script.seed, script.validators, script.clock_step, script.genesis_time
    );
    for step in &script.steps {
        if step.required {
            out.push_str("require ");
        }
        out.push_str(step.directive.keyword());
        let args: Vec<String> = match &step.directive {
            Directive::CreatePrincipal {
                name,
                role,
                identity,
            } => {
                let mut v = vec![name.clone(), role.to_string()];
                match identity {
                    Identity::Seeded => {}
                    Identity::Key(k) => v.push(format!("key={k}")),
                    Identity::External(a) => v.push(format!("address={a}")),
                }
                v
            }
            Directive::OwnerInit { owner } => vec![owner.clone()],
            Directive::Approve { admin, new_admin } => vec![admin.clone(), target(new_admin)],
            Directive::DelAdmin { admin, target: t } => vec![admin.clone(), target(t)],
            Directive::MapDevice { admin, fog, device } => {
                vec![admin.clone(), target(fog), target(device)]
            }
            Directive::AddUser {
                admin,
                user,
                device,
                fog,
            } => vec![admin.clone(), target(user), target(device), target(fog)],
            Directive::DelDev { admin, fog } => vec![admin.clone(), target(fog)],
            Directive::DelUser { admin, user } => vec![admin.clone(), target(user)],
            Directive::Mint { user, device, fog } => {
                vec![user.clone(), target(device), target(fog)]
            }
            Directive::Call { sender, call } => {
                let mut v = vec![target(sender)];
                match call {
                    CallSpec::AdminAdd => v.push("adminAdd".into()),
                    CallSpec::NoOfAdmins => v.push("No_ofAdmins".into()),
                    CallSpec::TokensIssued => v.push("tokens_Issued".into()),
                    CallSpec::UsersDevices { user, index } => {
                        v.extend(["users_devices".into(), target(user), index.to_string()])
                    }
                    CallSpec::FogDevices { fog, index } => {
                        v.extend(["fog_devices".into(), target(fog), index.to_string()])
                    }
                    CallSpec::BalanceOf { owner } => v.extend(["balanceOf".into(), target(owner)]),
                    CallSpec::OwnerOf { token_id } => {
                        v.extend(["ownerOf".into(), token_id.to_string()])
                    }
                }
                v
            }
            Directive::AdvanceClock { seconds } => vec![seconds.to_string()],
            Directive::InjectFault { validators } if validators.is_empty() => {
                vec!["none".into()]
            }
            Directive::InjectFault { validators } => {
                validators.iter().map(|v| v.to_string()).collect()
            }
        };
        for a in args {
            out.push(' ');
            out.push_str(&a);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "kebab-case")]
pub enum StepStatus {
    Ok,
    /// Committed, but the contract answered with a negative event.
    Rejected(String),
    Reverted(String),
    /// Refused off-chain before any transaction was submitted.
    Refused(String),
    /// Submitted but not yet committed.
    Pending,
}

impl StepStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, StepStatus::Ok)
    }
}

/// Outcome of one script step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub line: usize,
    pub directive: String,
    /// Contract function or call method, or the directive keyword for
    /// steps that touch neither.
    pub operation: String,
    pub status: StepStatus,
    pub tx_hash: Option<Digest32>,
    pub block: Option<u64>,
    pub gas_used: Option<u64>,
    pub fee: u64,
    pub execution_cost: Option<u64>,
    pub op_trace: Option<OpTrace>,
    pub events: Vec<RegistryEvent>,
    pub output: Option<QueryOutput>,
    /// Consensus rounds that failed at the height this step sealed.
    pub failed_rounds: usize,
    /// Length of the target fog's device list when a mint was submitted.
    pub fog_list_len: Option<u64>,
    /// Address-only counterparties whose key could not be challenged.
    pub unverified: Vec<String>,
    pub pass: Option<NftPass>,
}

impl StepRecord {
    /// Gas column value: metered gas for transactions, execution cost for calls.
    pub fn gas(&self) -> Option<u64> {
        self.gas_used.or(self.execution_cost)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub step: usize,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub script: ScenarioScript,
    pub schedule: GasSchedule,
    pub principals: BTreeMap<String, Address>,
    pub steps: Vec<StepRecord>,
    /// JSON-lines chain export at the end of the run.
    pub chain: String,
    pub pending_at_end: usize,
    pub aborted: Option<Abort>,
    /// keccak-256 of this trace serialized with this field zeroed.
    pub determinism_hash: Digest32,
}

impl RunTrace {
    pub fn content_hash(&self) -> Digest32 {
        let mut copy = self.clone();
        copy.determinism_hash = Digest32::ZERO;
        keccak256(&serde_json::to_vec(&copy).expect("trace serializes"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `step,operation,gas_used,fee,events` with events joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,operation,gas_used,fee,events\n");
        for s in &self.steps {
            let events: Vec<&str> = s.events.iter().map(|e| e.name()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.step,
                s.operation,
                s.gas().map(|g| g.to_string()).unwrap_or_default(),
                s.fee,
                events.join(";")
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "seed {} | validators {} | {} steps | hash {}\n",
            self.script.seed,
            self.script.validators,
            self.steps.len(),
            self.determinism_hash
        );
        for s in &self.steps {
            let status = match &s.status {
                StepStatus::Ok => "ok".to_string(),
                StepStatus::Rejected(e) => format!("rejected ({e})"),
                StepStatus::Reverted(r) => format!("reverted ({r})"),
                StepStatus::Refused(r) => format!("refused ({r})"),
                StepStatus::Pending => "pending".to_string(),
            };
            let _ = write!(out, "{:>4}  {:<18} {}", s.step, s.operation, status);
            if let Some(g) = s.gas_used {
                let _ = write!(out, "  gas={g} fee={}", s.fee);
            } else if let Some(c) = s.execution_cost {
                let _ = write!(out, "  cost={c} fee=0");
            }
            if s.failed_rounds > 0 {
                let _ = write!(out, "  failed-rounds={}", s.failed_rounds);
            }
            for e in &s.events {
                let _ = write!(out, "  {}", e.name());
            }
            out.push('\n');
        }
        if let Some(a) = &self.aborted {
            let _ = writeln!(
                out,
                "aborted at step {} (line {}): {}",
                a.step, a.line, a.reason
            );
        }
        out
    }

    /// Every event in step order.
    pub fn event_stream(&self) -> impl Iterator<Item = &RegistryEvent> + '_ {
        self.steps.iter().flat_map(|s| s.events.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Clone)]
#[allow(clippy::large_enum_variant)]
enum Party {
    Keyed(Principal),
    External(Address),
}

impl Party {
    fn address(&self) -> Address {
        match self {
            Party::Keyed(p) => p.address,
            Party::External(a) => *a,
        }
    }
}

struct Runner {
    driver: SessionDriver,
    parties: BTreeMap<String, Party>,
    records: Vec<StepRecord>,
    /// Submitted transactions not yet seen in a receipt, by step index.
    pending: Vec<(Digest32, usize)>,
}

fn classify(receipt: &Receipt) -> StepStatus {
    if let TxStatus::Reverted(r) = &receipt.status {
        return StepStatus::Reverted(r.clone());
    }
    let negative = receipt.events.iter().find(|e| {
        matches!(
            e,
            RegistryEvent::AdminAlreadyExists { .. }
                | RegistryEvent::DeviceDoesNotExist { .. }
                | RegistryEvent::NotAuthenticated { .. }
                | RegistryEvent::InvalidUser { .. }
        )
    });
    match negative {
        Some(e) => StepStatus::Rejected(e.name().to_string()),
        None => StepStatus::Ok,
    }
}

impl Runner {
    fn signer(&self, name: &str) -> Principal {
        match &self.parties[name] {
            Party::Keyed(p) => p.clone(),
            Party::External(_) => unreachable!("parser admits only keyed signers"),
        }
    }

    fn resolve(&self, t: &Target) -> Party {
        match t {
            Target::Principal(name) => self.parties[name].clone(),
            Target::Literal(a) => Party::External(*a),
        }
    }

    fn fill(&self, record: &mut StepRecord, receipt: &Receipt) {
        record.status = classify(receipt);
        record.block = Some(receipt.block_number);
        record.gas_used = Some(receipt.gas_used);
        record.fee = receipt.fee();
        record.op_trace = Some(receipt.op_trace);
        record.events = receipt.events.clone();
    }

    /// Folds a session result into `record`.
    fn settle(&mut self, record: &mut StepRecord, result: Result<SessionOutcome, SessionError>) {
        match result {
            Ok(outcome) => {
                record.tx_hash = Some(outcome.receipt.tx_hash);
                record.failed_rounds = outcome.failed_rounds;
                self.fill(record, &outcome.receipt);
            }
            Err(SessionError::NoCommit { tx_hash, rounds }) => {
                record.tx_hash = Some(tx_hash);
                record.failed_rounds = rounds;
                record.status = StepStatus::Pending;
                self.pending.push((tx_hash, record.step - 1));
            }
            Err(SessionError::MintRejected(receipt)) => {
                record.tx_hash = Some(receipt.tx_hash);
                self.fill(record, &receipt);
            }
            Err(SessionError::Reverted(reason)) => record.status = StepStatus::Reverted(reason),
            Err(e) => record.status = StepStatus::Refused(e.to_string()),
        }
    }

    fn admin_op(
        &mut self,
        record: &mut StepRecord,
        admin: &str,
        counterparties: &[Party],
        operation: Operation,
    ) {
        let admin = self.signer(admin);
        let keyed: Vec<&Principal> = counterparties
            .iter()
            .filter_map(|p| match p {
                Party::Keyed(p) => Some(p),
                Party::External(_) => None,
            })
            .collect();
        record.unverified = counterparties
            .iter()
            .filter(|p| matches!(p, Party::External(_)))
            .map(|p| p.address().to_string())
            .collect();
        record.operation = operation.name().to_string();
        let result = self.driver.admin_session(&admin, &keyed, operation);
        self.settle(record, result);
    }

    fn query(&self, call: &CallSpec) -> Query {
        let addr = |t: &Target| self.resolve(t).address();
        match call {
            CallSpec::AdminAdd => Query::AdminAdd,
            CallSpec::NoOfAdmins => Query::NoOfAdmins,
            CallSpec::TokensIssued => Query::TokensIssued,
            CallSpec::UsersDevices { user, index } => Query::UsersDevices {
                user: addr(user),
                index: *index,
            },
            CallSpec::FogDevices { fog, index } => Query::FogDevices {
                fog: addr(fog),
                index: *index,
            },
            CallSpec::BalanceOf { owner } => Query::BalanceOf { owner: addr(owner) },
            CallSpec::OwnerOf { token_id } => Query::OwnerOf {
                token_id: *token_id,
            },
        }
    }

    fn step(&mut self, seed: u64, index: usize, step: &Step) -> StepRecord {
        let mut record = StepRecord {
            step: index + 1,
            line: step.line,
            directive: step.directive.keyword().to_string(),
            operation: step.directive.keyword().to_string(),
            status: StepStatus::Ok,
            tx_hash: None,
            block: None,
            gas_used: None,
            fee: 0,
            execution_cost: None,
            op_trace: None,
            events: Vec::new(),
            output: None,
            failed_rounds: 0,
            fog_list_len: None,
            unverified: Vec::new(),
            pass: None,
        };
        match &step.directive {
            Directive::CreatePrincipal {
                name,
                role,
                identity,
            } => {
                let party = match identity {
                    Identity::Seeded => Party::Keyed(Principal::from_seed(seed, name, *role)),
                    Identity::Key(k) => {
                        let mut bytes = [0u8; 32];
                        hex::decode_to_slice(&k[2..], &mut bytes).expect("validated by parser");
                        let kp = KeyPair::from_private_key(bytes).expect("validated by parser");
                        Party::Keyed(Principal::new(*role, kp))
                    }
                    Identity::External(a) => Party::External(*a),
                };
                self.parties.insert(name.clone(), party);
            }
            Directive::OwnerInit { owner } => {
                record.operation = "deploy".into();
                let owner = self.signer(owner);
                let result = self.driver.owner_init(&owner);
                self.settle(&mut record, result);
            }
            Directive::Approve { admin, new_admin } => {
                let op = Operation::Approve {
                    new_admin: self.resolve(new_admin).address(),
                    token_id: Digest32::ZERO,
                };
                self.admin_op(&mut record, admin, &[], op);
            }
            Directive::DelAdmin { admin, target } => {
                let op = Operation::DelAdmin {
                    admin: self.resolve(target).address(),
                };
                self.admin_op(&mut record, admin, &[], op);
            }
            Directive::MapDevice { admin, fog, device } => {
                let (fog, device) = (self.resolve(fog), self.resolve(device));
                let op = Operation::DeviceFogMapping {
                    fog: fog.address(),
                    device: device.address(),
                };
                self.admin_op(&mut record, admin, &[fog, device], op);
            }
            Directive::AddUser {
                admin,
                user,
                device,
                fog,
            } => {
                let user = self.resolve(user);
                let op = Operation::UserDeviceMapping {
                    user: user.address(),
                    device: self.resolve(device).address(),
                    fog: self.resolve(fog).address(),
                };
                self.admin_op(&mut record, admin, &[user], op);
            }
            Directive::DelDev { admin, fog } => {
                let op = Operation::DelDev {
                    fog: self.resolve(fog).address(),
                };
                self.admin_op(&mut record, admin, &[], op);
            }
            Directive::DelUser { admin, user } => {
                let op = Operation::DelUser {
                    user: self.resolve(user).address(),
                };
                self.admin_op(&mut record, admin, &[], op);
            }
            Directive::Mint { user, device, fog } => {
                record.operation = "mintNFT".into();
                let user = self.signer(user);
                let (device, fog) = (self.resolve(device).address(), self.resolve(fog).address());
                record.fog_list_len = self
                    .driver
                    .ledger()
                    .registry()
                    .map(|r| r.fog_devices(fog).len() as u64);
                match self.driver.mint_auth_session(&user, device, fog) {
                    Ok((pass, outcome)) => {
                        record.pass = Some(pass);
                        self.settle(&mut record, Ok(outcome));
                    }
                    Err(e) => self.settle(&mut record, Err(e)),
                }
            }
            Directive::Call { sender, call } => {
                let query = self.query(call);
                let sender = self.resolve(sender).address();
                let result = self.driver.ledger().call(sender, &query);
                record.operation = result.method;
                record.execution_cost = Some(result.execution_cost);
                record.fee = result.fee;
                match result.output {
                    Ok(out) => record.output = Some(out),
                    Err(reason) => record.status = StepStatus::Reverted(reason),
                }
            }
            Directive::AdvanceClock { seconds } => self.driver.advance_clock(*seconds),
            Directive::InjectFault { validators } => {
                let set = self.driver.ledger().validators().clone();
                let mask =
                    FaultMask::new(&set, validators.iter().copied()).expect("validated by parser");
                self.driver.set_faults(mask);
            }
        }
        record
    }

    /// Attaches receipts for earlier steps whose transactions have since
    /// been committed in a later block.
    fn settle_pending(&mut self) {
        let ledger = self.driver.ledger();
        let mut still = Vec::new();
        let mut done = Vec::new();
        for (hash, idx) in std::mem::take(&mut self.pending) {
            match ledger.get_receipt(hash) {
                Ok(r) => done.push((idx, r.clone())),
                Err(_) => still.push((hash, idx)),
            }
        }
        self.pending = still;
        for (idx, receipt) in done {
            let mut record = self.records[idx].clone();
            self.fill(&mut record, &receipt);
            self.records[idx] = record;
        }
    }
}

/// Executes `script` under `schedule`. Step failures are recorded; only a
/// failing `require` step stops the run.
pub fn run(script: &ScenarioScript, schedule: GasSchedule) -> Result<RunTrace, RunError> {
    ValidatorSet::new(script.validators).map_err(LedgerError::from)?;
    let mut runner = Runner {
        driver: SessionDriver::new(
            script.seed,
            script.validators,
            script.genesis_time,
            script.clock_step,
            schedule,
        )?,
        parties: BTreeMap::new(),
        records: Vec::with_capacity(script.steps.len()),
        pending: Vec::new(),
    };
    let mut aborted = None;
    for (i, step) in script.steps.iter().enumerate() {
        let record = runner.step(script.seed, i, step);
        runner.records.push(record);
        runner.settle_pending();
        let record = &runner.records[i];
        if step.required && !record.status.is_ok() {
            aborted = Some(Abort {
                step: i + 1,
                line: step.line,
                reason: format!("{:?}", record.status),
            });
            break;
        }
    }
    let ledger = runner.driver.ledger();
    let mut trace = RunTrace {
        script: script.clone(),
        schedule,
        principals: runner
            .parties
            .iter()
            .map(|(n, p)| (n.clone(), p.address()))
            .collect(),
        steps: runner.records,
        chain: ledger.export_chain(),
        pending_at_end: ledger.pending(),
        aborted,
        determinism_hash: Digest32::ZERO,
    };
    trace.determinism_hash = trace.content_hash();
    Ok(trace)
}

/// Script issuing `calls` read-only calls after a minimal setup, cycling
/// adminAdd, No_ofAdmins, users_devices and tokens_Issued.
pub fn calls_script(seed: u64, calls: usize) -> String {
    let mut s = format!(
        "# {calls} read-only calls after one mint\nseed {seed}\nvalidators 4\n\n\
         create-principal owner owner\ncreate-principal fog fog\n\
         create-principal dev device\ncreate-principal user user\n\
         require owner-init owner\nrequire map-device owner fog dev\n\
         require add-user owner user dev fog\nrequire mint user dev fog\n\n"
    );
    let cycle = [
        "call owner adminAdd",
        "call owner No_ofAdmins",
        "call owner users_devices user 0",
        "call owner tokens_Issued",
    ];
    for i in 0..calls {
        s.push_str(cycle[i % cycle.len()]);
        s.push('\n');
    }
    s
}

/// Script minting once per fog list size in `sizes`; each fog gets its own
/// devices and the minted device is mapped last so the scan visits all.
/// A warm-up mint comes first so that the one-time initialisation of the
/// token list is not charged to any measured point.
pub fn linearity_script(seed: u64, sizes: &[usize]) -> String {
    let mut s = format!(
        "# mint gas against fog list size\nseed {seed}\nvalidators 4\n\n\
         create-principal owner owner\nrequire owner-init owner\n\n\
         # warm-up: the first token ever written initialises the token list\n\
         create-principal warm-fog fog\ncreate-principal warm-dev device\n\
         create-principal warm-user user\nrequire map-device owner warm-fog warm-dev\n\
         require add-user owner warm-user warm-dev warm-fog\nrequire mint warm-user warm-dev warm-fog\n"
    );
    for &k in sizes {
        let _ = writeln!(s, "\n# fog list size {k}\ncreate-principal fog{k} fog");
        let _ = writeln!(s, "create-principal user{k} user");
        for d in 0..k {
            let _ = writeln!(s, "create-principal dev{k}_{d} device");
            let _ = writeln!(s, "require map-device owner fog{k} dev{k}_{d}");
        }
        let target = format!("dev{k}_{}", k.saturating_sub(1));
        let _ = writeln!(s, "require add-user owner user{k} {target} fog{k}");
        let _ = writeln!(s, "require mint user{k} {target} fog{k}");
    }
    s
}
