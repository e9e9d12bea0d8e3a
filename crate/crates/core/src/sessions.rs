//! Client-side session flows: owner initialization, fog/device mapping, user
//! assignment, and mint-and-authenticate producing a signed [`NftPass`].
//!
//! A "secure session" step is a challenge-response: the driver sends a fresh
//! 32-byte nonce, the principal signs it, and the signature must recover to
//! the principal's claimed address.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{
    self, derive_address, uint256_be, Address, Digest32, KeyPair, PublicKey, Signature,
};
use crate::ledger::{
    FaultMask, GasSchedule, Ledger, LedgerError, Payload, Receipt, RoundOutcome, TxStatus,
};
use crate::registry::{self, Operation, RegistryEvent, RegistryState, Token};

pub const DEFAULT_FRESHNESS_WINDOW: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Owner,
    Admin,
    User,
    Fog,
    Device,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Owner => "owner",
            Role::Admin => "admin",
            Role::User => "user",
            Role::Fog => "fog",
            Role::Device => "device",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "owner" => Role::Owner,
            "admin" => Role::Admin,
            "user" => Role::User,
            "fog" => Role::Fog,
            "device" => Role::Device,
            other => return Err(format!("unknown role `{other}`")),
        })
    }
}

/// A participant holding a key pair. `address` is the identity it claims;
/// for honestly constructed principals it is the key pair's address.
#[derive(Debug, Clone)]
pub struct Principal {
    pub role: Role,
    pub keypair: KeyPair,
    pub address: Address,
}

impl Principal {
    pub fn new(role: Role, keypair: KeyPair) -> Self {
        let address = keypair.address();
        Self {
            role,
            keypair,
            address,
        }
    }

    /// Key pair derived from `(seed, name)`.
    pub fn from_seed(seed: u64, name: &str, role: Role) -> Self {
        Self::new(role, KeyPair::from_seed(seed, name))
    }

    /// A principal claiming `address` while holding an unrelated key.
    pub fn claiming(role: Role, address: Address, keypair: KeyPair) -> Self {
        Self {
            role,
            keypair,
            address,
        }
    }

    pub fn respond(&self, challenge: &[u8]) -> (PublicKey, Signature) {
        (*self.keypair.public_key(), self.keypair.sign(challenge))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("session refused: {0}")]
    Refused(String),
    #[error("key verification failed for {role} {address}")]
    KeyVerification { role: Role, address: Address },
    #[error("transaction {tx_hash} not committed after {rounds} failed rounds")]
    NoCommit { tx_hash: Digest32, rounds: usize },
    #[error("transaction reverted: {0}")]
    Reverted(String),
    #[error("mint rejected with {}", .0.events.first().map_or("no event", |e| e.name()))]
    MintRejected(Box<Receipt>),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl SessionError {
    /// Receipt of the transaction behind the failure, if one was committed.
    pub fn receipt(&self) -> Option<&Receipt> {
        match self {
            SessionError::MintRejected(r) => Some(r),
            _ => None,
        }
    }
}

/// A committed transaction as seen by a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionOutcome {
    pub receipt: Receipt,
    /// Rounds that failed before the committing one at this height.
    pub failed_rounds: usize,
}

impl SessionOutcome {
    pub fn events(&self) -> &[RegistryEvent] {
        &self.receipt.events
    }
}

/// The credential a user presents to access mapped devices: the token tuple
/// and the user's public key, signed by the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NftPass {
    pub token_id: Digest32,
    pub timestamp: u64,
    pub delta_t: u64,
    pub user: Address,
    pub device: Address,
    pub fog: Address,
    pub user_public_key: PublicKey,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PassParseError {
    #[error("line {line}: expected `{expected} = ...`")]
    MissingField { line: usize, expected: &'static str },
    #[error("line {line}: bad value for `{field}`")]
    BadValue { line: usize, field: &'static str },
    #[error("unexpected trailing content at line {0}")]
    Trailing(usize),
}

impl NftPass {
    const FIELDS: [&'static str; 9] = [
        "token_id",
        "timestamp",
        "delta_t",
        "user",
        "device",
        "fog",
        "user_public_key",
        "signature",
        "signer",
    ];

    /// Bytes covered by the user's signature.
    pub fn signing_bytes(
        token_id: Digest32,
        timestamp: u64,
        delta_t: u64,
        user: Address,
        device: Address,
        fog: Address,
        user_public_key: &PublicKey,
    ) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 32 * 3 + 20 * 3 + 65);
        out.extend_from_slice(b"dscot-nft-pass-v1");
        out.extend_from_slice(&token_id.0);
        out.extend_from_slice(&uint256_be(timestamp));
        out.extend_from_slice(&uint256_be(delta_t));
        out.extend_from_slice(&user.0);
        out.extend_from_slice(&device.0);
        out.extend_from_slice(&fog.0);
        out.extend_from_slice(&user_public_key.0);
        out
    }

    pub fn sign(
        keypair: &KeyPair,
        token_id: Digest32,
        timestamp: u64,
        delta_t: u64,
        device: Address,
        fog: Address,
    ) -> Self {
        let user = keypair.address();
        let user_public_key = *keypair.public_key();
        let signature = keypair.sign(&Self::signing_bytes(
            token_id,
            timestamp,
            delta_t,
            user,
            device,
            fog,
            &user_public_key,
        ));
        Self {
            token_id,
            timestamp,
            delta_t,
            user,
            device,
            fog,
            user_public_key,
            signature,
        }
    }

    fn own_signing_bytes(&self) -> Vec<u8> {
        Self::signing_bytes(
            self.token_id,
            self.timestamp,
            self.delta_t,
            self.user,
            self.device,
            self.fog,
            &self.user_public_key,
        )
    }

    /// Canonical record: one `key = value` line per field in fixed order.
    pub fn to_record(&self) -> String {
        let values = [
            self.token_id.to_hex(),
            self.timestamp.to_string(),
            self.delta_t.to_string(),
            self.user.to_hex(),
            self.device.to_hex(),
            self.fog.to_hex(),
            self.user_public_key.to_hex(),
            self.signature.bytes.to_hex(),
            self.signature.signer.to_hex(),
        ];
        Self::FIELDS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn from_record(text: &str) -> Result<Self, PassParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mut values: Vec<(usize, &str)> = Vec::with_capacity(Self::FIELDS.len());
        for expected in Self::FIELDS {
            let (idx, line) = lines.next().ok_or(PassParseError::MissingField {
                line: values.last().map_or(1, |(l, _)| l + 1),
                expected,
            })?;
            let value = line
                .split_once('=')
                .filter(|(k, _)| k.trim() == expected)
                .map(|(_, v)| v.trim())
                .ok_or(PassParseError::MissingField {
                    line: idx + 1,
                    expected,
                })?;
            values.push((idx + 1, value));
        }
        if let Some((idx, _)) = lines.next() {
            return Err(PassParseError::Trailing(idx + 1));
        }
        fn field<T: FromStr>(
            values: &[(usize, &str)],
            i: usize,
            name: &'static str,
        ) -> Result<T, PassParseError> {
            let (line, raw) = values[i];
            raw.parse()
                .map_err(|_| PassParseError::BadValue { line, field: name })
        }
        Ok(Self {
            token_id: field(&values, 0, "token_id")?,
            timestamp: field(&values, 1, "timestamp")?,
            delta_t: field(&values, 2, "delta_t")?,
            user: field(&values, 3, "user")?,
            device: field(&values, 4, "device")?,
            fog: field(&values, 5, "fog")?,
            user_public_key: field(&values, 6, "user_public_key")?,
            signature: Signature {
                bytes: field(&values, 7, "signature")?,
                signer: field(&values, 8, "signer")?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    Signature,
    KeyMismatch,
    UnknownToken,
    NotMapped,
    Stale,
    FromFuture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PassVerdict {
    Accept,
    Reject(RejectReason),
}

/// Checks a presented pass against the registry at logical time `now`.
/// Returns the first failing check, in the order: signature, key/address
/// binding, issued token, user mapping, freshness.
pub fn verify_pass(
    pass: &NftPass,
    registry: &RegistryState,
    now: u64,
    freshness_window: u64,
) -> PassVerdict {
    use PassVerdict::Reject;

    if pass.signature.signer != pass.user
        || !crypto::verify(
            &pass.user_public_key,
            &pass.own_signing_bytes(),
            &pass.signature,
        )
    {
        return Reject(RejectReason::Signature);
    }
    if derive_address(&pass.user_public_key).ok() != Some(pass.user) {
        return Reject(RejectReason::KeyMismatch);
    }
    let issued = Token {
        token_id: pass.token_id,
        timestamp: pass.timestamp,
    };
    if !registry.tokens().contains(&issued)
        || registry.token_owner(pass.token_id) != Some(pass.user)
    {
        return Reject(RejectReason::UnknownToken);
    }
    let pair = registry::DevicePair {
        fog: pass.fog,
        device: pass.device,
    };
    if !registry.users_devices(pass.user).contains(&pair) {
        return Reject(RejectReason::NotMapped);
    }
    match now.checked_sub(pass.timestamp) {
        None => Reject(RejectReason::FromFuture),
        Some(age) if age > freshness_window => Reject(RejectReason::Stale),
        Some(_) => PassVerdict::Accept,
    }
}

/// Drives the session flows against a ledger it owns. Every transaction is
/// sealed in its own block at the advanced logical clock.
#[derive(Debug, Clone)]
pub struct SessionDriver {
    ledger: Ledger,
    rng: ChaCha20Rng,
    clock: u64,
    clock_step: u64,
    faults: FaultMask,
    init_submitted: bool,
}

impl SessionDriver {
    pub fn new(
        seed: u64,
        validators: usize,
        genesis_time: u64,
        clock_step: u64,
        schedule: GasSchedule,
    ) -> Result<Self, LedgerError> {
        Ok(Self {
            ledger: Ledger::new(validators, genesis_time, schedule)?,
            rng: ChaCha20Rng::seed_from_u64(seed),
            clock: genesis_time,
            clock_step,
            faults: FaultMask::none(),
            init_submitted: false,
        })
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn advance_clock(&mut self, seconds: u64) {
        self.clock += seconds;
    }

    pub fn set_faults(&mut self, faults: FaultMask) {
        self.faults = faults;
    }

    pub fn faults(&self) -> &FaultMask {
        &self.faults
    }

    /// Challenge-response proving `who` holds the key for its claimed address.
    pub fn challenge(&mut self, who: &Principal) -> Result<(), SessionError> {
        let mut nonce = [0u8; 32];
        self.rng.fill_bytes(&mut nonce);
        let mut message = b"dscot-session-challenge".to_vec();
        message.extend_from_slice(&nonce);
        let (public_key, signature) = who.respond(&message);
        let bound = derive_address(&public_key).ok() == Some(who.address);
        if bound
            && signature.signer == who.address
            && crypto::verify(&public_key, &message, &signature)
        {
            Ok(())
        } else {
            Err(SessionError::KeyVerification {
                role: who.role,
                address: who.address,
            })
        }
    }

    /// Off-chain precheck that `who` is currently an admin.
    pub fn require_admin(&self, who: &Principal) -> Result<(), SessionError> {
        match self.ledger.registry() {
            None => Err(SessionError::Refused("registry not initialized".into())),
            Some(state) if !state.is_admin(who.address) => Err(SessionError::Refused(format!(
                "{} is not an admin",
                who.address
            ))),
            Some(_) => Ok(()),
        }
    }

    /// Runs one consensus height at the next clock tick.
    pub fn seal(&mut self) -> RoundOutcome {
        self.clock += self.clock_step;
        self.ledger.run_round(self.clock, &self.faults)
    }

    /// Signs, submits and seals one transaction.
    pub fn transact(
        &mut self,
        key: &KeyPair,
        payload: Payload,
    ) -> Result<SessionOutcome, SessionError> {
        let tx_hash = self.ledger.submit_signed(key, payload)?;
        let outcome = self.seal();
        if !outcome.committed() {
            return Err(SessionError::NoCommit {
                tx_hash,
                rounds: outcome.failed_rounds(),
            });
        }
        Ok(SessionOutcome {
            receipt: self.ledger.get_receipt(tx_hash)?.clone(),
            failed_rounds: outcome.failed_rounds(),
        })
    }

    /// Deploys the registry with `owner` as creator and first admin.
    pub fn owner_init(&mut self, owner: &Principal) -> Result<SessionOutcome, SessionError> {
        if self.init_submitted || self.ledger.registry().is_some() {
            return Err(SessionError::Refused("registry already initialized".into()));
        }
        self.challenge(owner)?;
        self.init_submitted = true;
        self.transact(&owner.keypair, Payload::Deploy)
    }

    /// Admin-initiated mapping of `device` under `fog`, after verifying the
    /// fog's key and then the device's key.
    pub fn map_device_session(
        &mut self,
        owner: &Principal,
        fog: &Principal,
        device: &Principal,
    ) -> Result<SessionOutcome, SessionError> {
        self.admin_session(
            owner,
            &[fog, device],
            Operation::DeviceFogMapping {
                fog: fog.address,
                device: device.address,
            },
        )
    }

    /// Admin-initiated assignment of `(fog, device)` to `user`. An unmapped
    /// device is reported through the outcome's `DeviceDoesNotExist` event.
    pub fn add_user_session(
        &mut self,
        owner: &Principal,
        user: &Principal,
        device: Address,
        fog: Address,
    ) -> Result<SessionOutcome, SessionError> {
        self.admin_session(
            owner,
            &[user],
            Operation::UserDeviceMapping {
                user: user.address,
                device,
                fog,
            },
        )
    }

    /// Generic admin flow: checks admin rights off-chain, challenges the admin
    /// and then each counterparty in order, and submits `operation`.
    pub fn admin_session(
        &mut self,
        admin: &Principal,
        counterparties: &[&Principal],
        operation: Operation,
    ) -> Result<SessionOutcome, SessionError> {
        self.require_admin(admin)?;
        self.challenge(admin)?;
        for party in counterparties {
            self.challenge(party)?;
        }
        self.transact(&admin.keypair, Payload::Invoke { operation })
    }

    /// Mints as `user` and, on success, returns the signed pass. `delta_t`
    /// is measured against the user's previous token on chain.
    pub fn mint_auth_session(
        &mut self,
        user: &Principal,
        device: Address,
        fog: Address,
    ) -> Result<(NftPass, SessionOutcome), SessionError> {
        self.challenge(user)?;
        let outcome = self.transact(
            &user.keypair,
            Payload::Invoke {
                operation: Operation::MintNft { device, fog },
            },
        )?;
        if let TxStatus::Reverted(reason) = &outcome.receipt.status {
            return Err(SessionError::Reverted(reason.clone()));
        }
        let Some(token_id) = outcome
            .receipt
            .events
            .iter()
            .find_map(RegistryEvent::token_id)
        else {
            return Err(SessionError::MintRejected(Box::new(outcome.receipt)));
        };
        let log = self.ledger.event_log();
        let meta = registry::metadata_stream(log.iter().map(|(_, e)| e))
            .into_iter()
            .rev()
            .find(|m| m.token_id == token_id && m.user_id == user.address)
            .expect("committed TokenCreated is in the event log");
        let pass = NftPass::sign(
            &user.keypair,
            token_id,
            meta.timestamp,
            meta.delta_t,
            device,
            fog,
        );
        Ok((pass, outcome))
    }

    /// Verifies `pass` against the latest committed state at the current clock.
    pub fn verify_pass(&self, pass: &NftPass, freshness_window: u64) -> PassVerdict {
        match self.ledger.registry() {
            Some(state) => verify_pass(pass, state, self.clock, freshness_window),
            None => PassVerdict::Reject(RejectReason::UnknownToken),
        }
    }
}
