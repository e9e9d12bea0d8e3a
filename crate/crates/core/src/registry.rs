//! The registry contract: admins, fog→device lists, user→(fog, device)
//! lists, and token minting for user/device authentication.
//!
//! Every mutating entry point is guarded by the admin check except
//! [`RegistryState::mint_nft`], which authenticates the sender against its own
//! user mapping list. Failures inside an operation surface as events; only the
//! admin guard (and removal of the last admin) reverts.
//!
//! Each entry point records the storage, log, hash and loop primitives it
//! touches into an [`OpTrace`] so the ledger can meter it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::{encode_packed, keccak256, Address, Digest32};
use crate::ledger::gas::OpTrace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum Revert {
    #[error("Not an Admin")]
    NotAnAdmin,
    #[error("Cannot remove the last admin")]
    LastAdmin,
    #[error("Unknown token")]
    UnknownToken,
    #[error("Index out of range")]
    IndexOutOfRange,
}

/// Block context of a call: who signed it and when the block was sealed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Context {
    pub sender: Address,
    pub timestamp: u64,
}

impl Context {
    pub fn new(sender: Address, timestamp: u64) -> Self {
        Self { sender, timestamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DevicePair {
    pub fog: Address,
    pub device: Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub token_id: Digest32,
    pub timestamp: u64,
}

/// Token id for a successful mint.
pub fn mint_token_id(device: Address, fog: Address, sender: Address, timestamp: u64) -> Digest32 {
    keccak256(&encode_packed(&[device, fog, sender], timestamp))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum RegistryEvent {
    AdminAdded {
        new_admin: Address,
        adding_admin: Address,
    },
    AdminAlreadyExists {
        new_admin: Address,
        sender: Address,
    },
    AdminDeleted {
        admin: Address,
        deleting_admin: Address,
    },
    FogDeviceMappingAdded {
        fog: Address,
        device: Address,
        adding_admin: Address,
    },
    FogDeviceAllMappingDeleted {
        fog: Address,
        deleting_admin: Address,
    },
    DeviceDoesNotExist {
        fog: Address,
        device: Address,
        sender: Address,
    },
    UserDeviceMappingAdded {
        user: Address,
        device: Address,
        adding_admin: Address,
        fog: Address,
    },
    UserDeviceAllMappingDeleted {
        user: Address,
        deleting_admin: Address,
    },
    Authenticated {
        user: Address,
        device: Address,
        fog: Address,
    },
    NotAuthenticated {
        user: Address,
    },
    /// Part of the contract interface; no code path emits it.
    InvalidUser {
        device: Address,
        fog: Address,
        sender: Address,
    },
    TokenCreated {
        token_id: Digest32,
        user: Address,
        fog: Address,
        device: Address,
        timestamp: u64,
    },
}

impl RegistryEvent {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AdminAdded { .. } => "AdminAdded",
            Self::AdminAlreadyExists { .. } => "AdminAlreadyExists",
            Self::AdminDeleted { .. } => "AdminDeleted",
            Self::FogDeviceMappingAdded { .. } => "FogDeviceMappingAdded",
            Self::FogDeviceAllMappingDeleted { .. } => "FogDeviceAllMappingDeleted",
            Self::DeviceDoesNotExist { .. } => "DeviceDoesNotExist",
            Self::UserDeviceMappingAdded { .. } => "UserDeviceMappingAdded",
            Self::UserDeviceAllMappingDeleted { .. } => "UserDeviceAllMappingDeleted",
            Self::Authenticated { .. } => "Authenticated",
            Self::NotAuthenticated { .. } => "NotAuthenticated",
            Self::InvalidUser { .. } => "InvalidUser",
            Self::TokenCreated { .. } => "TokenCreated",
        }
    }

    /// `(topics, data bytes)` of the log record: one signature topic plus
    /// one per indexed parameter, 32 data bytes per non-indexed parameter.
    pub fn log_shape(&self) -> (u64, u64) {
        let (indexed, plain) = match self {
            Self::AdminAdded { .. }
            | Self::AdminAlreadyExists { .. }
            | Self::AdminDeleted { .. }
            | Self::FogDeviceAllMappingDeleted { .. }
            | Self::UserDeviceAllMappingDeleted { .. } => (2, 0),
            Self::FogDeviceMappingAdded { .. }
            | Self::DeviceDoesNotExist { .. }
            | Self::Authenticated { .. }
            | Self::InvalidUser { .. } => (3, 0),
            Self::UserDeviceMappingAdded { .. } => (4, 0),
            Self::NotAuthenticated { .. } => (1, 0),
            Self::TokenCreated { .. } => (3, 2),
        };
        (1 + indexed, 32 * plain)
    }

    pub fn token_id(&self) -> Option<Digest32> {
        match self {
            Self::TokenCreated { token_id, .. } => Some(*token_id),
            _ => None,
        }
    }
}

/// A mutating contract entry point with its arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum Operation {
    /// `token_id` is part of the external signature and is ignored.
    Approve {
        new_admin: Address,
        token_id: Digest32,
    },
    DelAdmin {
        admin: Address,
    },
    DeviceFogMapping {
        fog: Address,
        device: Address,
    },
    DelDev {
        fog: Address,
    },
    UserDeviceMapping {
        user: Address,
        device: Address,
        fog: Address,
    },
    DelUser {
        user: Address,
    },
    MintNft {
        device: Address,
        fog: Address,
    },
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Approve { .. } => "approve",
            Self::DelAdmin { .. } => "delAdmin",
            Self::DeviceFogMapping { .. } => "DeviceFogMapping",
            Self::DelDev { .. } => "delDev",
            Self::UserDeviceMapping { .. } => "UserDeviceMapping",
            Self::DelUser { .. } => "delUser",
            Self::MintNft { .. } => "mintNFT",
        }
    }
}

/// Read-only contract calls.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "query")]
pub enum Query {
    AdminAdd,
    NoOfAdmins,
    UsersDevices { user: Address, index: u64 },
    FogDevices { fog: Address, index: u64 },
    TokensIssued,
    BalanceOf { owner: Address },
    OwnerOf { token_id: Digest32 },
}

impl Query {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AdminAdd => "adminAdd",
            Self::NoOfAdmins => "No_ofAdmins",
            Self::UsersDevices { .. } => "users_devices",
            Self::FogDevices { .. } => "fog_devices",
            Self::TokensIssued => "tokens_Issued",
            Self::BalanceOf { .. } => "balanceOf",
            Self::OwnerOf { .. } => "ownerOf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum QueryOutput {
    Addresses(Vec<Address>),
    Count(u64),
    Address(Address),
    DevicePair(DevicePair),
    Tokens(Vec<Token>),
}

/// Contract state. Empty lists are never stored as map entries, so two
/// states with the same observable contents compare (and serialize) equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryState {
    admins: Vec<Address>,
    fog_devices: BTreeMap<Address, Vec<Address>>,
    users_devices: BTreeMap<Address, Vec<DevicePair>>,
    tokens: Vec<Token>,
    token_owners: BTreeMap<Digest32, Address>,
    balances: BTreeMap<Address, u64>,
}

type Events = Vec<RegistryEvent>;

fn emit(events: &mut Events, trace: &mut OpTrace, event: RegistryEvent) {
    let (topics, data) = event.log_shape();
    trace.log(topics, data);
    events.push(event);
}

impl RegistryState {
    /// Fresh contract with `creator` as the first admin.
    pub fn new(creator: Address) -> Self {
        Self {
            admins: vec![creator],
            fog_devices: BTreeMap::new(),
            users_devices: BTreeMap::new(),
            tokens: Vec::new(),
            token_owners: BTreeMap::new(),
            balances: BTreeMap::new(),
        }
    }

    /// Storage cost of the constructor.
    pub fn constructor_trace() -> OpTrace {
        let mut trace = OpTrace {
            invocations: 1,
            ..Default::default()
        };
        trace.write(true); // admins[0]
        trace.write(true); // admins.length
        trace
    }

    // -- accessors (no metering) -------------------------------------------

    pub fn admins(&self) -> &[Address] {
        &self.admins
    }

    pub fn is_admin(&self, who: Address) -> bool {
        self.admins.contains(&who)
    }

    pub fn fog_devices(&self, fog: Address) -> &[Address] {
        self.fog_devices.get(&fog).map_or(&[], Vec::as_slice)
    }

    pub fn users_devices(&self, user: Address) -> &[DevicePair] {
        self.users_devices.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token_owner(&self, token_id: Digest32) -> Option<Address> {
        self.token_owners.get(&token_id).copied()
    }

    pub fn token_balance(&self, owner: Address) -> u64 {
        self.balances.get(&owner).copied().unwrap_or(0)
    }

    // -- metered scans -----------------------------------------------------

    fn require_admin(&self, sender: Address, trace: &mut OpTrace) -> Result<(), Revert> {
        if self.scan_admins(sender, trace).is_some() {
            Ok(())
        } else {
            Err(Revert::NotAnAdmin)
        }
    }

    fn scan_admins(&self, who: Address, trace: &mut OpTrace) -> Option<usize> {
        trace.read(1);
        for (idx, admin) in self.admins.iter().enumerate() {
            trace.iterate();
            trace.read(1);
            if *admin == who {
                return Some(idx);
            }
        }
        None
    }

    fn scan_fog(&self, fog: Address, device: Address, trace: &mut OpTrace) -> bool {
        trace.read(1);
        for d in self.fog_devices(fog) {
            trace.iterate();
            trace.read(1);
            if *d == device {
                return true;
            }
        }
        false
    }

    fn scan_user(&self, user: Address, pair: DevicePair, trace: &mut OpTrace) -> bool {
        trace.read(1);
        for p in self.users_devices(user) {
            trace.iterate();
            trace.read(2);
            if *p == pair {
                return true;
            }
        }
        false
    }

    // -- mutating entry points ---------------------------------------------

    pub fn apply(
        &mut self,
        ctx: Context,
        op: &Operation,
        trace: &mut OpTrace,
    ) -> Result<Events, Revert> {
        match *op {
            Operation::Approve { new_admin, .. } => self.approve(ctx, new_admin, trace),
            Operation::DelAdmin { admin } => self.del_admin(ctx, admin, trace),
            Operation::DeviceFogMapping { fog, device } => {
                self.device_fog_mapping(ctx, fog, device, trace)
            }
            Operation::DelDev { fog } => self.del_dev(ctx, fog, trace),
            Operation::UserDeviceMapping { user, device, fog } => {
                self.user_device_mapping(ctx, user, device, fog, trace)
            }
            Operation::DelUser { user } => self.del_user(ctx, user, trace),
            Operation::MintNft { device, fog } => Ok(self.mint_nft(ctx, device, fog, trace)),
        }
    }

    pub fn approve(
        &mut self,
        ctx: Context,
        new_admin: Address,
        trace: &mut OpTrace,
    ) -> Result<Events, Revert> {
        trace.invocations += 1;
        self.require_admin(ctx.sender, trace)?;
        let mut events = Vec::new();
        if self.scan_admins(new_admin, trace).is_some() {
            emit(
                &mut events,
                trace,
                RegistryEvent::AdminAlreadyExists {
                    new_admin,
                    sender: ctx.sender,
                },
            );
        } else {
            trace.write(true);
            trace.write(false);
            self.admins.push(new_admin);
            emit(
                &mut events,
                trace,
                RegistryEvent::AdminAdded {
                    new_admin,
                    adding_admin: ctx.sender,
                },
            );
        }
        Ok(events)
    }

    /// Removes `admin` keeping the order of the rest. Absent targets are a
    /// silent no-op; removing the only admin reverts.
    pub fn del_admin(
        &mut self,
        ctx: Context,
        admin: Address,
        trace: &mut OpTrace,
    ) -> Result<Events, Revert> {
        trace.invocations += 1;
        self.require_admin(ctx.sender, trace)?;
        let Some(idx) = self.scan_admins(admin, trace) else {
            return Ok(Vec::new());
        };
        if self.admins.len() == 1 {
            return Err(Revert::LastAdmin);
        }
        for _ in idx + 1..self.admins.len() {
            trace.iterate();
            trace.read(1);
            trace.write(false);
        }
        trace.write(false); // vacated tail slot
        trace.write(false); // length
        self.admins.remove(idx);
        let mut events = Vec::new();
        emit(
            &mut events,
            trace,
            RegistryEvent::AdminDeleted {
                admin,
                deleting_admin: ctx.sender,
            },
        );
        Ok(events)
    }

    pub fn device_fog_mapping(
        &mut self,
        ctx: Context,
        fog: Address,
        device: Address,
        trace: &mut OpTrace,
    ) -> Result<Events, Revert> {
        trace.invocations += 1;
        self.require_admin(ctx.sender, trace)?;
        let list = self.fog_devices.entry(fog).or_default();
        trace.read(1);
        trace.write(true);
        trace.write(list.is_empty());
        list.push(device);
        let mut events = Vec::new();
        emit(
            &mut events,
            trace,
            RegistryEvent::FogDeviceMappingAdded {
                fog,
                device,
                adding_admin: ctx.sender,
            },
        );
        Ok(events)
    }

    pub fn del_dev(
        &mut self,
        ctx: Context,
        fog: Address,
        trace: &mut OpTrace,
    ) -> Result<Events, Revert> {
        trace.invocations += 1;
        self.require_admin(ctx.sender, trace)?;
        trace.read(1);
        for _ in self.fog_devices(fog) {
            trace.iterate();
            trace.write(false);
        }
        trace.write(false);
        self.fog_devices.remove(&fog);
        let mut events = Vec::new();
        emit(
            &mut events,
            trace,
            RegistryEvent::FogDeviceAllMappingDeleted {
                fog,
                deleting_admin: ctx.sender,
            },
        );
        Ok(events)
    }

    pub fn user_device_mapping(
        &mut self,
        ctx: Context,
        user: Address,
        device: Address,
        fog: Address,
        trace: &mut OpTrace,
    ) -> Result<Events, Revert> {
        trace.invocations += 1;
        self.require_admin(ctx.sender, trace)?;
        let mut events = Vec::new();
        if self.scan_fog(fog, device, trace) {
            let list = self.users_devices.entry(user).or_default();
            trace.read(1);
            trace.write(true);
            trace.write(true);
            trace.write(list.is_empty());
            list.push(DevicePair { fog, device });
            emit(
                &mut events,
                trace,
                RegistryEvent::UserDeviceMappingAdded {
                    user,
                    device,
                    adding_admin: ctx.sender,
                    fog,
                },
            );
        } else {
            emit(
                &mut events,
                trace,
                RegistryEvent::DeviceDoesNotExist {
                    fog,
                    device,
                    sender: ctx.sender,
                },
            );
        }
        Ok(events)
    }

    pub fn del_user(
        &mut self,
        ctx: Context,
        user: Address,
        trace: &mut OpTrace,
    ) -> Result<Events, Revert> {
        trace.invocations += 1;
        self.require_admin(ctx.sender, trace)?;
        trace.read(1);
        for _ in self.users_devices(user) {
            trace.iterate();
            trace.write(false);
            trace.write(false);
        }
        trace.write(false);
        self.users_devices.remove(&user);
        let mut events = Vec::new();
        emit(
            &mut events,
            trace,
            RegistryEvent::UserDeviceAllMappingDeleted {
                user,
                deleting_admin: ctx.sender,
            },
        );
        Ok(events)
    }

    /// Authenticates `ctx.sender` for `(fog, device)` and, on success, mints
    /// a token bound to the block timestamp. Exactly one of
    /// `DeviceDoesNotExist`, `NotAuthenticated` or
    /// `Authenticated` + `TokenCreated` is emitted.
    pub fn mint_nft(
        &mut self,
        ctx: Context,
        device: Address,
        fog: Address,
        trace: &mut OpTrace,
    ) -> Events {
        trace.invocations += 1;
        let sender = ctx.sender;
        let mut events = Vec::new();
        if !self.scan_fog(fog, device, trace) {
            emit(
                &mut events,
                trace,
                RegistryEvent::DeviceDoesNotExist {
                    fog,
                    device,
                    sender,
                },
            );
            return events;
        }
        if !self.scan_user(sender, DevicePair { fog, device }, trace) {
            emit(
                &mut events,
                trace,
                RegistryEvent::NotAuthenticated { user: sender },
            );
            return events;
        }

        let packed = encode_packed(&[device, fog, sender], ctx.timestamp);
        trace.hash(packed.len());
        let token_id = keccak256(&packed);
        emit(
            &mut events,
            trace,
            RegistryEvent::Authenticated {
                user: sender,
                device,
                fog,
            },
        );

        trace.read(1);
        trace.write(true);
        trace.write(true);
        trace.write(self.tokens.is_empty());
        self.tokens.push(Token {
            token_id,
            timestamp: ctx.timestamp,
        });
        trace.write(!self.token_owners.contains_key(&token_id));
        self.token_owners.insert(token_id, sender);
        trace.read(1);
        let balance = self.balances.entry(sender).or_insert(0);
        trace.write(*balance == 0);
        *balance += 1;

        emit(
            &mut events,
            trace,
            RegistryEvent::TokenCreated {
                token_id,
                user: sender,
                fog,
                device,
                timestamp: ctx.timestamp,
            },
        );
        events
    }

    // -- read-only calls ---------------------------------------------------

    /// Read-only call. The listing calls are admin-only; `balanceOf` and
    /// `ownerOf` are open.
    pub fn query(
        &self,
        sender: Address,
        query: &Query,
        trace: &mut OpTrace,
    ) -> Result<QueryOutput, Revert> {
        trace.invocations += 1;
        match *query {
            Query::AdminAdd => {
                self.require_admin(sender, trace)?;
                trace.read(1 + self.admins.len() as u64);
                Ok(QueryOutput::Addresses(self.admins.clone()))
            }
            Query::NoOfAdmins => {
                self.require_admin(sender, trace)?;
                trace.read(1);
                Ok(QueryOutput::Count(self.admins.len() as u64))
            }
            Query::UsersDevices { user, index } => {
                self.require_admin(sender, trace)?;
                trace.read(1);
                let pair = usize::try_from(index)
                    .ok()
                    .and_then(|i| self.users_devices(user).get(i))
                    .ok_or(Revert::IndexOutOfRange)?;
                trace.read(2);
                Ok(QueryOutput::DevicePair(*pair))
            }
            Query::FogDevices { fog, index } => {
                self.require_admin(sender, trace)?;
                trace.read(1);
                let device = usize::try_from(index)
                    .ok()
                    .and_then(|i| self.fog_devices(fog).get(i))
                    .ok_or(Revert::IndexOutOfRange)?;
                trace.read(1);
                Ok(QueryOutput::Address(*device))
            }
            Query::TokensIssued => {
                self.require_admin(sender, trace)?;
                trace.read(1 + 2 * self.tokens.len() as u64);
                Ok(QueryOutput::Tokens(self.tokens.clone()))
            }
            Query::BalanceOf { owner } => {
                trace.read(1);
                Ok(QueryOutput::Count(self.token_balance(owner)))
            }
            Query::OwnerOf { token_id } => {
                trace.read(1);
                self.token_owner(token_id)
                    .map(QueryOutput::Address)
                    .ok_or(Revert::UnknownToken)
            }
        }
    }

    // -- event sourcing ----------------------------------------------------

    /// Rebuilds the state of a contract created by `creator` from its event
    /// log alone.
    pub fn replay<'a>(
        creator: Address,
        events: impl IntoIterator<Item = &'a RegistryEvent>,
    ) -> Self {
        let mut state = Self::new(creator);
        for event in events {
            state.fold(event);
        }
        state
    }

    pub fn fold(&mut self, event: &RegistryEvent) {
        match *event {
            RegistryEvent::AdminAdded { new_admin, .. } => self.admins.push(new_admin),
            RegistryEvent::AdminDeleted { admin, .. } => {
                if let Some(idx) = self.admins.iter().position(|a| *a == admin) {
                    self.admins.remove(idx);
                }
            }
            RegistryEvent::FogDeviceMappingAdded { fog, device, .. } => {
                self.fog_devices.entry(fog).or_default().push(device)
            }
            RegistryEvent::FogDeviceAllMappingDeleted { fog, .. } => {
                self.fog_devices.remove(&fog);
            }
            RegistryEvent::UserDeviceMappingAdded {
                user, device, fog, ..
            } => self
                .users_devices
                .entry(user)
                .or_default()
                .push(DevicePair { fog, device }),
            RegistryEvent::UserDeviceAllMappingDeleted { user, .. } => {
                self.users_devices.remove(&user);
            }
            RegistryEvent::TokenCreated {
                token_id,
                user,
                timestamp,
                ..
            } => {
                self.tokens.push(Token {
                    token_id,
                    timestamp,
                });
                self.token_owners.insert(token_id, user);
                *self.balances.entry(user).or_insert(0) += 1;
            }
            RegistryEvent::AdminAlreadyExists { .. }
            | RegistryEvent::DeviceDoesNotExist { .. }
            | RegistryEvent::Authenticated { .. }
            | RegistryEvent::NotAuthenticated { .. }
            | RegistryEvent::InvalidUser { .. } => {}
        }
    }

    // -- canonical snapshot ------------------------------------------------

    /// Canonical text form: JSON with lexicographically sorted keys and
    /// lowercase hex, stable across runs.
    pub fn to_snapshot(&self) -> String {
        let value = serde_json::to_value(self).expect("registry state serializes");
        serde_json::to_string_pretty(&value).expect("json value serializes")
    }

    pub fn from_snapshot(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// The per-token metadata record: owner, token id, the three identities, the
/// block timestamp, and the time since the same user's previous token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DscotMetadata {
    pub owner: Address,
    pub token_id: Digest32,
    pub user_id: Address,
    pub device_id: Address,
    pub fog_id: Address,
    pub timestamp: u64,
    pub delta_t: u64,
}

/// Metadata records for every `TokenCreated` in `events`, in order, with
/// `delta_t` measured against the same user's previous token (0 for the first).
pub fn metadata_stream<'a>(
    events: impl IntoIterator<Item = &'a RegistryEvent>,
) -> Vec<DscotMetadata> {
    let mut last_seen: BTreeMap<Address, u64> = BTreeMap::new();
    let mut out = Vec::new();
    for event in events {
        if let RegistryEvent::TokenCreated {
            token_id,
            user,
            fog,
            device,
            timestamp,
        } = *event
        {
            let delta_t = last_seen
                .insert(user, timestamp)
                .map_or(0, |prev| timestamp.saturating_sub(prev));
            out.push(DscotMetadata {
                owner: user,
                token_id,
                user_id: user,
                device_id: device,
                fog_id: fog,
                timestamp,
                delta_t,
            });
        }
    }
    out
}
