//! Simulated private chain: signed transaction admission, round-based
//! finality, gas metering and event-log queries.

pub mod consensus;
pub mod gas;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::crypto::{keccak256, Address, Digest32, KeyPair, Signature};
use crate::registry::{Context, Operation, Query, QueryOutput, RegistryEvent, RegistryState};

pub use consensus::{FaultMask, HeightOutcome, RoundRecord, ValidatorId, ValidatorSet};
pub use gas::{GasSchedule, OpTrace};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("signature does not verify for sender {0}")]
    BadSignature(Address),
    #[error("nonce {got} for {sender}, expected {expected}")]
    BadNonce {
        sender: Address,
        expected: u64,
        got: u64,
    },
    #[error("block {0} not found")]
    BlockNotFound(u64),
    #[error("receipt {0} not found")]
    ReceiptNotFound(Digest32),
    #[error("replay diverges from stored chain at block {0}")]
    ChainMismatch(u64),
    #[error(transparent)]
    Consensus(#[from] consensus::ConsensusError),
}

pub const NOT_DEPLOYED: &str = "Registry not deployed";
pub const ALREADY_DEPLOYED: &str = "Registry already deployed";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Payload {
    /// Contract creation; the signer becomes the first admin.
    Deploy,
    Invoke {
        operation: Operation,
    },
}

impl Payload {
    pub fn name(&self) -> &'static str {
        match self {
            Payload::Deploy => "deploy",
            Payload::Invoke { operation } => operation.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub payload: Payload,
    pub nonce: u64,
    pub signature: Signature,
}

#[derive(Serialize)]
struct SigningView<'a> {
    domain: &'static str,
    sender: Address,
    payload: &'a Payload,
    nonce: u64,
}

impl Transaction {
    /// Canonical bytes covered by the signature.
    pub fn signing_bytes(sender: Address, payload: &Payload, nonce: u64) -> Vec<u8> {
        serde_json::to_vec(&SigningView {
            domain: "dscot-tx-v1",
            sender,
            payload,
            nonce,
        })
        .expect("transaction view serializes")
    }

    pub fn signed(key: &KeyPair, payload: Payload, nonce: u64) -> Self {
        let sender = key.address();
        let signature = key.sign(&Self::signing_bytes(sender, &payload, nonce));
        Self {
            sender,
            payload,
            nonce,
            signature,
        }
    }

    pub fn verify_signature(&self) -> bool {
        self.signature.signer == self.sender
            && self
                .signature
                .recover(&Self::signing_bytes(self.sender, &self.payload, self.nonce))
                .is_some()
    }

    pub fn hash(&self) -> Digest32 {
        keccak256(&serde_json::to_vec(self).expect("transaction serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason")]
pub enum TxStatus {
    Accepted,
    Reverted(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: Digest32,
    pub sender: Address,
    pub operation: String,
    pub status: TxStatus,
    pub events: Vec<RegistryEvent>,
    pub gas_used: u64,
    pub block_number: u64,
    pub op_trace: OpTrace,
}

impl Receipt {
    /// Transaction fee in gas units; no gas price is modeled.
    pub fn fee(&self) -> u64 {
        self.gas_used
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub number: u64,
    pub timestamp: u64,
    pub parent_hash: Digest32,
    pub tx_hashes: Vec<Digest32>,
    pub state_root: Digest32,
    pub proposer: ValidatorId,
    pub round: u32,
}

impl Block {
    pub fn hash(&self) -> Digest32 {
        keccak256(&serde_json::to_vec(self).expect("block serializes"))
    }

    /// One line of the chain export: sorted keys, hex digests.
    pub fn export_line(&self) -> String {
        let mut value = serde_json::to_value(self).expect("block serializes");
        value["hash"] = serde_json::Value::String(self.hash().to_hex());
        serde_json::to_string(&value).expect("json value serializes")
    }
}

/// Result of a read-only call: an execution cost is reported, no fee charged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallResult {
    pub method: String,
    pub output: Result<QueryOutput, String>,
    pub execution_cost: u64,
    pub fee: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub height: u64,
    pub rounds: Vec<RoundRecord>,
    /// Block number and receipt hashes when the height committed.
    pub block: Option<u64>,
    pub receipts: Vec<Digest32>,
}

impl RoundOutcome {
    pub fn committed(&self) -> bool {
        self.block.is_some()
    }

    pub fn failed_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| !r.committed).count()
    }
}

fn state_root(registry: &Option<RegistryState>) -> Digest32 {
    match registry {
        Some(state) => keccak256(state.to_snapshot().as_bytes()),
        None => keccak256(b"null"),
    }
}

/// Applies one transaction to the world state.
fn execute(
    registry: &mut Option<RegistryState>,
    tx: &Transaction,
    timestamp: u64,
) -> (TxStatus, Vec<RegistryEvent>, OpTrace) {
    let mut trace = OpTrace::default();
    let result = match (&tx.payload, registry.as_mut()) {
        (Payload::Deploy, None) => {
            *registry = Some(RegistryState::new(tx.sender));
            trace = RegistryState::constructor_trace();
            Ok(Vec::new())
        }
        (Payload::Deploy, Some(_)) => Err(ALREADY_DEPLOYED.to_string()),
        (Payload::Invoke { .. }, None) => Err(NOT_DEPLOYED.to_string()),
        (Payload::Invoke { operation }, Some(state)) => state
            .apply(Context::new(tx.sender, timestamp), operation, &mut trace)
            .map_err(|r| r.to_string()),
    };
    match result {
        Ok(events) => (TxStatus::Accepted, events, trace),
        Err(reason) => (TxStatus::Reverted(reason), Vec::new(), trace),
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    validators: ValidatorSet,
    schedule: GasSchedule,
    blocks: Vec<Block>,
    transactions: BTreeMap<Digest32, Transaction>,
    receipts: BTreeMap<Digest32, Receipt>,
    pending: VecDeque<Transaction>,
    next_nonce: BTreeMap<Address, u64>,
    registry: Option<RegistryState>,
    creator: Option<Address>,
}

impl Ledger {
    pub fn new(
        validators: usize,
        genesis_time: u64,
        schedule: GasSchedule,
    ) -> Result<Self, LedgerError> {
        let validators = ValidatorSet::new(validators)?;
        let registry = None;
        let genesis = Block {
            number: 0,
            timestamp: genesis_time,
            parent_hash: Digest32::ZERO,
            tx_hashes: Vec::new(),
            state_root: state_root(&registry),
            proposer: validators.proposer(0, 0),
            round: 0,
        };
        Ok(Self {
            validators,
            schedule,
            blocks: vec![genesis],
            transactions: BTreeMap::new(),
            receipts: BTreeMap::new(),
            pending: VecDeque::new(),
            next_nonce: BTreeMap::new(),
            registry,
            creator: None,
        })
    }

    pub fn validators(&self) -> &ValidatorSet {
        &self.validators
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    /// Registry state as of the latest committed block.
    pub fn registry(&self) -> Option<&RegistryState> {
        self.registry.as_ref()
    }

    pub fn creator(&self) -> Option<Address> {
        self.creator
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Nonce the next transaction from `sender` must carry (0 for the first).
    pub fn next_nonce(&self, sender: Address) -> u64 {
        self.next_nonce.get(&sender).copied().unwrap_or(0)
    }

    /// Admits a signed transaction into the pending queue; returns its hash.
    pub fn submit(&mut self, tx: Transaction) -> Result<Digest32, LedgerError> {
        if !tx.verify_signature() {
            return Err(LedgerError::BadSignature(tx.sender));
        }
        let expected = self.next_nonce(tx.sender);
        if tx.nonce != expected {
            return Err(LedgerError::BadNonce {
                sender: tx.sender,
                expected,
                got: tx.nonce,
            });
        }
        self.next_nonce.insert(tx.sender, expected + 1);
        let hash = tx.hash();
        self.pending.push_back(tx);
        Ok(hash)
    }

    /// Signs `payload` with `key` at the sender's next nonce and submits it.
    pub fn submit_signed(
        &mut self,
        key: &KeyPair,
        payload: Payload,
    ) -> Result<Digest32, LedgerError> {
        let nonce = self.next_nonce(key.address());
        self.submit(Transaction::signed(key, payload, nonce))
    }

    /// Drives consensus for the next height. On commit, every pending
    /// transaction is applied in order into a new block sealed at `clock`
    /// (clamped so block time never goes backwards). Without a quorum the
    /// queue is left untouched.
    pub fn run_round(&mut self, clock: u64, faults: &FaultMask) -> RoundOutcome {
        let height = self.head().number + 1;
        let outcome = consensus::run_height(&self.validators, height, faults);
        let Some(round) = outcome.committed_round().cloned() else {
            return RoundOutcome {
                height,
                rounds: outcome.rounds,
                block: None,
                receipts: Vec::new(),
            };
        };

        let timestamp = clock.max(self.head().timestamp);
        let mut tx_hashes = Vec::with_capacity(self.pending.len());
        for tx in std::mem::take(&mut self.pending) {
            let hash = tx.hash();
            let (status, events, op_trace) = execute(&mut self.registry, &tx, timestamp);
            if matches!(tx.payload, Payload::Deploy) && status == TxStatus::Accepted {
                self.creator = Some(tx.sender);
            }
            let receipt = Receipt {
                tx_hash: hash,
                sender: tx.sender,
                operation: tx.payload.name().to_string(),
                status,
                events,
                gas_used: self.schedule.meter(&op_trace),
                block_number: height,
                op_trace,
            };
            self.receipts.insert(hash, receipt);
            self.transactions.insert(hash, tx);
            tx_hashes.push(hash);
        }
        let block = Block {
            number: height,
            timestamp,
            parent_hash: self.head().hash(),
            tx_hashes: tx_hashes.clone(),
            state_root: state_root(&self.registry),
            proposer: round.proposer,
            round: round.round,
        };
        self.blocks.push(block);
        RoundOutcome {
            height,
            rounds: outcome.rounds,
            block: Some(height),
            receipts: tx_hashes,
        }
    }

    /// Read-only call against the latest committed state. Never charges a fee.
    pub fn call(&self, sender: Address, query: &Query) -> CallResult {
        let mut trace = OpTrace::default();
        let output = match &self.registry {
            Some(state) => state
                .query(sender, query, &mut trace)
                .map_err(|r| r.to_string()),
            None => Err(NOT_DEPLOYED.to_string()),
        };
        CallResult {
            method: query.name().to_string(),
            output,
            execution_cost: self.schedule.meter(&trace),
            fee: 0,
        }
    }

    pub fn get_block(&self, number: u64) -> Result<&Block, LedgerError> {
        usize::try_from(number)
            .ok()
            .and_then(|n| self.blocks.get(n))
            .ok_or(LedgerError::BlockNotFound(number))
    }

    pub fn get_receipt(&self, tx_hash: Digest32) -> Result<&Receipt, LedgerError> {
        self.receipts
            .get(&tx_hash)
            .ok_or(LedgerError::ReceiptNotFound(tx_hash))
    }

    pub fn get_transaction(&self, tx_hash: Digest32) -> Option<&Transaction> {
        self.transactions.get(&tx_hash)
    }

    /// Receipts in chain order.
    pub fn receipts(&self) -> impl Iterator<Item = &Receipt> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| b.tx_hashes.iter())
            .map(|h| &self.receipts[h])
    }

    /// Every emitted event in chain order, tagged with its block number.
    pub fn event_log(&self) -> Vec<(u64, RegistryEvent)> {
        self.receipts()
            .flat_map(|r| r.events.iter().map(|e| (r.block_number, e.clone())))
            .collect()
    }

    /// All events carrying `token_id`, in chain order.
    pub fn trace_token(&self, token_id: Digest32) -> Vec<(u64, RegistryEvent)> {
        self.event_log()
            .into_iter()
            .filter(|(_, e)| e.token_id() == Some(token_id))
            .collect()
    }

    /// One JSON record per block.
    pub fn export_chain(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&block.export_line());
            out.push('\n');
        }
        out
    }

    /// Replays every stored transaction from genesis and checks block links,
    /// state roots and receipts against what is stored.
    pub fn verify_chain(&self) -> Result<(), LedgerError> {
        let mut registry = None;
        let mut parent = Digest32::ZERO;
        for block in &self.blocks {
            if block.parent_hash != parent {
                return Err(LedgerError::ChainMismatch(block.number));
            }
            for hash in &block.tx_hashes {
                let tx = &self.transactions[hash];
                let (status, events, trace) = execute(&mut registry, tx, block.timestamp);
                let stored = &self.receipts[hash];
                if stored.status != status
                    || stored.events != events
                    || stored.gas_used != self.schedule.meter(&trace)
                {
                    return Err(LedgerError::ChainMismatch(block.number));
                }
            }
            if state_root(&registry) != block.state_root {
                return Err(LedgerError::ChainMismatch(block.number));
            }
            parent = block.hash();
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn tamper_receipt(&mut self, tx_hash: Digest32, gas_used: u64) {
        if let Some(r) = self.receipts.get_mut(&tx_hash) {
            r.gas_used = gas_used;
        }
    }
}
