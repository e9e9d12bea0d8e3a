//! Acceptance suite. Runs every criterion, prints one verdict line each, and
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dscot_core::crypto::{keccak256, Address, Digest32, KeyPair};
use dscot_core::ledger::{FaultMask, GasSchedule, Ledger, Payload, TxStatus};
use dscot_core::registry::{
    Context, DevicePair, Operation, RegistryEvent, RegistryState, Revert, Token,
};
use dscot_core::report;
use dscot_core::scenario::{self, RunTrace};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, bound: Duration) -> Result<(), String> {
    ensure(
        elapsed < bound,
        format!("took {elapsed:.2?}, bound {bound:.0?}"),
    )
}

fn fixture_run(name: &str) -> RunTrace {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name);
    let text = std::fs::read_to_string(path).expect("fixture exists");
    let script = scenario::parse(&text).expect("fixture parses");
    scenario::run(&script, GasSchedule::default()).expect("fixture runs")
}

// 1 ---------------------------------------------------------------------

fn fixture_reproduction() -> Outcome {
    let start = Instant::now();
    let r = report::gas_report(None);
    let mint = &r.comparisons[0];
    let approve = &r.comparisons[1];
    ensure(
        mint.function == "mintNFT" && approve.function == "approve",
        "unexpected row order",
    )?;
    ensure(
        (mint.efficiency_pct - 26.5).abs() <= 0.1,
        format!("mint efficiency {}", mint.efficiency_pct),
    )?;
    ensure(
        (approve.efficiency_pct - 11.0).abs() <= 0.1,
        format!("approve efficiency {}", approve.efficiency_pct),
    )?;
    ensure(
        mint.efficiency == "26.5%" && approve.efficiency == "11.0%",
        "one-decimal rendering",
    )?;
    ensure(
        mint.banner == "≈27%" && approve.banner == "≈11%",
        "banner rendering",
    )?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "mint {} ({}), approve {} ({})",
        mint.efficiency, mint.banner, approve.efficiency, approve.banner
    ))
}

// 2 ---------------------------------------------------------------------

fn gas_ordering() -> Outcome {
    let start = Instant::now();
    let trace = fixture_run("canonical.scn");
    let get = |op| report::metered(&trace, op).ok_or(format!("no successful {op}"));
    let (mint, udm, approve) = (get("mintNFT")?, get("UserDeviceMapping")?, get("approve")?);
    ensure(
        mint as f64 > udm as f64 * 1.05,
        format!("mint {mint} vs mapping {udm}"),
    )?;
    ensure(
        udm as f64 > approve as f64 * 1.05,
        format!("mapping {udm} vs approve {approve}"),
    )?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "mintNFT {mint} > UserDeviceMapping {udm} > approve {approve}"
    ))
}

// 3 ---------------------------------------------------------------------

fn zero_fee_calls() -> Outcome {
    let start = Instant::now();
    let trace = fixture_run("calls500.scn");
    let calls: Vec<_> = trace
        .steps
        .iter()
        .filter(|s| s.directive == "call")
        .collect();
    ensure(calls.len() == 500, format!("{} calls", calls.len()))?;
    let cycle = ["adminAdd", "No_ofAdmins", "users_devices", "tokens_Issued"];
    for (i, c) in calls.iter().enumerate() {
        ensure(
            c.operation == cycle[i % 4],
            format!("call {i} is {}", c.operation),
        )?;
        ensure(c.status.is_ok(), format!("call {i} failed: {:?}", c.status))?;
        ensure(
            c.execution_cost.is_some_and(|g| g > 0),
            format!("call {i} has no execution cost"),
        )?;
    }
    let total: u64 = calls.iter().map(|c| c.fee).sum();
    ensure(total == 0, format!("total fee {total}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("500 calls, total fee {total}"))
}

// 4 ---------------------------------------------------------------------

fn linear_mint_cost() -> Outcome {
    let start = Instant::now();
    let trace = fixture_run("linearity.scn");
    let points = report::linearity_points(&trace);
    let sizes: Vec<u64> = points.iter().map(|p| p.0).collect();
    ensure(sizes == [1, 2, 4, 8, 16], format!("sizes {sizes:?}"))?;
    let float: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let (a, b, worst) = report::affine_fit(&float);
    ensure(b > 0.0, "mint cost does not grow with the fog list")?;
    ensure(worst < 0.01, format!("relative residual {worst}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "gas = {a:.0} + {b:.0}·k, max residual {:.4}%",
        worst * 100.0
    ))
}

// 5 ---------------------------------------------------------------------

/// Straightforward list-based restatement of the registry rules.
#[derive(Clone, Default)]
struct NaiveRegistry {
    admins: Vec<Address>,
    /// (fog, device) in insertion order.
    fog_pairs: Vec<(Address, Address)>,
    /// (user, fog, device) in insertion order.
    user_triples: Vec<(Address, Address, Address)>,
    tokens: Vec<([u8; 32], u64)>,
    /// One entry per mint: (token, owner).
    mints: Vec<([u8; 32], Address)>,
}

#[derive(Clone, Copy, Debug)]
enum NaiveOp {
    Approve(Address),
    DelAdmin(Address),
    MapDevice(Address, Address),
    MapUser(Address, Address, Address),
    DelDev(Address),
    DelUser(Address),
    Mint(Address, Address),
}

fn reference_token(device: Address, fog: Address, sender: Address, ts: u64) -> [u8; 32] {
    use tiny_keccak::{Hasher, Keccak};
    let mut k = Keccak::v256();
    k.update(&device.0);
    k.update(&fog.0);
    k.update(&sender.0);
    let mut word = [0u8; 32];
    word[24..].copy_from_slice(&ts.to_be_bytes());
    k.update(&word);
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    out
}

impl NaiveRegistry {
    fn new(creator: Address) -> Self {
        Self {
            admins: vec![creator],
            ..Self::default()
        }
    }

    fn devices_of(&self, fog: Address) -> Vec<Address> {
        self.fog_pairs
            .iter()
            .filter(|p| p.0 == fog)
            .map(|p| p.1)
            .collect()
    }

    fn pairs_of(&self, user: Address) -> Vec<DevicePair> {
        self.user_triples
            .iter()
            .filter(|t| t.0 == user)
            .map(|t| DevicePair {
                fog: t.1,
                device: t.2,
            })
            .collect()
    }

    fn step(
        &mut self,
        sender: Address,
        ts: u64,
        op: NaiveOp,
    ) -> Result<Vec<RegistryEvent>, &'static str> {
        use RegistryEvent as E;
        let admin = self.admins.contains(&sender);
        if !matches!(op, NaiveOp::Mint(..)) && !admin {
            return Err("NotAnAdmin");
        }
        Ok(match op {
            NaiveOp::Approve(new_admin) => {
                if self.admins.contains(&new_admin) {
                    vec![E::AdminAlreadyExists { new_admin, sender }]
                } else {
                    self.admins.push(new_admin);
                    vec![E::AdminAdded {
                        new_admin,
                        adding_admin: sender,
                    }]
                }
            }
            NaiveOp::DelAdmin(target) => {
                if !self.admins.contains(&target) {
                    vec![]
                } else if self.admins.len() == 1 {
                    return Err("LastAdmin");
                } else {
                    self.admins.retain(|a| *a != target);
                    vec![E::AdminDeleted {
                        admin: target,
                        deleting_admin: sender,
                    }]
                }
            }
            NaiveOp::MapDevice(fog, device) => {
                self.fog_pairs.push((fog, device));
                vec![E::FogDeviceMappingAdded {
                    fog,
                    device,
                    adding_admin: sender,
                }]
            }
            NaiveOp::MapUser(user, device, fog) => {
                if self.devices_of(fog).contains(&device) {
                    self.user_triples.push((user, fog, device));
                    vec![E::UserDeviceMappingAdded {
                        user,
                        device,
                        adding_admin: sender,
                        fog,
                    }]
                } else {
                    vec![E::DeviceDoesNotExist {
                        fog,
                        device,
                        sender,
                    }]
                }
            }
            NaiveOp::DelDev(fog) => {
                self.fog_pairs.retain(|p| p.0 != fog);
                vec![E::FogDeviceAllMappingDeleted {
                    fog,
                    deleting_admin: sender,
                }]
            }
            NaiveOp::DelUser(user) => {
                self.user_triples.retain(|t| t.0 != user);
                vec![E::UserDeviceAllMappingDeleted {
                    user,
                    deleting_admin: sender,
                }]
            }
            NaiveOp::Mint(device, fog) => {
                if !self.devices_of(fog).contains(&device) {
                    vec![E::DeviceDoesNotExist {
                        fog,
                        device,
                        sender,
                    }]
                } else if !self.pairs_of(sender).contains(&DevicePair { fog, device }) {
                    vec![E::NotAuthenticated { user: sender }]
                } else {
                    let id = reference_token(device, fog, sender, ts);
                    self.tokens.push((id, ts));
                    self.mints.push((id, sender));
                    vec![
                        E::Authenticated {
                            user: sender,
                            device,
                            fog,
                        },
                        E::TokenCreated {
                            token_id: Digest32(id),
                            user: sender,
                            fog,
                            device,
                            timestamp: ts,
                        },
                    ]
                }
            }
        })
    }
}

fn to_operation(op: NaiveOp) -> Operation {
    match op {
        NaiveOp::Approve(new_admin) => Operation::Approve {
            new_admin,
            token_id: Digest32::ZERO,
        },
        NaiveOp::DelAdmin(admin) => Operation::DelAdmin { admin },
        NaiveOp::MapDevice(fog, device) => Operation::DeviceFogMapping { fog, device },
        NaiveOp::MapUser(user, device, fog) => Operation::UserDeviceMapping { user, device, fog },
        NaiveOp::DelDev(fog) => Operation::DelDev { fog },
        NaiveOp::DelUser(user) => Operation::DelUser { user },
        NaiveOp::Mint(device, fog) => Operation::MintNft { device, fog },
    }
}

fn revert_name(r: &Revert) -> &'static str {
    match r {
        Revert::NotAnAdmin => "NotAnAdmin",
        Revert::LastAdmin => "LastAdmin",
        Revert::UnknownToken => "UnknownToken",
        Revert::IndexOutOfRange => "IndexOutOfRange",
    }
}

struct Universe {
    everyone: Vec<Address>,
    ops: Vec<(Address, NaiveOp)>,
}

fn universe() -> Universe {
    let a = |b: u8| Address([b; 20]);
    let (a1, a2, user, fog, d1, d2) = (a(0xa1), a(0xa2), a(0x05), a(0xf0), a(0xd1), a(0xd2));
    let ops = vec![
        (a1, NaiveOp::Approve(a2)),
        (a2, NaiveOp::Approve(a1)),
        (a1, NaiveOp::DelAdmin(a2)),
        (a2, NaiveOp::DelAdmin(a1)),
        (a1, NaiveOp::MapDevice(fog, d1)),
        (a1, NaiveOp::MapDevice(fog, d2)),
        (a1, NaiveOp::MapUser(user, d1, fog)),
        (a2, NaiveOp::MapUser(user, d2, fog)),
        (a1, NaiveOp::DelDev(fog)),
        (a1, NaiveOp::DelUser(user)),
        (user, NaiveOp::Mint(d1, fog)),
        (user, NaiveOp::Mint(d2, fog)),
        (a1, NaiveOp::Mint(d1, fog)),
    ];
    Universe {
        everyone: vec![a1, a2, user, fog, d1, d2],
        ops,
    }
}

fn same_state(u: &Universe, real: &RegistryState, naive: &NaiveRegistry) -> Result<(), String> {
    ensure(real.admins() == naive.admins.as_slice(), "admins differ")?;
    for &x in &u.everyone {
        ensure(
            real.fog_devices(x) == naive.devices_of(x).as_slice(),
            format!("fog_devices({x}) differ"),
        )?;
        ensure(
            real.users_devices(x) == naive.pairs_of(x).as_slice(),
            format!("users_devices({x}) differ"),
        )?;
        let minted = naive.mints.iter().filter(|m| m.1 == x).count() as u64;
        ensure(
            real.token_balance(x) == minted,
            format!("balance of {x} differs"),
        )?;
    }
    let tokens: Vec<Token> = naive
        .tokens
        .iter()
        .map(|&(id, timestamp)| Token {
            token_id: Digest32(id),
            timestamp,
        })
        .collect();
    ensure(real.tokens() == tokens.as_slice(), "tokens differ")?;
    for &(id, owner) in &naive.mints {
        ensure(
            real.token_owner(Digest32(id)) == Some(owner),
            "token owner differs",
        )?;
    }
    Ok(())
}

fn explore(
    u: &Universe,
    real: &RegistryState,
    naive: &NaiveRegistry,
    depth: u64,
    path: &mut Vec<usize>,
    visited: &mut u64,
) -> Result<(), String> {
    if depth == 5 {
        return Ok(());
    }
    for (i, &(sender, op)) in u.ops.iter().enumerate() {
        path.push(i);
        *visited += 1;
        let ts = 1_000 + depth;
        let mut r = real.clone();
        let mut n = naive.clone();
        let mut trace = Default::default();
        let got = r.apply(Context::new(sender, ts), &to_operation(op), &mut trace);
        let want = n.step(sender, ts, op);
        let fail = |msg: String| format!("sequence {path:?}: {msg}");
        match (&got, &want) {
            (Ok(a), Ok(b)) if a == b => {}
            (Err(a), Err(b)) if revert_name(a) == *b => {
                ensure(&r == real, "reverted call changed state").map_err(fail)?;
                r = real.clone();
            }
            _ => return Err(fail(format!("implementation {got:?} vs model {want:?}"))),
        }
        same_state(u, &r, &n).map_err(fail)?;
        explore(u, &r, &n, depth + 1, path, visited)?;
        path.pop();
    }
    Ok(())
}

fn brute_force_oracle() -> Outcome {
    let start = Instant::now();
    let u = universe();
    let creator = u.everyone[0];
    let mut visited = 0;
    explore(
        &u,
        &RegistryState::new(creator),
        &NaiveRegistry::new(creator),
        0,
        &mut Vec::new(),
        &mut visited,
    )?;
    let expected: u64 = (1..=5).map(|k| (u.ops.len() as u64).pow(k)).sum();
    ensure(
        visited == expected,
        format!("visited {visited} of {expected}"),
    )?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{visited} sequences over {} operations, {:.1?}",
        u.ops.len(),
        start.elapsed()
    ))
}

// 6 ---------------------------------------------------------------------

fn arb_ops() -> impl Strategy<Value = Vec<(usize, usize, usize, usize)>> {
    // (kind, sender, a, b) indices into small pools
    prop::collection::vec((0usize..7, 0usize..4, 0usize..4, 0usize..4), 1..12)
}

fn pool_op(kind: usize, a: Address, b: Address, c: Address) -> Operation {
    match kind {
        0 => Operation::Approve {
            new_admin: a,
            token_id: Digest32::ZERO,
        },
        1 => Operation::DelAdmin { admin: a },
        2 => Operation::DeviceFogMapping { fog: a, device: b },
        3 => Operation::UserDeviceMapping {
            user: a,
            device: b,
            fog: c,
        },
        4 => Operation::DelDev { fog: a },
        5 => Operation::DelUser { user: a },
        _ => Operation::MintNft { device: b, fog: c },
    }
}

fn mint_trichotomy_and_access_control() -> Outcome {
    let pool: Vec<Address> = (1..=4u8).map(|b| Address([b; 20])).collect();
    let mints = std::cell::Cell::new(0u64);
    let denied = std::cell::Cell::new(0u64);
    let config = Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[6; 32]);
    let mut runner = TestRunner::new_with_rng(config, rng);
    runner
        .run(&arb_ops(), |ops| {
            let mut state = RegistryState::new(pool[0]);
            for (i, &(kind, s, a, b)) in ops.iter().enumerate() {
                let sender = pool[s];
                let op = pool_op(kind, pool[a], pool[b], pool[(a + b) % 4]);
                let before = state.to_snapshot();
                let was_admin = state.is_admin(sender);
                let mut trace = Default::default();
                let result = state.apply(Context::new(sender, i as u64), &op, &mut trace);
                if let Operation::MintNft { .. } = op {
                    mints.set(mints.get() + 1);
                    let events = result.map_err(|e| TestCaseError::fail(e.to_string()))?;
                    let names: Vec<&str> = events.iter().map(|e| e.name()).collect();
                    prop_assert!(
                        matches!(
                            names.as_slice(),
                            ["DeviceDoesNotExist"]
                                | ["NotAuthenticated"]
                                | ["Authenticated", "TokenCreated"]
                        ),
                        "mint emitted {:?}",
                        names
                    );
                } else if !was_admin {
                    denied.set(denied.get() + 1);
                    prop_assert_eq!(result, Err(Revert::NotAnAdmin));
                    prop_assert_eq!(state.to_snapshot(), before);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // The same guarantee end to end: a rejected transaction leaves the
    // committed state root untouched.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let keys: Vec<KeyPair> = (0..4)
        .map(|i| KeyPair::from_seed(6, &format!("k{i}")))
        .collect();
    let mut ledger = Ledger::new(4, 0, GasSchedule::default()).map_err(|e| e.to_string())?;
    ledger
        .submit_signed(&keys[0], Payload::Deploy)
        .map_err(|e| e.to_string())?;
    ledger.run_round(1, &FaultMask::none());
    let mut ledger_denied = 0;
    for t in 0..300u64 {
        let k = &keys[rng.gen_range(1..4)];
        let op = pool_op(
            rng.gen_range(0..6),
            keys[rng.gen_range(0..4)].address(),
            keys[rng.gen_range(0..4)].address(),
            keys[rng.gen_range(0..4)].address(),
        );
        let before = ledger.head().state_root;
        let hash = ledger
            .submit_signed(k, Payload::Invoke { operation: op })
            .map_err(|e| e.to_string())?;
        ledger.run_round(2 + t, &FaultMask::none());
        let receipt = ledger.get_receipt(hash).map_err(|e| e.to_string())?;
        ensure(
            receipt.status == TxStatus::Reverted("Not an Admin".into()),
            format!("non-admin tx {t} not reverted"),
        )?;
        ensure(
            ledger.head().state_root == before,
            "state root moved after revert",
        )?;
        ledger_denied += 1;
    }
    Ok(format!(
        "10000 cases: {} mints, {} denied calls, {ledger_denied} denied ledger txs",
        mints.get(),
        denied.get()
    ))
}

// 7 ---------------------------------------------------------------------

fn event_sourcing() -> Outcome {
    let mut checked_events = 0usize;
    for scenario in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + scenario);
        let keys: Vec<KeyPair> = (0..5)
            .map(|i| KeyPair::from_seed(scenario, &format!("p{i}")))
            .collect();
        let addrs: Vec<Address> = keys.iter().map(|k| k.address()).collect();
        let devices: Vec<Address> = (0..3u8).map(|b| Address([0xd0 + b; 20])).collect();
        let mut ledger = Ledger::new(4, 0, GasSchedule::default()).map_err(|e| e.to_string())?;
        ledger
            .submit_signed(&keys[0], Payload::Deploy)
            .map_err(|e| e.to_string())?;
        let mut clock = 0;
        let txs = rng.gen_range(10..60);
        for _ in 0..txs {
            let signer = if rng.gen_bool(0.7) {
                &keys[0]
            } else {
                &keys[rng.gen_range(0..5)]
            };
            let pick = |rng: &mut ChaCha8Rng| addrs[rng.gen_range(0..5)];
            let op = match rng.gen_range(0..7) {
                0 => pool_op(0, pick(&mut rng), Address::ZERO, Address::ZERO),
                1 => pool_op(1, pick(&mut rng), Address::ZERO, Address::ZERO),
                2 => pool_op(
                    2,
                    pick(&mut rng),
                    devices[rng.gen_range(0..3)],
                    Address::ZERO,
                ),
                3 => {
                    let (u, d, f) = (pick(&mut rng), devices[rng.gen_range(0..3)], pick(&mut rng));
                    pool_op(3, u, d, f)
                }
                4 => pool_op(4, pick(&mut rng), Address::ZERO, Address::ZERO),
                5 => pool_op(5, pick(&mut rng), Address::ZERO, Address::ZERO),
                _ => Operation::MintNft {
                    device: devices[rng.gen_range(0..3)],
                    fog: pick(&mut rng),
                },
            };
            ledger
                .submit_signed(signer, Payload::Invoke { operation: op })
                .map_err(|e| e.to_string())?;
            if rng.gen_bool(0.5) {
                clock += rng.gen_range(0..5);
                ledger.run_round(clock, &FaultMask::none());
            }
        }
        ledger.run_round(clock + 1, &FaultMask::none());
        let live = ledger.registry().ok_or("registry missing")?;
        let log = ledger.event_log();
        checked_events += log.len();
        let rebuilt = RegistryState::replay(
            ledger.creator().ok_or("creator missing")?,
            log.iter().map(|(_, e)| e),
        );
        ensure(
            rebuilt.to_snapshot() == live.to_snapshot(),
            format!("scenario {scenario}: replayed state differs"),
        )?;
        ledger.verify_chain().map_err(|e| e.to_string())?;
    }
    Ok(format!(
        "100 scenarios, {checked_events} events folded, snapshots identical"
    ))
}

// 8 ---------------------------------------------------------------------

fn consensus_quorum() -> Outcome {
    let start = Instant::now();
    let owner = KeyPair::from_seed(8, "owner");
    let mut ledger = Ledger::new(4, 0, GasSchedule::default()).map_err(|e| e.to_string())?;
    let set = ledger.validators().clone();
    let masks: Vec<FaultMask> = (0u32..16)
        .map(|bits| FaultMask::new(&set, (0..4).filter(|v| bits >> v & 1 == 1)).unwrap())
        .collect();

    // Exhaustive: every mask at several heights so each proposer position
    // is exercised.
    let mut clock = 0;
    for mask in &masks {
        for _ in 0..4 {
            clock += 1;
            let before = ledger.head().number;
            let outcome = ledger.run_round(clock, mask);
            let should = mask.len() <= 1;
            ensure(
                outcome.committed() == should,
                format!(
                    "mask {:?} at height {}: committed {}",
                    mask.iter().collect::<Vec<_>>(),
                    outcome.height,
                    outcome.committed()
                ),
            )?;
            let expect_head = if should { before + 1 } else { before };
            ensure(ledger.head().number == expect_head, "head moved on failure")?;
        }
    }

    // Randomized trials with transactions in flight.
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    ledger
        .submit_signed(&owner, Payload::Deploy)
        .map_err(|e| e.to_string())?;
    let mut committed = 0;
    for _ in 0..1000 {
        let mask = &masks[rng.gen_range(0..16)];
        if rng.gen_bool(0.3) {
            let op = Operation::DeviceFogMapping {
                fog: Address([1; 20]),
                device: Address([rng.gen(); 20]),
            };
            ledger
                .submit_signed(&owner, Payload::Invoke { operation: op })
                .map_err(|e| e.to_string())?;
        }
        clock += 1;
        let outcome = ledger.run_round(clock, mask);
        ensure(
            outcome.committed() == (mask.len() <= 1),
            "randomized trial disagrees with quorum rule",
        )?;
        committed += usize::from(outcome.committed());
    }
    let numbers: Vec<u64> = ledger.blocks().iter().map(|b| b.number).collect();
    let expected: Vec<u64> = (0..numbers.len() as u64).collect();
    ensure(
        numbers == expected,
        "block numbers are not unique and contiguous",
    )?;
    ledger.verify_chain().map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "16 masks × 4 heights exact; 1000 trials, {committed} commits, {} distinct block numbers",
        numbers.len()
    ))
}

// 9 ---------------------------------------------------------------------

fn determinism() -> Outcome {
    let a = fixture_run("canonical.scn");
    let b = fixture_run("canonical.scn");
    ensure(a.chain == b.chain, "chain exports differ")?;
    ensure(a.to_json() == b.to_json(), "trace exports differ")?;
    ensure(a.to_csv() == b.to_csv(), "CSV exports differ")?;
    ensure(a.determinism_hash == a.content_hash(), "stored hash stale")?;
    Ok(format!("hash {}", a.determinism_hash))
}

// 10 --------------------------------------------------------------------

fn crypto_vectors() -> Outcome {
    let vectors: [(&[u8], &str); 3] = [
        (
            b"",
            "0xc5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470",
        ),
        (
            b"abc",
            "0x4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45",
        ),
        (
            &[0xa3; 200],
            "0x3a57666b048777f2c953dc4456f45a2588e1cb6f2da760122d530ac2ce607d4a",
        ),
    ];
    for (input, expected) in vectors {
        let got = keccak256(input).to_string();
        ensure(
            got == expected,
            format!("{}-byte input: {got}", input.len()),
        )?;
    }
    Ok("empty, \"abc\", 200 × 0xa3".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("fixture reproduction", fixture_reproduction),
        ("gas ordering", gas_ordering),
        ("zero-fee calls", zero_fee_calls),
        ("O(n) mint cost", linear_mint_cost),
        ("registry brute-force oracle", brute_force_oracle),
        (
            "mint trichotomy and access control",
            mint_trichotomy_and_access_control,
        ),
        ("event-sourcing equivalence", event_sourcing),
        ("consensus quorum", consensus_quorum),
        ("determinism", determinism),
        ("crypto vectors", crypto_vectors),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
