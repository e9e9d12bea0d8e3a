use std::path::PathBuf;

use dscot_core::crypto::{Address, Digest32};
use dscot_core::ledger::GasSchedule;
use dscot_core::registry::{DevicePair, QueryOutput, Token};
use dscot_core::scenario::{self, RunTrace, StepStatus};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

fn canonical() -> RunTrace {
    let script = scenario::parse(&read_fixture("canonical.scn")).unwrap();
    scenario::run(&script, GasSchedule::default()).unwrap()
}

fn addr(s: &str) -> Address {
    s.parse().unwrap()
}

/// Regenerate with `DSCOT_BLESS=1 cargo test -p dscot-core --test scenarios`.
#[test]
fn generated_fixtures_are_current() {
    let expected = [
        ("calls500.scn", scenario::calls_script(11, 500)),
        (
            "linearity.scn",
            scenario::linearity_script(5, &[1, 2, 4, 8, 16]),
        ),
    ];
    for (name, text) in expected {
        if std::env::var_os("DSCOT_BLESS").is_some() {
            std::fs::write(fixture(name), &text).unwrap();
        }
        assert_eq!(read_fixture(name), text, "{name} is stale");
    }
}

#[test]
fn shipped_schedule_equals_default() {
    let parsed: GasSchedule = read_fixture("default.schedule").parse().unwrap();
    assert_eq!(parsed, GasSchedule::default());
}

#[test]
fn canonical_parses_to_fourteen_steps() {
    let script = scenario::parse(&read_fixture("canonical.scn")).unwrap();
    assert_eq!(script.steps.len(), 14);
    assert_eq!(script.genesis_time, 1_657_188_735);
}

#[test]
fn canonical_event_order() {
    let trace = canonical();
    let names: Vec<&str> = trace.event_stream().map(|e| e.name()).collect();
    assert_eq!(
        names,
        [
            "AdminAdded",
            "FogDeviceMappingAdded",
            "UserDeviceMappingAdded",
            "Authenticated",
            "TokenCreated"
        ]
    );
    assert!(trace.aborted.is_none());
    assert!(trace.steps.iter().all(|s| s.status == StepStatus::Ok));
}

#[test]
fn canonical_reproduces_published_call_outputs() {
    let trace = canonical();
    let output = |method: &str| {
        trace
            .steps
            .iter()
            .find(|s| s.operation == method)
            .and_then(|s| s.output.clone())
            .unwrap()
    };
    let admin = addr("0x5B38Da6a701c568545dCfcB03FcB875f56beddC4");
    assert_eq!(output("adminAdd"), QueryOutput::Addresses(vec![admin]));
    assert_eq!(output("No_ofAdmins"), QueryOutput::Count(2));
    assert_eq!(
        output("users_devices"),
        QueryOutput::DevicePair(DevicePair {
            fog: addr("0x78731D3Ca6b7E34aC0F824c42a7cC18A495cabaB"),
            device: addr("0x617f2E2fD72FD9D5503197092aC168c91465E7f2"),
        })
    );
    let token: Digest32 = "0xf63fee14c773d0896382c7b8cd950adae380254bd7a346cb965818fab9143d82"
        .parse()
        .unwrap();
    assert_eq!(
        output("tokens_Issued"),
        QueryOutput::Tokens(vec![Token {
            token_id: token,
            timestamp: 1_657_188_740
        }])
    );
    assert_eq!(
        trace.principals["user"],
        addr("0x4B20993Bc481177ec7E8f571ceCaE8A9e22C02db")
    );
}

#[test]
fn calibrated_approve_meters_published_total() {
    let trace = canonical();
    let approve = trace
        .steps
        .iter()
        .find(|s| s.operation == "approve")
        .unwrap();
    assert_eq!(approve.gas_used, Some(61_613));
    assert_eq!(approve.fee, 61_613);
}

#[test]
fn mint_under_two_faults_records_no_commit_rounds() {
    let text = read_fixture("canonical.scn").replace(
        "require mint user device fog",
        "inject-fault 0 2\nmint user device fog",
    );
    let trace = scenario::run(&scenario::parse(&text).unwrap(), GasSchedule::default()).unwrap();
    let mint = trace
        .steps
        .iter()
        .find(|s| s.operation == "mintNFT")
        .unwrap();
    assert_eq!(mint.status, StepStatus::Pending);
    assert_eq!(mint.failed_rounds, 4);
    assert!(mint.events.is_empty());
    assert_eq!(trace.pending_at_end, 1);
}

#[test]
fn receipts_and_chain_agree() {
    let trace = canonical();
    let mut tx_hashes: Vec<Digest32> = trace.steps.iter().filter_map(|s| s.tx_hash).collect();
    let chain_hashes: Vec<Digest32> = trace
        .chain
        .lines()
        .flat_map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["tx_hashes"]
                .as_array()
                .unwrap()
                .iter()
                .map(|h| h.as_str().unwrap().parse().unwrap())
                .collect::<Vec<Digest32>>()
        })
        .collect();
    assert_eq!(tx_hashes, chain_hashes);
    tx_hashes.sort();
    tx_hashes.dedup();
    assert_eq!(tx_hashes.len(), chain_hashes.len());
}

#[test]
fn schedule_override_changes_gas_only() {
    let script = scenario::parse(&read_fixture("canonical.scn")).unwrap();
    let base = scenario::run(&script, GasSchedule::default()).unwrap();
    let cheap = GasSchedule {
        call_overhead: 0,
        ..GasSchedule::default()
    };
    let other = scenario::run(&script, cheap).unwrap();
    assert_ne!(base.determinism_hash, other.determinism_hash);
    for (a, b) in base.steps.iter().zip(&other.steps) {
        assert_eq!(a.events, b.events);
        if let (Some(x), Some(y)) = (a.gas(), b.gas()) {
            assert_eq!(x - y, 5585 * a.op_trace.map_or(1, |t| t.invocations));
        }
    }
}

#[test]
fn trace_json_round_trips() {
    let trace = canonical();
    let back = RunTrace::from_json(&trace.to_json()).unwrap();
    assert_eq!(back, trace);
    assert_eq!(back.content_hash(), trace.determinism_hash);
}
