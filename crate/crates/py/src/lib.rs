//! Python bindings: hashing and keys, an interactive session driver, the
//! scenario runner, and the report/verify checks.

use std::collections::HashMap;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use dscot_core::crypto::{self, Address};
use dscot_core::ledger::{FaultMask, GasSchedule};
use dscot_core::registry;
use dscot_core::report;
use dscot_core::scenario::{self, RunTrace};
use dscot_core::sessions::{self, NftPass, PassVerdict, Principal, Role};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_address(s: &str) -> PyResult<Address> {
    s.parse().map_err(value_err)
}

/// keccak-256 of `data`, as 0x-prefixed hex.
#[pyfunction]
fn keccak256(data: &[u8]) -> String {
    crypto::keccak256(data).to_string()
}

/// Token id derived from (device, fog, sender, timestamp).
#[pyfunction]
fn mint_token_id(device: &str, fog: &str, sender: &str, timestamp: u64) -> PyResult<String> {
    Ok(registry::mint_token_id(
        parse_address(device)?,
        parse_address(fog)?,
        parse_address(sender)?,
        timestamp,
    )
    .to_string())
}

#[pyclass(name = "KeyPair", module = "dscot", frozen)]
struct PyKeyPair(crypto::KeyPair);

#[pymethods]
impl PyKeyPair {
    /// Deterministic key for `(seed, name)`.
    #[new]
    #[pyo3(signature = (name, seed = 0))]
    fn new(name: &str, seed: u64) -> Self {
        Self(crypto::KeyPair::from_seed(seed, name))
    }

    #[staticmethod]
    fn from_private_key(hex_key: &str) -> PyResult<Self> {
        let raw = hex::decode(hex_key.trim_start_matches("0x")).map_err(value_err)?;
        let bytes: [u8; 32] = raw
            .try_into()
            .map_err(|_| PyValueError::new_err("private key must be 32 bytes"))?;
        crypto::KeyPair::from_private_key(bytes)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn address(&self) -> String {
        self.0.address().to_string()
    }

    #[getter]
    fn public_key(&self) -> String {
        self.0.public_key().to_string()
    }

    /// 65-byte recoverable signature over keccak256(message).
    fn sign<'py>(&self, py: Python<'py>, message: &[u8]) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.sign(message).bytes.0)
    }

    /// True iff `signature` was produced by this key over `message`.
    fn verify(&self, message: &[u8], signature: &[u8]) -> PyResult<bool> {
        let bytes: [u8; 65] = signature
            .try_into()
            .map_err(|_| PyValueError::new_err("signature must be 65 bytes"))?;
        let sig = crypto::Signature {
            bytes: crypto::SignatureBytes(bytes),
            signer: self.0.address(),
        };
        Ok(crypto::verify(self.0.public_key(), message, &sig))
    }

    fn __repr__(&self) -> String {
        format!("KeyPair({})", self.0.address())
    }
}

/// Interactive challenge-response sessions against a fresh ledger.
#[pyclass(name = "Session", module = "dscot")]
struct PySession {
    driver: sessions::SessionDriver,
    seed: u64,
    principals: HashMap<String, Principal>,
}

impl PySession {
    fn get(&self, name: &str) -> PyResult<&Principal> {
        self.principals
            .get(name)
            .ok_or_else(|| PyKeyError::new_err(format!("unknown principal {name}")))
    }

    fn address_of(&self, name_or_address: &str) -> PyResult<Address> {
        match self.principals.get(name_or_address) {
            Some(p) => Ok(p.address),
            None => parse_address(name_or_address),
        }
    }
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (seed = 0, validators = 4, genesis_time = 0, clock_step = 1))]
    fn new(seed: u64, validators: usize, genesis_time: u64, clock_step: u64) -> PyResult<Self> {
        let driver = sessions::SessionDriver::new(
            seed,
            validators,
            genesis_time,
            clock_step,
            GasSchedule::default(),
        )
        .map_err(value_err)?;
        Ok(Self {
            driver,
            seed,
            principals: HashMap::new(),
        })
    }

    /// Creates a seeded principal and returns its address.
    fn principal(&mut self, name: &str, role: &str) -> PyResult<String> {
        let role: Role = role.parse().map_err(value_err)?;
        let p = Principal::from_seed(self.seed, name, role);
        let address = p.address.to_string();
        self.principals.insert(name.to_owned(), p);
        Ok(address)
    }

    #[getter]
    fn clock(&self) -> u64 {
        self.driver.clock()
    }

    #[getter]
    fn height(&self) -> u64 {
        self.driver.ledger().head().number
    }

    /// Silences the given validator ids for subsequent heights.
    fn set_faults(&mut self, faulty: Vec<u32>) -> PyResult<()> {
        let set = self.driver.ledger().validators().clone();
        let mask = FaultMask::new(&set, faulty).map_err(value_err)?;
        self.driver.set_faults(mask);
        Ok(())
    }

    /// Deploys the registry; returns the event names of the receipt.
    fn owner_init(&mut self, owner: &str) -> PyResult<Vec<String>> {
        let owner = self.get(owner)?.clone();
        let out = self.driver.owner_init(&owner).map_err(runtime_err)?;
        Ok(out.events().iter().map(|e| e.name().to_owned()).collect())
    }

    fn map_device(&mut self, admin: &str, fog: &str, device: &str) -> PyResult<Vec<String>> {
        let (admin, fog, device) = (
            self.get(admin)?.clone(),
            self.get(fog)?.clone(),
            self.get(device)?.clone(),
        );
        let out = self
            .driver
            .map_device_session(&admin, &fog, &device)
            .map_err(runtime_err)?;
        Ok(out.events().iter().map(|e| e.name().to_owned()).collect())
    }

    fn add_user(
        &mut self,
        admin: &str,
        user: &str,
        device: &str,
        fog: &str,
    ) -> PyResult<Vec<String>> {
        let (admin, user) = (self.get(admin)?.clone(), self.get(user)?.clone());
        let (device, fog) = (self.address_of(device)?, self.address_of(fog)?);
        let out = self
            .driver
            .add_user_session(&admin, &user, device, fog)
            .map_err(runtime_err)?;
        Ok(out.events().iter().map(|e| e.name().to_owned()).collect())
    }

    /// Mints as `user` and returns the signed pass as a key=value record.
    fn mint(&mut self, user: &str, device: &str, fog: &str) -> PyResult<String> {
        let user = self.get(user)?.clone();
        let (device, fog) = (self.address_of(device)?, self.address_of(fog)?);
        let (pass, _) = self
            .driver
            .mint_auth_session(&user, device, fog)
            .map_err(runtime_err)?;
        Ok(pass.to_record())
    }

    fn advance_clock(&mut self, seconds: u64) {
        self.driver.advance_clock(seconds);
    }

    /// "accept" or "reject:<reason>" for a pass record at the current clock.
    #[pyo3(signature = (record, freshness_window = sessions::DEFAULT_FRESHNESS_WINDOW))]
    fn verify_pass(&self, record: &str, freshness_window: u64) -> PyResult<String> {
        let pass = NftPass::from_record(record).map_err(value_err)?;
        Ok(match self.driver.verify_pass(&pass, freshness_window) {
            PassVerdict::Accept => "accept".to_owned(),
            PassVerdict::Reject(r) => format!("reject:{r:?}"),
        })
    }

    /// Canonical JSON snapshot of the committed registry state.
    fn snapshot(&self) -> Option<String> {
        self.driver.ledger().registry().map(|s| s.to_snapshot())
    }

    /// One JSON line per block.
    fn export_chain(&self) -> String {
        self.driver.ledger().export_chain()
    }

    fn verify_chain(&self) -> PyResult<()> {
        self.driver.ledger().verify_chain().map_err(runtime_err)
    }
}

#[pyclass(name = "Trace", module = "dscot", frozen)]
struct PyTrace(RunTrace);

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        RunTrace::from_json(text).map(Self).map_err(value_err)
    }

    #[getter]
    fn determinism_hash(&self) -> String {
        self.0.determinism_hash.to_string()
    }

    #[getter]
    fn aborted(&self) -> bool {
        self.0.aborted.is_some()
    }

    #[getter]
    fn principals(&self) -> HashMap<String, String> {
        self.0
            .principals
            .iter()
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect()
    }

    /// (operation, status, gas) per step; gas is None for pending steps.
    fn steps(&self) -> Vec<(String, String, Option<u64>)> {
        self.0
            .steps
            .iter()
            .map(|s| {
                let status = serde_json::to_value(&s.status)
                    .ok()
                    .and_then(|v| v["status"].as_str().map(str::to_owned))
                    .unwrap_or_default();
                (s.operation.clone(), status, s.gas())
            })
            .collect()
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn __len__(&self) -> usize {
        self.0.steps.len()
    }
}

/// Parses and runs a scenario script. `schedule` overrides gas keys using
/// the `key = value` format.
#[pyfunction]
#[pyo3(signature = (script, schedule = None))]
fn run_scenario(script: &str, schedule: Option<&str>) -> PyResult<PyTrace> {
    let parsed = scenario::parse(script).map_err(value_err)?;
    let schedule = match schedule {
        Some(text) => text.parse::<GasSchedule>().map_err(value_err)?,
        None => GasSchedule::default(),
    };
    scenario::run(&parsed, schedule)
        .map(PyTrace)
        .map_err(runtime_err)
}

/// Gas comparison table in "text", "csv" or "json".
#[pyfunction]
#[pyo3(signature = (trace = None, format = "text"))]
fn gas_report(trace: Option<&PyTrace>, format: &str) -> PyResult<String> {
    let r = report::gas_report(trace.map(|t| &t.0));
    match format {
        "text" => Ok(r.to_text()),
        "csv" => Ok(r.to_csv()),
        "json" => Ok(r.to_json()),
        other => Err(PyValueError::new_err(format!("unknown format {other}"))),
    }
}

/// (name, verdict, detail) for each check.
#[pyfunction]
fn verify(trace: &PyTrace) -> Vec<(String, String, String)> {
    report::verify(&trace.0)
        .into_iter()
        .map(|c| {
            let verdict = match c.verdict {
                report::Verdict::Pass => "pass",
                report::Verdict::Fail => "fail",
                report::Verdict::Skip => "skip",
            };
            (c.name.to_string(), verdict.to_owned(), c.detail)
        })
        .collect()
}

#[pymodule]
fn dscot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(keccak256, m)?)?;
    m.add_function(wrap_pyfunction!(mint_token_id, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(gas_report, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_class::<PyKeyPair>()?;
    m.add_class::<PySession>()?;
    m.add_class::<PyTrace>()?;
    Ok(())
}
