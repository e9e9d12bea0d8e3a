pub mod crypto;
pub mod ledger;
pub mod registry;
pub mod report;
pub mod scenario;
pub mod sessions;
