pub mod anoncreds;
pub mod crypto;
pub mod encoding;
pub mod ledger;
