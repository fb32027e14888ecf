pub mod admin;
pub mod agent;
pub mod authz;
pub mod client;
pub mod error;
pub mod events;
pub mod ledger_http;
pub mod messages;
pub mod puzzle;
pub mod records;
pub mod server;
pub mod transport;
pub mod wallet;

pub use agent::{Agent, AgentConfig};
pub use error::AgentError;
