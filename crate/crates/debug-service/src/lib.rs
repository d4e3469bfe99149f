//! Step-by-step parsing over HTTP/JSON for grammar debugging. The wire
//! format is documented in `PROTOCOL.md` next to this crate's manifest.

pub mod api;
pub mod session;

pub use api::router;
pub use session::{Loaded, Registry, ServiceError, Session, Status};
