//! Service front end for the asyncmld engine: HTTP session API, WebSocket
//! event stream and a terminal REPL, all driving the same turn code.

pub mod backends;
pub mod engine;
pub mod events;
pub mod repl;
pub mod server;

pub use engine::{Engine, SessionRequest};
pub use events::{EventType, StreamEvent};
pub use server::{router, AppState, ServerOptions};
