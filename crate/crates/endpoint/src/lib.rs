//! Remote access to a generative policy's `(state, noise) -> action` map.
//!
//! One JSON object per line over TCP. A request carries `id`, `state` and
//! `noise`; the response echoes `id` and carries either `action` or `error`.
//! The server is stateless and handles each connection on its own thread.
//! [`RemoteClient`] implements [`dsrl_latent::PolicyMap`], so steering code
//! can use a served policy without linking anything that knows its weights.

mod client;
mod protocol;
mod server;

pub use client::{ClientConfig, RemoteClient, DEFAULT_TIMEOUT};
pub use protocol::{read_line_capped, LineRead, Request, Response, MAX_LINE_BYTES};
pub use server::{Server, ServerError};
