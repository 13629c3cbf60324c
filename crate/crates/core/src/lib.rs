//! Authentication and time-based billing for street-side EV charging.
//!
//! A vehicle, a charging terminal and a central server run a three-party
//! challenge-response handshake built from AES-256 single-block encryption,
//! XOR nonce masking and HMAC-SHA-256. The terminal meters charge time and
//! the server invoices it. [`sim`] runs the agents over a simulated insecure
//! channel with a scriptable Dolev-Yao adversary, and [`attacks`] packages
//! the standard attack classes as runnable scenarios with verdicts.

pub mod attacks;
pub mod crypto;
pub mod protocol;
pub mod registry;
pub mod sim;

pub use crypto::{Block128, Key256, MacTag, Nonce128, PrngState};
pub use protocol::{GroupKey, SessionPhase, Timestamp, VehicleCredentials};
pub use registry::{Invoice, Registry, RegistryError, Server};
