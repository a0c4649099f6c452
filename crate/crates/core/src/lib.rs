//! O-RAN ISAC sensing stack: fronthaul sensing metadata, a simulated radio,
//! the DU-resident sensing dApp, the E2SM-SENS service model, the xApp
//! control plane, transport and the experiment harness.

pub mod clock;
pub mod control;
pub mod dapp;
pub mod e2sm;
pub mod harness;
pub mod ofh;
pub mod radio;
pub mod stats;
pub mod transport;
