//! A partitioned intrusion-detection engine.
//!
//! Untrusted acquisition threads decode frames into a shared [`packet::PacketPool`]
//! and hand descriptors to analysis workers over lockless [`ring::Ring`]s.
//! Workers track flows, reassemble TCP streams and match a Snort-style rule
//! subset in two phases. [`boundary`] models the cost of running the analysis
//! side inside a memory-limited enclave and [`harness`] drives experiments.

pub mod acquire;
pub mod aho;
pub mod boundary;
pub mod clock;
pub mod detect;
pub mod flow;
pub mod harness;
pub mod packet;
pub mod ring;
pub mod rules;
