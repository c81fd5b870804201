//! Packet-level discrete-event simulator for real-time video sent to a
//! multimodal LLM that samples frames at a low, fixed rate.
//!
//! The pipeline is: correlation-aware QP allocation ([`allocator`]),
//! loss-adaptive capture rate ([`controller`]), packetization, NACK
//! recovery and MLLM-side sampling ([`transport`]), an emulated bottleneck
//! link ([`netem`]) and per-run statistics ([`metrics`]). [`sim`] ties them
//! together for one seed; [`runner`] fans out over seeds and sweeps.

pub mod allocator;
pub mod controller;
pub mod error;
pub mod mapfile;
pub mod metrics;
pub mod netem;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod transport;

pub use allocator::{
    build_frame_budget, build_qp_map, cosine_similarity, patch_bits, qp_from_correlation, CorrelationMap,
    FeatureVector, FrameBudget, QpMap, RateModelParams, SemanticAllocator,
};
pub use controller::{
    frame_success_prob, group_success_prob, select_frame_rate, ControllerConfig, RateController, RateDecision,
};
pub use error::{Error, Result};
pub use metrics::{aggregate, write_csv, CsvRow, RunReport};
pub use netem::{LinkConfig, LossModel};
pub use runner::{run_scenario, sweep, RunOptions};
pub use scenario::{Scenario, SweepAxis};
pub use sim::RunOutput;
pub use transport::{sample_for_mllm, SampleOutcome, SamplerConfig, SubstituteWindow};
