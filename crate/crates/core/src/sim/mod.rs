//! Closed-loop co-simulation of the physical asset and its twin.

mod asset;
mod mission;
mod schedule;
mod twin;
mod wire;

pub use asset::{asset_step, AssetEndpoint};
pub use mission::{
    run_mission, MissionFailure, MissionHeader, MissionLog, MissionOptions, MissionRecord, SmoothedSummary,
    Transport,
};
pub use schedule::{Breakpoint, GroundTruthSchedule, FIRST_OPERATIONAL_STEP};
pub use twin::{draw_e_ensemble, twin_step, TwinState, TwinStepOutput};
pub use wire::{
    channel_pair, socket_pair, transport_roundtrip, ChannelConnection, Connection, StreamConnection, WireMessage,
};
