//! Deterministic discrete-event simulator for a robot/edge/cloud
//! deployment connected by a sliced network, used to compare task
//! placement policies for a pub/sub robot workload.

pub mod calibrate;
pub mod kpi;
pub mod placement;
pub mod sim;
pub mod topology;
pub mod workload;
