//! Frequency-domain stability analysis of multi-inverter networks in the dq
//! frame and placement and sizing of active damping.

pub mod dq;
pub mod eig;
pub mod error;
pub mod fixture;
pub mod models;
pub mod netfile;
pub mod network;
pub mod planner;
pub mod report;
pub mod stability;

pub use dq::{DqBlock, FrequencyGrid, TransferElement, C64, OMEGA0_50HZ};
pub use eig::{eig_lr, Spectrum};
pub use error::{Error, Result};
pub use models::{
    ad_admittance, inverter_admittance, AdMode, AdModel, AdParams, AdmittanceTable,
    InverterParams, PiCableParams, RlBranchParams,
};
pub use network::{
    assemble, validate, Branch, BranchModel, CMatrix, GridParams, InverterModel, NetworkGraph,
    NodalAdmittance, NodeId, PreparedNetwork, Shunt, ShuntDevice,
};
pub use planner::{
    calibrate_ad, compensation_coefficients, plan, rank_locations, verify_with_ad,
    CompensationPlan, PlanOptions,
};
pub use stability::{analyze, CrossoverEvent, CrossoverOptions, MatrixSource, StabilityReport, Verdict};
