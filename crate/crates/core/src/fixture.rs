//! The three-inverter reference network.
//!
//! ```text
//! grid --cable-- N1 --transformer-- N2 --line 1-- N3 --line 2-- N4
//!                                   inv 1         inv 2         inv 3
//! ```

use crate::models::{InverterParams, RlBranchParams};
use crate::network::{
    Branch, BranchModel, GridParams, InverterModel, NetworkGraph, NodeId, Shunt, ShuntDevice,
};

pub const CABLE: RlBranchParams = RlBranchParams {
    r_ohm: 0.2,
    l_h: 0.3e-3,
};
/// Cable charging capacitance. Lumped at the grid terminal, where the ideal
/// source shorts it out of the small-signal model.
pub const CABLE_C_F: f64 = 12e-6;
pub const TRANSFORMER: RlBranchParams = RlBranchParams {
    r_ohm: 0.0032,
    l_h: 0.0764e-3,
};
pub const LINE_1: RlBranchParams = RlBranchParams {
    r_ohm: 0.04,
    l_h: 1.5e-3,
};
pub const LINE_2: RlBranchParams = RlBranchParams {
    r_ohm: 0.06,
    l_h: 2.0e-3,
};

pub const INVERTER_NODES: [NodeId; 3] = [2, 3, 4];

pub const ASSUMPTIONS: &[&str] = &[
    "cable charging capacitance (12 uF) lumped at the grid terminal and shorted by the ideal source",
    "transformer modelled as series R-L referred to the low-voltage side, no magnetising branch",
    "inverter operating point v_d0 = 311 V, i_d = 50 A, i_q = 0 A",
    "fundamental 50 Hz",
];

pub fn reference_network() -> NetworkGraph {
    let inv = ShuntDevice::Inverter(InverterModel::Analytic(InverterParams::case_study()));
    let mut shunts = vec![Shunt {
        node: 1,
        device: ShuntDevice::Grid(GridParams {
            r_ohm: CABLE.r_ohm,
            l_h: CABLE.l_h,
            c_f: 0.0,
        }),
    }];
    shunts.extend(INVERTER_NODES.iter().map(|&node| Shunt {
        node,
        device: inv.clone(),
    }));
    NetworkGraph {
        nodes: vec![1, 2, 3, 4],
        branches: vec![
            Branch {
                from: 1,
                to: 2,
                model: BranchModel::Transformer(TRANSFORMER),
            },
            Branch {
                from: 2,
                to: 3,
                model: BranchModel::Rl(LINE_1),
            },
            Branch {
                from: 3,
                to: 4,
                model: BranchModel::Rl(LINE_2),
            },
        ],
        shunts,
        fundamental_hz: 50.0,
    }
}
