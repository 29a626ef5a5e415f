//! Topology and per-frequency assembly of the 2n x 2n nodal admittance matrix.
//!
//! Node `i` (0-based position in the node list) occupies rows and columns
//! `2i` (d-axis) and `2i + 1` (q-axis).

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dq::{DqBlock, C64, OMEGA0_50HZ};
use crate::error::{Error, Result};
use crate::models::{
    capacitor_dq, inverter_admittance, pi_cable_stamps, rl_series_dq, tabulated_admittance,
    AdModel, AdParams, AdmittanceTable, InverterParams, PiCableParams, RlBranchParams,
};

pub type NodeId = u32;
pub type CMatrix = DMatrix<C64>;

#[derive(Debug, Clone, PartialEq)]
pub enum BranchModel {
    Rl(RlBranchParams),
    /// Series RL referred to the low-voltage side; no magnetising branch.
    Transformer(RlBranchParams),
    PiCable(PiCableParams),
}

impl BranchModel {
    pub fn kind(&self) -> &'static str {
        match self {
            BranchModel::Rl(_) => "rl",
            BranchModel::Transformer(_) => "transformer",
            BranchModel::PiCable(_) => "pi_cable",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BranchModel::Rl(p) | BranchModel::Transformer(p) => p.validate(),
            BranchModel::PiCable(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: NodeId,
    pub to: NodeId,
    pub model: BranchModel,
}

/// Series impedance between a node and an ideal source. The source is a
/// small-signal short, so the element reduces to a shunt admittance
/// `Z^-1 + Y_C(c_f)` at the node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub r_ohm: f64,
    pub l_h: f64,
    /// Shunt capacitance on the node side of the grid impedance.
    #[serde(default)]
    pub c_f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InverterModel {
    Analytic(InverterParams),
    Table {
        table: Arc<AdmittanceTable>,
        /// Where the table was read from, kept for round-tripping files.
        source: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShuntDevice {
    Inverter(InverterModel),
    Ad(AdParams),
    Grid(GridParams),
    Capacitor { c_f: f64 },
}

impl ShuntDevice {
    pub fn kind(&self) -> &'static str {
        match self {
            ShuntDevice::Inverter(_) => "inverter",
            ShuntDevice::Ad(_) => "ad",
            ShuntDevice::Grid(_) => "grid",
            ShuntDevice::Capacitor { .. } => "capacitor",
        }
    }

    /// Devices that belong to the inverter part of the matrix rather than the
    /// passive network.
    pub fn is_active(&self) -> bool {
        matches!(self, ShuntDevice::Inverter(_) | ShuntDevice::Ad(_))
    }

    fn validate(&self) -> Result<()> {
        match self {
            ShuntDevice::Inverter(InverterModel::Analytic(p)) => p.validate(),
            ShuntDevice::Inverter(InverterModel::Table { .. }) => Ok(()),
            ShuntDevice::Ad(p) => p.validate(),
            ShuntDevice::Grid(p) => {
                RlBranchParams::new(p.r_ohm, p.l_h)?;
                if !(p.c_f >= 0.0 && p.c_f.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "grid shunt capacitance must be >= 0, got {}",
                        p.c_f
                    )));
                }
                Ok(())
            }
            ShuntDevice::Capacitor { c_f } => {
                if *c_f > 0.0 && c_f.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("capacitance must be > 0, got {c_f}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shunt {
    pub node: NodeId,
    pub device: ShuntDevice,
}

/// Analyzable description of a network: nodes in matrix order, series
/// branches and shunt devices.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub nodes: Vec<NodeId>,
    pub branches: Vec<Branch>,
    pub shunts: Vec<Shunt>,
    pub fundamental_hz: f64,
}

impl Default for NetworkGraph {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            branches: Vec::new(),
            shunts: Vec::new(),
            fundamental_hz: 50.0,
        }
    }
}

impl NetworkGraph {
    pub fn omega0(&self) -> f64 {
        if self.fundamental_hz == 50.0 {
            OMEGA0_50HZ
        } else {
            2.0 * std::f64::consts::PI * self.fundamental_hz
        }
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == id)
    }

    pub fn dim(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn with_shunt(mut self, node: NodeId, device: ShuntDevice) -> Self {
        self.shunts.push(Shunt { node, device });
        self
    }
}

/// Checks every structural invariant and returns human-readable diagnostics;
/// an empty list means the graph is analyzable.
pub fn validate(g: &NetworkGraph) -> Vec<String> {
    let mut diags = Vec::new();
    if g.nodes.is_empty() {
        diags.push("node list is empty".to_string());
    }
    if !(g.fundamental_hz >= 0.0 && g.fundamental_hz.is_finite()) {
        diags.push(format!("fundamental_hz must be >= 0, got {}", g.fundamental_hz));
    }
    let mut seen = HashSet::new();
    for id in &g.nodes {
        if !seen.insert(*id) {
            diags.push(format!("node {id} is listed more than once"));
        }
    }
    for (bi, b) in g.branches.iter().enumerate() {
        for end in [b.from, b.to] {
            if !seen.contains(&end) {
                diags.push(format!(
                    "branch {bi} ({} {} -> {}) references unknown node {end}",
                    b.model.kind(),
                    b.from,
                    b.to
                ));
            }
        }
        if b.from == b.to {
            diags.push(format!("branch {bi} connects node {} to itself", b.from));
        }
        if let Err(e) = b.model.validate() {
            diags.push(format!("branch {bi}: {e}"));
        }
    }
    let mut ad_count: HashMap<NodeId, usize> = HashMap::new();
    for (si, s) in g.shunts.iter().enumerate() {
        if !seen.contains(&s.node) {
            diags.push(format!(
                "shunt {si} ({}) references unknown node {}",
                s.device.kind(),
                s.node
            ));
        }
        if matches!(s.device, ShuntDevice::Ad(_)) {
            *ad_count.entry(s.node).or_default() += 1;
        }
        if let Err(e) = s.device.validate() {
            diags.push(format!("shunt {si} ({}): {e}", s.device.kind()));
        }
    }
    let mut multi: Vec<_> = ad_count.into_iter().filter(|(_, n)| *n > 1).collect();
    multi.sort();
    for (node, n) in multi {
        diags.push(format!("node {node} has {n} active dampers (at most one allowed)"));
    }

    // connectivity over well-formed branches
    if g.nodes.len() > 1 {
        let index: HashMap<NodeId, usize> =
            g.nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut adj = vec![Vec::new(); g.nodes.len()];
        for b in &g.branches {
            if let (Some(&a), Some(&c)) = (index.get(&b.from), index.get(&b.to)) {
                adj[a].push(c);
                adj[c].push(a);
            }
        }
        let mut reached = vec![false; g.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !reached[j] {
                    reached[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let isolated: Vec<String> = g
            .nodes
            .iter()
            .zip(&reached)
            .filter(|(_, r)| !**r)
            .map(|(n, _)| n.to_string())
            .collect();
        if !isolated.is_empty() {
            diags.push(format!(
                "network is not connected: node(s) {} unreachable from node {}",
                isolated.join(", "),
                g.nodes[0]
            ));
        }
    }
    diags
}

/// Nodal admittance matrix at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalAdmittance {
    pub f_hz: f64,
    pub nodes: Arc<[NodeId]>,
    pub matrix: CMatrix,
}

impl NodalAdmittance {
    pub fn zeros(f_hz: f64, nodes: Arc<[NodeId]>) -> Self {
        let n = 2 * nodes.len();
        Self {
            f_hz,
            nodes,
            matrix: CMatrix::zeros(n, n),
        }
    }

    pub fn block(&self, i: usize, j: usize) -> DqBlock {
        let m = &self.matrix;
        DqBlock::new(
            m[(2 * i, 2 * j)],
            m[(2 * i, 2 * j + 1)],
            m[(2 * i + 1, 2 * j)],
            m[(2 * i + 1, 2 * j + 1)],
        )
    }

    pub fn add_block(&mut self, i: usize, j: usize, b: &DqBlock) {
        add_block(&mut self.matrix, i, j, b);
    }

    /// Copy with `y` added to the diagonal block of `node`.
    pub fn with_shunt(&self, node: NodeId, y: &DqBlock) -> Result<NodalAdmittance> {
        let i = self
            .nodes
            .iter()
            .position(|&n| n == node)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown node {node}")))?;
        let mut out = self.clone();
        out.add_block(i, i, y);
        Ok(out)
    }
}

pub(crate) fn add_block(m: &mut CMatrix, i: usize, j: usize, b: &DqBlock) {
    m[(2 * i, 2 * j)] += b.dd;
    m[(2 * i, 2 * j + 1)] += b.dq;
    m[(2 * i + 1, 2 * j)] += b.qd;
    m[(2 * i + 1, 2 * j + 1)] += b.qq;
}

pub fn with_shunt(a: &NodalAdmittance, node: NodeId, y: &DqBlock) -> Result<NodalAdmittance> {
    a.with_shunt(node, y)
}

#[derive(Debug, Clone)]
enum PreparedDevice {
    Inverter(InverterParams),
    Table(Arc<AdmittanceTable>),
    Ad(Box<AdModel>),
    Grid(GridParams),
    Capacitor(f64),
}

/// A validated graph with node indices resolved and damper transfer
/// elements precomputed; the hot path for sweeps.
#[derive(Debug, Clone)]
pub struct PreparedNetwork {
    graph: NetworkGraph,
    nodes: Arc<[NodeId]>,
    omega0: f64,
    branches: Vec<(usize, usize, BranchModel)>,
    shunts: Vec<(usize, PreparedDevice, bool)>,
}

impl PreparedNetwork {
    pub fn new(g: &NetworkGraph) -> Result<Self> {
        let diags = validate(g);
        if !diags.is_empty() {
            return Err(Error::Validation(diags));
        }
        let omega0 = g.omega0();
        let idx = |id: NodeId| g.node_index(id).expect("validated");
        let branches = g
            .branches
            .iter()
            .map(|b| (idx(b.from), idx(b.to), b.model.clone()))
            .collect();
        let shunts = g
            .shunts
            .iter()
            .map(|s| {
                let dev = match &s.device {
                    ShuntDevice::Inverter(InverterModel::Analytic(p)) => PreparedDevice::Inverter(*p),
                    ShuntDevice::Inverter(InverterModel::Table { table, .. }) => {
                        PreparedDevice::Table(table.clone())
                    }
                    ShuntDevice::Ad(p) => PreparedDevice::Ad(Box::new(AdModel::new(p, omega0)?)),
                    ShuntDevice::Grid(p) => PreparedDevice::Grid(*p),
                    ShuntDevice::Capacitor { c_f } => PreparedDevice::Capacitor(*c_f),
                };
                Ok((idx(s.node), dev, s.device.is_active()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            graph: g.clone(),
            nodes: g.nodes.clone().into(),
            omega0,
            branches,
            shunts,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn nodes(&self) -> &Arc<[NodeId]> {
        &self.nodes
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn dim(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == id)
    }

    fn shunt_block(&self, dev: &PreparedDevice, f_hz: f64) -> Result<DqBlock> {
        let w0 = self.omega0;
        match dev {
            PreparedDevice::Inverter(p) => inverter_admittance(p, f_hz, w0),
            PreparedDevice::Table(t) => tabulated_admittance(t, f_hz),
            PreparedDevice::Ad(m) => m.block(f_hz),
            PreparedDevice::Grid(p) => {
                let z = rl_series_dq(
                    &RlBranchParams {
                        r_ohm: p.r_ohm,
                        l_h: p.l_h,
                    },
                    f_hz,
                    w0,
                );
                Ok(z.inverse()? + capacitor_dq(p.c_f, f_hz, w0))
            }
            PreparedDevice::Capacitor(c_f) => Ok(capacitor_dq(*c_f, f_hz, w0)),
        }
    }

    /// Passive network part and device part, `Y_nod = Y_net + Y_inv`.
    pub fn assemble_parts(&self, f_hz: f64) -> Result<(NodalAdmittance, NodalAdmittance)> {
        if !(f_hz >= 0.0 && f_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!("frequency must be >= 0, got {f_hz}")));
        }
        let w0 = self.omega0;
        let mut net = NodalAdmittance::zeros(f_hz, self.nodes.clone());
        let mut inv = NodalAdmittance::zeros(f_hz, self.nodes.clone());
        for (bi, (i, j, model)) in self.branches.iter().enumerate() {
            let (z, shunt) = match model {
                BranchModel::Rl(p) | BranchModel::Transformer(p) => (rl_series_dq(p, f_hz, w0), None),
                BranchModel::PiCable(p) => {
                    let (z, y) = pi_cable_stamps(p, f_hz, w0);
                    (z, Some(y))
                }
            };
            let y = z
                .inverse()
                .map_err(|_| Error::SingularBranch { branch: bi, f_hz })?;
            net.add_block(*i, *i, &y);
            net.add_block(*j, *j, &y);
            net.add_block(*i, *j, &-y);
            net.add_block(*j, *i, &-y);
            if let Some(ys) = shunt {
                net.add_block(*i, *i, &ys);
                net.add_block(*j, *j, &ys);
            }
        }
        for (i, dev, active) in &self.shunts {
            let y = self.shunt_block(dev, f_hz).map_err(|e| e.at(f_hz))?;
            let target = if *active { &mut inv } else { &mut net };
            target.add_block(*i, *i, &y);
        }
        Ok((net, inv))
    }

    pub fn assemble(&self, f_hz: f64) -> Result<NodalAdmittance> {
        let (mut net, inv) = self.assemble_parts(f_hz)?;
        net.matrix += inv.matrix;
        Ok(net)
    }
}

/// Validates `g` and assembles its nodal admittance matrix at `f_hz`.
pub fn assemble(g: &NetworkGraph, f_hz: f64) -> Result<NodalAdmittance> {
    PreparedNetwork::new(g)?.assemble(f_hz)
}
