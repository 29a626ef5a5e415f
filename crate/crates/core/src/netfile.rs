//! JSON network description files.
//!
//! ```json
//! {
//!   "fundamental_hz": 50.0,
//!   "nodes": [1, 2],
//!   "branches": [{"type": "rl", "from": 1, "to": 2, "r_ohm": 0.04, "l_h": 0.0015}],
//!   "shunts": [
//!     {"type": "grid", "node": 1, "params": {"r_ohm": 0.2, "l_h": 0.0003}},
//!     {"type": "inverter", "node": 2, "table_path": "inv2.csv"}
//!   ]
//! }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixture;
use crate::models::{AdParams, AdmittanceTable, InverterParams, PiCableParams, RlBranchParams};
use crate::network::{
    validate, Branch, BranchModel, GridParams, InverterModel, NetworkGraph, NodeId, Shunt,
    ShuntDevice,
};

fn default_fundamental() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default = "default_fundamental")]
    pub fundamental_hz: f64,
    pub nodes: Vec<NodeId>,
    #[serde(default)]
    pub branches: Vec<BranchEntry>,
    #[serde(default)]
    pub shunts: Vec<ShuntEntry>,
    /// Damper parameters used by `plan`, `ad-curve` and `verify`; not
    /// installed in the network itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ad_base: Option<AdParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BranchEntry {
    Rl {
        from: NodeId,
        to: NodeId,
        r_ohm: f64,
        l_h: f64,
    },
    PiCable {
        from: NodeId,
        to: NodeId,
        r_ohm: f64,
        l_h: f64,
        c_f: f64,
    },
    Transformer {
        from: NodeId,
        to: NodeId,
        r_ohm: f64,
        l_h: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShuntEntry {
    Inverter {
        node: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<InverterParams>,
        /// CSV admittance table, relative to the network file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table_path: Option<String>,
    },
    Ad {
        node: NodeId,
        params: AdParams,
    },
    Grid {
        node: NodeId,
        params: GridParams,
    },
    Capacitor {
        node: NodeId,
        c_f: f64,
    },
}

/// A loaded and validated network with its side information.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDocument {
    pub graph: NetworkGraph,
    pub ad_base: Option<AdParams>,
    pub assumptions: Vec<String>,
}

impl NetworkFile {
    pub fn from_graph(g: &NetworkGraph, ad_base: Option<AdParams>, assumptions: Vec<String>) -> Self {
        let branches = g
            .branches
            .iter()
            .map(|b| match &b.model {
                BranchModel::Rl(p) => BranchEntry::Rl {
                    from: b.from,
                    to: b.to,
                    r_ohm: p.r_ohm,
                    l_h: p.l_h,
                },
                BranchModel::Transformer(p) => BranchEntry::Transformer {
                    from: b.from,
                    to: b.to,
                    r_ohm: p.r_ohm,
                    l_h: p.l_h,
                },
                BranchModel::PiCable(p) => BranchEntry::PiCable {
                    from: b.from,
                    to: b.to,
                    r_ohm: p.r_ohm,
                    l_h: p.l_h,
                    c_f: p.c_f,
                },
            })
            .collect();
        let shunts = g
            .shunts
            .iter()
            .map(|s| match &s.device {
                ShuntDevice::Inverter(InverterModel::Analytic(p)) => ShuntEntry::Inverter {
                    node: s.node,
                    params: Some(*p),
                    table_path: None,
                },
                ShuntDevice::Inverter(InverterModel::Table { source, .. }) => ShuntEntry::Inverter {
                    node: s.node,
                    params: None,
                    table_path: source.clone(),
                },
                ShuntDevice::Ad(p) => ShuntEntry::Ad {
                    node: s.node,
                    params: *p,
                },
                ShuntDevice::Grid(p) => ShuntEntry::Grid {
                    node: s.node,
                    params: *p,
                },
                ShuntDevice::Capacitor { c_f } => ShuntEntry::Capacitor {
                    node: s.node,
                    c_f: *c_f,
                },
            })
            .collect();
        Self {
            fundamental_hz: g.fundamental_hz,
            nodes: g.nodes.clone(),
            branches,
            shunts,
            ad_base,
            assumptions,
        }
    }

    /// Builds the graph; table paths resolve against `base_dir`.
    pub fn to_document(&self, base_dir: &Path) -> Result<NetworkDocument> {
        let branches = self
            .branches
            .iter()
            .map(|b| match *b {
                BranchEntry::Rl { from, to, r_ohm, l_h } => Branch {
                    from,
                    to,
                    model: BranchModel::Rl(RlBranchParams { r_ohm, l_h }),
                },
                BranchEntry::Transformer { from, to, r_ohm, l_h } => Branch {
                    from,
                    to,
                    model: BranchModel::Transformer(RlBranchParams { r_ohm, l_h }),
                },
                BranchEntry::PiCable {
                    from,
                    to,
                    r_ohm,
                    l_h,
                    c_f,
                } => Branch {
                    from,
                    to,
                    model: BranchModel::PiCable(PiCableParams { r_ohm, l_h, c_f }),
                },
            })
            .collect();
        let mut shunts = Vec::with_capacity(self.shunts.len());
        for (i, s) in self.shunts.iter().enumerate() {
            let (node, device) = match s {
                ShuntEntry::Inverter {
                    node,
                    params,
                    table_path,
                } => {
                    let model = match (params, table_path) {
                        (Some(p), None) => InverterModel::Analytic(*p),
                        (None, Some(path)) => {
                            let full: PathBuf = base_dir.join(path);
                            let table = AdmittanceTable::from_csv_path(&full).map_err(|e| {
                                Error::Table(format!("shunt {i}: {}: {e}", full.display()))
                            })?;
                            InverterModel::Table {
                                table: Arc::new(table),
                                source: Some(path.clone()),
                            }
                        }
                        _ => {
                            return Err(Error::InvalidParameter(format!(
                                "shunt {i} (inverter at node {node}) needs exactly one of 'params' or 'table_path'"
                            )))
                        }
                    };
                    (*node, ShuntDevice::Inverter(model))
                }
                ShuntEntry::Ad { node, params } => (*node, ShuntDevice::Ad(*params)),
                ShuntEntry::Grid { node, params } => (*node, ShuntDevice::Grid(*params)),
                ShuntEntry::Capacitor { node, c_f } => (*node, ShuntDevice::Capacitor { c_f: *c_f }),
            };
            shunts.push(Shunt { node, device });
        }
        Ok(NetworkDocument {
            graph: NetworkGraph {
                nodes: self.nodes.clone(),
                branches,
                shunts,
                fundamental_hz: self.fundamental_hz,
            },
            ad_base: self.ad_base,
            assumptions: self.assumptions.clone(),
        })
    }
}

/// Parses network JSON; `label` names the source in error messages.
pub fn parse_network(text: &str, label: &str, base_dir: &Path) -> Result<NetworkDocument> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: label.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let doc = file.to_document(base_dir)?;
    let diags = validate(&doc.graph);
    if !diags.is_empty() {
        return Err(Error::Validation(diags));
    }
    Ok(doc)
}

pub fn load_network(path: &Path) -> Result<NetworkDocument> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_network(&text, &path.display().to_string(), base)
}

/// The reference network as a file document, with damper data and the
/// topology assumptions.
pub fn fixture_file() -> NetworkFile {
    NetworkFile::from_graph(
        &fixture::reference_network(),
        Some(AdParams::case_study()),
        fixture::ASSUMPTIONS.iter().map(|s| s.to_string()).collect(),
    )
}

pub fn emit_fixture(path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&fixture_file())?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_branch_type_is_named() {
        let text = r#"{"nodes": [1, 2],
            "branches": [{"type": "xyz", "from": 1, "to": 2}]}"#;
        match parse_network(text, "net.json", Path::new(".")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("xyz"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_node_list_fails_validation() {
        match parse_network(r#"{"nodes": []}"#, "x", Path::new(".")) {
            Err(Error::Validation(d)) => assert!(d.iter().any(|m| m.contains("empty"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inverter_needs_one_source() {
        let text = r#"{"nodes": [1], "shunts": [{"type": "inverter", "node": 1}]}"#;
        assert!(matches!(
            parse_network(text, "x", Path::new(".")),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.json");
        emit_fixture(&path).unwrap();
        let doc = load_network(&path).unwrap();
        assert_eq!(doc.graph, fixture::reference_network());
        assert_eq!(doc.ad_base, Some(AdParams::case_study()));
        assert_eq!(doc.graph.nodes.len(), 4);
        let inverters = doc
            .graph
            .shunts
            .iter()
            .filter(|s| matches!(s.device, ShuntDevice::Inverter(_)))
            .count();
        assert_eq!(inverters, 3);
        assert!(doc.graph.shunts.iter().any(|s| matches!(s.device, ShuntDevice::Grid(_))));
    }

    #[test]
    fn fixture_carries_table_values() {
        let v: serde_json::Value = serde_json::to_value(fixture_file()).unwrap();
        let inv = v["shunts"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["type"] == "inverter")
            .unwrap();
        assert_eq!(inv["params"]["k_ppll"], 6.0);
        assert_eq!(inv["params"]["k_ipll"], 100.0);
        let tr = v["branches"]
            .as_array()
            .unwrap()
            .iter()
            .find(|b| b["type"] == "transformer")
            .unwrap();
        assert_eq!(tr["l_h"], 0.0764e-3);
        assert_eq!(tr["r_ohm"], 0.0032);
    }

    #[test]
    fn table_inverter_resolves_relative_path() {
        let dir = tempfile::tempdir().unwrap();
        let grid = crate::dq::FrequencyGrid::linear(10.0, 100.0, 10.0, 0.0).unwrap();
        let t = AdmittanceTable::tabulate(&grid, |_| Ok(crate::dq::DqBlock::identity())).unwrap();
        t.write_csv(std::fs::File::create(dir.path().join("inv.csv")).unwrap())
            .unwrap();
        let text = r#"{"nodes": [1], "fundamental_hz": 0.0,
            "shunts": [{"type": "inverter", "node": 1, "table_path": "inv.csv"}]}"#;
        std::fs::write(dir.path().join("n.json"), text).unwrap();
        let doc = load_network(&dir.path().join("n.json")).unwrap();
        let a = crate::network::assemble(&doc.graph, 55.0).unwrap();
        assert_eq!(a.block(0, 0), crate::dq::DqBlock::identity());
        let back = NetworkFile::from_graph(&doc.graph, None, vec![]);
        assert!(matches!(&back.shunts[0], ShuntEntry::Inverter { table_path: Some(p), .. } if p == "inv.csv"));
    }
}
