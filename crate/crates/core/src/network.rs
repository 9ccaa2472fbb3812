//! Network data model, JSON ingestion and validation.
//!
//! Units are fixed across the crate: MW for power, MWh for energy,
//! currency/MWh for costs and kgCO2/MWh for emission rates.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{kind} `{id}`: {message}")]
    Semantic {
        kind: &'static str,
        id: String,
        message: String,
    },
}

impl NetworkError {
    fn semantic(kind: &'static str, id: impl Into<String>, message: impl Into<String>) -> Self {
        NetworkError::Semantic {
            kind,
            id: id.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    pub susceptance: f64,
    pub f_max: f64,
}

/// Technology tag, used only to group ledger entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Coal,
    Gas,
    Wind,
    Solar,
    Nuclear,
    Other,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Coal => "coal",
            GeneratorKind::Gas => "gas",
            GeneratorKind::Wind => "wind",
            GeneratorKind::Solar => "solar",
            GeneratorKind::Nuclear => "nuclear",
            GeneratorKind::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub node: String,
    pub cost: f64,
    pub emission_rate: f64,
    #[serde(default)]
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<GeneratorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageUnit {
    pub id: String,
    pub node: String,
    pub e_max: f64,
    pub efficiency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_cap: Option<f64>,
}

/// The on-disk document. Field names are the exact JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    nodes: Vec<Node>,
    #[serde(default)]
    lines: Vec<Line>,
    #[serde(default)]
    generators: Vec<Generator>,
    #[serde(default)]
    storages: Vec<StorageUnit>,
    reference_node: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Accept negative nodal demand (behind-the-meter injection).
    pub allow_negative_demand: bool,
}

/// A validated, immutable network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    doc: NetworkDoc,
    node_index: HashMap<String, usize>,
    line_ends: Vec<(usize, usize)>,
    gen_node: Vec<usize>,
    storage_node: Vec<usize>,
    reference: usize,
}

impl Network {
    pub fn new(
        nodes: Vec<Node>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        storages: Vec<StorageUnit>,
        reference_node: impl Into<String>,
    ) -> Result<Self, NetworkError> {
        Self::with_options(
            NetworkDoc {
                nodes,
                lines,
                generators,
                storages,
                reference_node: reference_node.into(),
            },
            LoadOptions::default(),
        )
    }

    fn with_options(doc: NetworkDoc, opts: LoadOptions) -> Result<Self, NetworkError> {
        let mut node_index = HashMap::new();
        if doc.nodes.is_empty() {
            return Err(NetworkError::Schema("network has no nodes".into()));
        }
        for (i, n) in doc.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(NetworkError::semantic("node", &n.id, "duplicate node id"));
            }
            if !n.demand.is_finite() {
                return Err(NetworkError::semantic("node", &n.id, "demand is not finite"));
            }
            if n.demand < 0.0 && !opts.allow_negative_demand {
                return Err(NetworkError::semantic("node", &n.id, "negative demand"));
            }
        }
        let lookup = |kind: &'static str, id: &str, node: &str| {
            node_index
                .get(node)
                .copied()
                .ok_or_else(|| NetworkError::semantic(kind, id, format!("refers to unknown node `{node}`")))
        };

        let mut seen = HashMap::new();
        let mut line_ends = Vec::with_capacity(doc.lines.len());
        for l in &doc.lines {
            if seen.insert(("line", l.id.clone()), ()).is_some() {
                return Err(NetworkError::semantic("line", &l.id, "duplicate line id"));
            }
            let a = lookup("line", &l.id, &l.from)?;
            let b = lookup("line", &l.id, &l.to)?;
            if a == b {
                return Err(NetworkError::semantic("line", &l.id, "from and to are the same node"));
            }
            if !(l.susceptance.is_finite() && l.susceptance > 0.0) {
                return Err(NetworkError::semantic("line", &l.id, "susceptance must be positive"));
            }
            if !(l.f_max.is_finite() && l.f_max > 0.0) {
                return Err(NetworkError::semantic("line", &l.id, "f_max must be positive"));
            }
            line_ends.push((a, b));
        }
        let mut gen_node = Vec::with_capacity(doc.generators.len());
        for g in &doc.generators {
            if seen.insert(("generator", g.id.clone()), ()).is_some() {
                return Err(NetworkError::semantic("generator", &g.id, "duplicate generator id"));
            }
            gen_node.push(lookup("generator", &g.id, &g.node)?);
            if !g.cost.is_finite() {
                return Err(NetworkError::semantic("generator", &g.id, "cost is not finite"));
            }
            if !(g.emission_rate.is_finite() && g.emission_rate >= 0.0) {
                return Err(NetworkError::semantic(
                    "generator",
                    &g.id,
                    "emission_rate must be finite and nonnegative",
                ));
            }
            if !(g.p_min.is_finite() && g.p_max.is_finite()) {
                return Err(NetworkError::semantic("generator", &g.id, "p_min/p_max must be finite"));
            }
            if g.p_min < 0.0 {
                return Err(NetworkError::semantic("generator", &g.id, "p_min is negative"));
            }
            if g.p_min > g.p_max {
                return Err(NetworkError::semantic("generator", &g.id, "p_min exceeds p_max"));
            }
        }
        let mut storage_node = Vec::with_capacity(doc.storages.len());
        for s in &doc.storages {
            if seen.insert(("storage", s.id.clone()), ()).is_some() {
                return Err(NetworkError::semantic("storage", &s.id, "duplicate storage id"));
            }
            storage_node.push(lookup("storage", &s.id, &s.node)?);
            if !(s.e_max.is_finite() && s.e_max > 0.0) {
                return Err(NetworkError::semantic("storage", &s.id, "e_max must be positive"));
            }
            if !(s.efficiency > 0.0 && s.efficiency <= 1.0) {
                return Err(NetworkError::semantic(
                    "storage",
                    &s.id,
                    "efficiency must lie in (0, 1]",
                ));
            }
            if let Some(cap) = s.power_cap {
                if !(cap.is_finite() && cap >= 0.0) {
                    return Err(NetworkError::semantic(
                        "storage",
                        &s.id,
                        "power_cap must be finite and nonnegative",
                    ));
                }
            }
        }
        let reference = *node_index.get(&doc.reference_node).ok_or_else(|| {
            NetworkError::semantic("reference_node", &doc.reference_node, "is not a node of the network")
        })?;

        let net = Self {
            doc,
            node_index,
            line_ends,
            gen_node,
            storage_node,
            reference,
        };
        if let Some(orphan) = net.first_disconnected_node() {
            return Err(NetworkError::semantic(
                "node",
                &net.doc.nodes[orphan].id,
                "network is disconnected: node not reachable from the reference node",
            ));
        }
        Ok(net)
    }

    fn first_disconnected_node(&self) -> Option<usize> {
        let n = self.num_nodes();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.line_ends {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.reference];
        seen[self.reference] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        Self::from_json_with(text, LoadOptions::default())
    }

    pub fn from_json_with(text: &str, opts: LoadOptions) -> Result<Self, NetworkError> {
        let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| NetworkError::Schema(e.to_string()))?;
        Self::with_options(doc, opts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("network serializes")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.doc.nodes
    }

    pub fn lines(&self) -> &[Line] {
        &self.doc.lines
    }

    pub fn generators(&self) -> &[Generator] {
        &self.doc.generators
    }

    pub fn storages(&self) -> &[StorageUnit] {
        &self.doc.storages
    }

    pub fn num_nodes(&self) -> usize {
        self.doc.nodes.len()
    }

    pub fn num_lines(&self) -> usize {
        self.doc.lines.len()
    }

    pub fn num_generators(&self) -> usize {
        self.doc.generators.len()
    }

    pub fn num_storages(&self) -> usize {
        self.doc.storages.len()
    }

    pub fn reference_node(&self) -> usize {
        self.reference
    }

    pub fn reference_id(&self) -> &str {
        &self.doc.reference_node
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn generator_index(&self, id: &str) -> Option<usize> {
        self.doc.generators.iter().position(|g| g.id == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.doc.lines.iter().position(|l| l.id == id)
    }

    pub fn storage_index(&self, id: &str) -> Option<usize> {
        self.doc.storages.iter().position(|s| s.id == id)
    }

    /// `(from, to)` node indices of a line.
    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        self.line_ends[line]
    }

    pub fn generator_node(&self, g: usize) -> usize {
        self.gen_node[g]
    }

    pub fn storage_node(&self, s: usize) -> usize {
        self.storage_node[s]
    }

    pub fn demands(&self) -> Vec<f64> {
        self.doc.nodes.iter().map(|n| n.demand).collect()
    }

    pub fn total_demand(&self) -> f64 {
        self.doc.nodes.iter().map(|n| n.demand).sum()
    }

    /// Copy of the network with every nodal demand replaced.
    ///
    /// Negative entries are accepted here; perturbation oracles need them.
    pub fn with_demands(&self, demands: &[f64]) -> Self {
        assert_eq!(demands.len(), self.num_nodes(), "demand vector length");
        let mut out = self.clone();
        for (n, &d) in out.doc.nodes.iter_mut().zip(demands) {
            n.demand = d;
        }
        out
    }

    /// Copy with a different reference node. Panics on an unknown id.
    pub fn with_reference(&self, id: &str) -> Self {
        let idx = self.node_index(id).expect("reference node exists");
        let mut out = self.clone();
        out.doc.reference_node = id.to_string();
        out.reference = idx;
        out
    }

    pub fn without_storage(&self) -> Self {
        let mut out = self.clone();
        out.doc.storages.clear();
        out.storage_node.clear();
        out
    }

    /// Copy with each generator's `p_max` replaced; `p_min` is clamped so it
    /// never exceeds the new maximum.
    pub fn with_capacities(&self, p_max: &[f64]) -> Self {
        assert_eq!(p_max.len(), self.num_generators(), "capacity vector length");
        let mut out = self.clone();
        for (g, &cap) in out.doc.generators.iter_mut().zip(p_max) {
            g.p_max = cap;
            g.p_min = g.p_min.min(cap);
        }
        out
    }

    /// Rebuild from modified parts, re-running validation.
    pub fn rebuild(
        &self,
        edit: impl FnOnce(&mut Vec<Node>, &mut Vec<Line>, &mut Vec<Generator>, &mut Vec<StorageUnit>),
    ) -> Result<Self, NetworkError> {
        let mut doc = self.doc.clone();
        edit(&mut doc.nodes, &mut doc.lines, &mut doc.generators, &mut doc.storages);
        Self::with_options(
            doc,
            LoadOptions {
                allow_negative_demand: true,
            },
        )
    }
}

/// Load and validate a network document.
pub fn load_network(document: &str) -> Result<Network, NetworkError> {
    Network::from_json(document)
}

// ---------------------------------------------------------------------------
// Scenarios

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioPeriod {
    pub label: i64,
    /// Node id → load scale. Unlisted nodes keep scale 1.
    pub load_scale: BTreeMap<String, f64>,
    /// Generator id → capacity factor. Unlisted generators keep factor 1.
    pub capacity_factor: BTreeMap<String, f64>,
    /// Optional calendar month (1–12) used for aggregation.
    pub month: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub periods: Vec<ScenarioPeriod>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario csv: {0}")]
    Csv(String),
    #[error("scenario period {period}: {message}")]
    Invalid { period: i64, message: String },
}

#[derive(Debug, Deserialize)]
struct ScenarioRecord {
    period: i64,
    entity_id: String,
    kind: String,
    value: f64,
}

impl Scenario {
    /// Parse `period,entity_id,kind,value` rows. `kind` is `load_scale`,
    /// `capacity_factor` or `month` (entity id ignored for the latter).
    pub fn from_csv(text: &str) -> Result<Self, ScenarioError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| ScenarioError::Csv(e.to_string()))?.clone();
        let expected = ["period", "entity_id", "kind", "value"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(ScenarioError::Csv(format!("header must be `{}`", expected.join(","))));
        }
        let mut by_label: BTreeMap<i64, ScenarioPeriod> = BTreeMap::new();
        for rec in rdr.deserialize::<ScenarioRecord>() {
            let rec = rec.map_err(|e| ScenarioError::Csv(e.to_string()))?;
            let p = by_label.entry(rec.period).or_insert_with(|| ScenarioPeriod {
                label: rec.period,
                ..Default::default()
            });
            match rec.kind.as_str() {
                "load_scale" => {
                    p.load_scale.insert(rec.entity_id, rec.value);
                }
                "capacity_factor" => {
                    p.capacity_factor.insert(rec.entity_id, rec.value);
                }
                "month" => {
                    if !(1.0..=12.0).contains(&rec.value) || rec.value.fract() != 0.0 {
                        return Err(ScenarioError::Invalid {
                            period: rec.period,
                            message: format!("month {} is not in 1..=12", rec.value),
                        });
                    }
                    p.month = Some(rec.value as u32);
                }
                other => return Err(ScenarioError::Csv(format!("unknown kind `{other}`"))),
            }
        }
        Ok(Scenario {
            periods: by_label.into_values().collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("period,entity_id,kind,value\n");
        for p in &self.periods {
            for (id, v) in &p.load_scale {
                out.push_str(&format!("{},{},load_scale,{}\n", p.label, id, v));
            }
            for (id, v) in &p.capacity_factor {
                out.push_str(&format!("{},{},capacity_factor,{}\n", p.label, id, v));
            }
            if let Some(m) = p.month {
                out.push_str(&format!("{},*,month,{}\n", p.label, m));
            }
        }
        out
    }

    /// Check every referenced entity exists and every scale is admissible.
    pub fn validate(&self, net: &Network) -> Result<(), ScenarioError> {
        for p in &self.periods {
            let bad = |message: String| ScenarioError::Invalid {
                period: p.label,
                message,
            };
            for (id, v) in &p.load_scale {
                if net.node_index(id).is_none() {
                    return Err(bad(format!("unknown node `{id}`")));
                }
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(bad(format!("load_scale for `{id}` must be finite and nonnegative")));
                }
            }
            for (id, v) in &p.capacity_factor {
                if net.generator_index(id).is_none() {
                    return Err(bad(format!("unknown generator `{id}`")));
                }
                if !(v.is_finite() && (0.0..=1.0).contains(v)) {
                    return Err(bad(format!("capacity_factor for `{id}` must lie in [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Scale demands and generator capacities for one scenario period.
///
/// Panics if `period` is out of range.
pub fn apply_scenario_period(network: &Network, scenario: &Scenario, period: usize) -> Network {
    let p = &scenario.periods[period];
    let demands: Vec<f64> = network
        .nodes()
        .iter()
        .map(|n| n.demand * p.load_scale.get(&n.id).copied().unwrap_or(1.0))
        .collect();
    let caps: Vec<f64> = network
        .generators()
        .iter()
        .map(|g| g.p_max * p.capacity_factor.get(&g.id).copied().unwrap_or(1.0))
        .collect();
    network.with_demands(&demands).with_capacities(&caps)
}
