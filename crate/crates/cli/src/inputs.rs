use crate::{CliError, RunConfig};
use lme_core::network::{LoadOptions, Network};
use serde_json::Value;
use std::fs;
use std::path::Path;

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Input(format!("missing required --{flag}")))
}

/// Parse the network document, filling in the default storage efficiency.
pub fn parse_network(text: &str, cfg: &RunConfig) -> Result<Network, CliError> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| lme_core::network::NetworkError::Schema(e.to_string()))?;
    if let Some(units) = doc.get_mut("storages").and_then(Value::as_array_mut) {
        for unit in units.iter_mut().filter_map(Value::as_object_mut) {
            unit.entry("efficiency").or_insert(Value::from(cfg.efficiency));
        }
    }
    let net = Network::from_json_with(
        &doc.to_string(),
        LoadOptions {
            allow_negative_demand: cfg.allow_negative_demand,
        },
    )?;
    match &cfg.ref_node {
        Some(id) if net.node_index(id).is_none() => Err(CliError::Input(format!(
            "--ref-node `{id}` is not a node of the network"
        ))),
        Some(id) => Ok(net.with_reference(id)),
        None => Ok(net),
    }
}

pub fn network(cfg: &RunConfig) -> Result<Network, CliError> {
    parse_network(&read(required(&cfg.network, "network")?)?, cfg)
}

/// Network with demands replaced from `--demand` (`node_id,demand_mw`), if given.
pub fn network_with_demand(cfg: &RunConfig) -> Result<Network, CliError> {
    let net = network(cfg)?;
    match &cfg.demand {
        Some(path) => {
            let demands = parse_demands(&net, &read(path)?, cfg.allow_negative_demand)?;
            Ok(net.with_demands(&demands))
        }
        None => Ok(net),
    }
}

/// Nodes not listed keep the network's own demand.
pub fn parse_demands(net: &Network, text: &str, allow_negative: bool) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| CliError::Input(format!("demand csv: {msg}"));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["node_id", "demand_mw"] {
        return Err(bad("header must be `node_id,demand_mw`".into()));
    }
    let mut demands = net.demands();
    let mut seen = vec![false; net.num_nodes()];
    for rec in rdr.deserialize::<(String, f64)>() {
        let (id, value) = rec.map_err(|e| bad(e.to_string()))?;
        let i = net.node_index(&id).ok_or_else(|| bad(format!("unknown node `{id}`")))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(bad(format!("node `{id}` listed twice")));
        }
        if !value.is_finite() || (value < 0.0 && !allow_negative) {
            return Err(bad(format!("invalid demand {value} for node `{id}`")));
        }
        demands[i] = value;
    }
    Ok(demands)
}

pub fn demand_text(cfg: &RunConfig, what: &str) -> Result<String, CliError> {
    read(required(&cfg.demand, &format!("demand ({what})"))?)
}
