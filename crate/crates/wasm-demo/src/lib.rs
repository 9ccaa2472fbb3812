//! Browser demo. Each exported function takes plain numbers and returns a
//! JSON string; the `api` module holds the same operations for native use.

use wasm_bindgen::prelude::*;

pub mod api {
    use lme_core::accounting::build_ledger;
    use lme_core::combined::{lme, sci, solve_combined};
    use lme_core::fixtures;
    use lme_core::multiperiod::{solve_storage_combined, storage_ledger, Horizon};
    use lme_core::network::{Generator, GeneratorKind, Line, Network, Node, StorageUnit};
    use lme_core::verify::sweep_emissions;
    use serde_json::{json, Value};

    pub type ApiResult = Result<Value, String>;

    fn unit(id: &str, node: &str, cost: f64, rate: f64, p_max: f64, kind: GeneratorKind) -> Generator {
        Generator {
            id: id.into(),
            node: node.into(),
            cost,
            emission_rate: rate,
            p_min: 0.0,
            p_max,
            kind: Some(kind),
        }
    }

    /// Emissions of the single-node merit-order system as demand moves over
    /// `[lo, hi]`, with the recovered linear pieces.
    pub fn copper_plate_sweep(lo: f64, hi: f64, samples: u32, rates: [f64; 3]) -> ApiResult {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err("range must satisfy lo < hi".into());
        }
        let base = fixtures::copper_plate(0.0);
        let net = base
            .rebuild(|_, _, g, _| {
                for (unit, r) in g.iter_mut().zip(rates) {
                    unit.emission_rate = r;
                }
            })
            .map_err(|e| e.to_string())?;
        let curve = sweep_emissions(&net, 0, (lo, hi), samples.max(3) as usize).map_err(|e| e.to_string())?;
        let generators: Vec<Value> = net
            .generators()
            .iter()
            .map(|g| json!({"id": g.id, "cost": g.cost, "emission_rate": g.emission_rate, "p_max": g.p_max}))
            .collect();
        Ok(json!({
            "generators": generators,
            "demand": curve.alphas,
            "emissions": curve.values,
            "infeasible": curve.infeasible,
            "segments": curve.segments.iter().map(|s| json!({"start": s.start, "end": s.end, "slope": s.slope})).collect::<Vec<_>>(),
            "breakpoints": curve.breakpoints,
            "continuous": curve.continuous,
        }))
    }

    /// Parameters of the two-bus explorer.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct TwoBus {
        pub demand: [f64; 2],
        pub f_max: f64,
        pub cost: [f64; 2],
        pub rate: [f64; 2],
        pub p_max: [f64; 2],
    }

    impl Default for TwoBus {
        fn default() -> Self {
            Self {
                demand: [0.0, 250.0],
                f_max: 100.0,
                cost: [5.0, 50.0],
                rate: [0.0, 1.0],
                p_max: [200.0, 200.0],
            }
        }
    }

    impl TwoBus {
        pub fn network(&self) -> Result<Network, String> {
            Network::new(
                vec![
                    Node {
                        id: "bus1".into(),
                        demand: self.demand[0],
                    },
                    Node {
                        id: "bus2".into(),
                        demand: self.demand[1],
                    },
                ],
                vec![Line {
                    id: "L1".into(),
                    from: "bus1".into(),
                    to: "bus2".into(),
                    susceptance: 10.0,
                    f_max: self.f_max,
                }],
                vec![
                    unit(
                        "G1",
                        "bus1",
                        self.cost[0],
                        self.rate[0],
                        self.p_max[0],
                        GeneratorKind::Wind,
                    ),
                    unit(
                        "G2",
                        "bus2",
                        self.cost[1],
                        self.rate[1],
                        self.p_max[1],
                        GeneratorKind::Gas,
                    ),
                ],
                vec![],
                "bus1",
            )
            .map_err(|e| e.to_string())
        }
    }

    /// Dispatch, prices, LMEs and the carbon ledger of the two-bus system.
    pub fn two_bus(params: &TwoBus) -> ApiResult {
        let net = params.network()?;
        let r = solve_combined(&net).map_err(|e| e.to_string())?;
        let ledger = build_ledger(&net, &r);
        Ok(json!({
            "generation": r.dispatch.generation,
            "flow": r.dispatch.flow[0],
            "lmp": r.dispatch.lmp,
            "lme": lme(&r).0,
            "sci": sci(&r).0[0],
            "emissions": r.emissions,
            "cost": r.dispatch.cost,
            "ledger": {
                "load": ledger.load[0],
                "generator": ledger.generator[0],
                "line": ledger.line[0][0],
                "residual": ledger.footprint_residual,
            },
        }))
    }

    /// The two-period storage example: clean energy in period 1 only.
    pub fn storage_example(efficiency: f64, e_max: f64, with_storage: bool) -> ApiResult {
        let (net, horizon) = fixtures::two_bus_storage();
        let net = if with_storage {
            net.rebuild(|_, _, _, s| {
                s[0] = StorageUnit {
                    efficiency,
                    e_max,
                    ..s[0].clone()
                }
            })
            .map_err(|e| e.to_string())?
        } else {
            net.without_storage()
        };
        let horizon = Horizon {
            initial_soc: vec![0.0; net.num_storages()],
            ..horizon
        };
        let r = solve_storage_combined(&net, &horizon).map_err(|e| e.to_string())?;
        let ledger = storage_ledger(&net, &horizon, &r);
        let d = &r.dispatch;
        Ok(json!({
            "lme": r.lme,
            "generation": d.periods.iter().map(|p| p.generation.clone()).collect::<Vec<_>>(),
            "flow": d.periods.iter().map(|p| p.flow[0]).collect::<Vec<_>>(),
            "charge": d.charge.first(),
            "discharge": d.discharge.first(),
            "soc": d.soc.first(),
            "period_emissions": r.period_emissions,
            "emissions": r.emissions,
            "cost": d.cost,
            "ledger": {
                "load": ledger.load,
                "generator": ledger.generator,
                "line": ledger.line,
                "storage": ledger.storage,
                "residual": ledger.footprint_residual,
            },
        }))
    }
}

fn to_js(v: api::ApiResult) -> Result<String, JsError> {
    v.map(|j| j.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn copper_plate_sweep(
    lo: f64,
    hi: f64,
    samples: u32,
    clean: f64,
    dirty: f64,
    medium: f64,
) -> Result<String, JsError> {
    to_js(api::copper_plate_sweep(lo, hi, samples, [clean, dirty, medium]))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn two_bus(
    demand1: f64,
    demand2: f64,
    f_max: f64,
    cost1: f64,
    cost2: f64,
    rate1: f64,
    rate2: f64,
    cap1: f64,
    cap2: f64,
) -> Result<String, JsError> {
    to_js(api::two_bus(&api::TwoBus {
        demand: [demand1, demand2],
        f_max,
        cost: [cost1, cost2],
        rate: [rate1, rate2],
        p_max: [cap1, cap2],
    }))
}

#[wasm_bindgen]
pub fn storage_example(efficiency: f64, e_max: f64, with_storage: bool) -> Result<String, JsError> {
    to_js(api::storage_example(efficiency, e_max, with_storage))
}
