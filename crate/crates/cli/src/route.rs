use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use qbc_core::protocol::SessionConfig;
use qbc_core::routing::{
    datagram_select, flood_discover, reserve_circuit, vc_select, EdgeDoc, NetworkDoc, PathChoice,
    ReservationLedger, ReservationReport, ReserveMode, TrafficSpec, DEFAULT_ALPHA,
};
use qbc_core::Error;

use crate::{usage, Failure, EXIT_NO_VIABLE_CIRCUIT, EXIT_UNREACHABLE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Datagram,
    Vc,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Reserve {
    #[default]
    Fast,
    Full,
}

/// A network document plus optional selection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeDoc>,
    pub traffic: TrafficSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub reserve: Reserve,
    /// Session template for full-mode reservations.
    #[serde(default)]
    pub session: Option<SessionConfig>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Per-hop session used by full reservations when none is configured.
/// N = 8 frames meet the count thresholds honestly almost always, unlike
/// N = 2.
pub fn circuit_session() -> SessionConfig {
    SessionConfig {
        n_quarter: 8,
        codebook_size: None,
        n_tol: 2,
        e_tol: 0.25,
        frame_budget: 400,
        ..SessionConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadEntry {
    pub a: String,
    pub b: String,
    pub load: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub traffic: TrafficSpec,
    pub candidates: Vec<PathChoice>,
    pub loads: Vec<LoadEntry>,
    pub chosen: PathChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reservation: Option<ReservationReport>,
}

pub fn run(cfg: RouteConfig) -> Result<RouteReport, Failure> {
    let doc = NetworkDoc {
        nodes: cfg.nodes,
        edges: cfg.edges,
        traffic: cfg.traffic,
    };
    if doc.nodes.is_empty() {
        return Err(usage("network has no nodes"));
    }
    let (graph, traffic) = doc.into_parts().map_err(usage)?;
    if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
        return Err(usage(format!("alpha = {} must be a non-negative number", cfg.alpha)));
    }
    let discovery = flood_discover(&graph, &traffic).map_err(anyhow::Error::from)?;
    if discovery.paths.is_empty() {
        return Err(Failure::Status(
            EXIT_UNREACHABLE,
            format!("{} is unreachable from {}", traffic.dst, traffic.src),
        ));
    }
    let chosen = match cfg.mode {
        Mode::Datagram => datagram_select(&discovery.paths),
        Mode::Vc => vc_select(&discovery.paths, cfg.alpha),
    };
    let chosen = match chosen {
        Ok(c) => c,
        Err(Error::NoViableCircuit) => {
            return Err(Failure::Status(EXIT_NO_VIABLE_CIRCUIT, Error::NoViableCircuit.to_string()))
        }
        Err(e) => return Err(anyhow::Error::from(e).into()),
    };
    let reservation = match cfg.mode {
        Mode::Datagram => None,
        Mode::Vc => {
            let mode = match cfg.reserve {
                Reserve::Fast => ReserveMode::Fast,
                Reserve::Full => {
                    let session = cfg.session.unwrap_or_else(circuit_session);
                    session.validate().map_err(|e| usage(format!("session: {e}")))?;
                    ReserveMode::Full(Box::new(session))
                }
            };
            let mut ledger = ReservationLedger::new();
            Some(
                reserve_circuit(&graph, &traffic, &discovery, &chosen, &mut ledger, &mode)
                    .map_err(anyhow::Error::from)?,
            )
        }
    };
    let loads = discovery
        .loads
        .iter()
        .map(|(k, &load)| LoadEntry {
            a: k.0.clone(),
            b: k.1.clone(),
            load,
        })
        .collect();
    Ok(RouteReport {
        mode: cfg.mode,
        alpha: (cfg.mode == Mode::Vc).then_some(cfg.alpha),
        traffic,
        candidates: discovery.paths,
        loads,
        chosen,
        reservation,
    })
}
