//! JSON description of a switching-time problem.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::{PlantConfig, StateConfig};
use crate::error::{Error, Result};
use crate::models::FixedTarget;
use crate::objective::QuadraticLieCost;
use crate::sto::{StoIterate, StoOptions, SwitchedSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoConfig {
    pub plant: PlantConfig,
    /// Named constant controls.
    pub modes: BTreeMap<String, Vec<f64>>,
    /// Mode names in activation order.
    pub sequence: Vec<String>,
    pub window: [f64; 2],
    /// Initial interior switching times.
    pub times: Vec<f64>,
    pub initial: StateConfig,
    pub target: StateConfig,
    pub m_diag: Vec<f64>,
    pub q_z_diag: Vec<f64>,
    pub p_terminal_diag: Vec<f64>,
    /// Integration step.
    pub dt: f64,
    #[serde(default)]
    pub options: StoOptions,
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

impl StoConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn build(&self) -> Result<(SwitchedSystem, QuadraticLieCost)> {
        let plant = self.plant.build()?.into_arc();
        let modes = self
            .sequence
            .iter()
            .map(|name| {
                self.modes
                    .get(name)
                    .map(|u| DVector::from_column_slice(u))
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let init = self.initial.build();
        let target = self.target.build();
        let (d, k) = (plant.kind().dim(), plant.z_dim());
        if init.kind() != plant.kind() || target.kind() != plant.kind() || init.z.len() != k || target.z.len() != k {
            return Err(Error::InvalidConfig("initial and target states must match the plant".into()));
        }
        if self.m_diag.len() != d || self.q_z_diag.len() != k || self.p_terminal_diag.len() != d + k {
            return Err(Error::InvalidConfig(format!("weights need {d}, {k} and {} entries", d + k)));
        }
        let u0 = DVector::zeros(plant.u_dim());
        let cost = QuadraticLieCost::new(
            plant.kind(),
            Arc::new(FixedTarget::new(target, u0)),
            diag(&self.m_diag),
            diag(&self.q_z_diag),
            diag(&self.p_terminal_diag),
        )?;
        let sys =
            SwitchedSystem::new(plant, modes, self.times.clone(), (self.window[0], self.window[1]), init, self.dt)?;
        Ok((sys, cost))
    }
}

/// Iteration history: `iteration, cost, gradient_norm, step, T1..`.
pub fn write_history<W: Write>(out: W, history: &[StoIterate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = history.first().map_or(0, |h| h.times.len());
    let mut header: Vec<String> = ["iteration", "cost", "gradient_norm", "step"].map(String::from).to_vec();
    header.extend((1..=n).map(|i| format!("T{i}")));
    w.write_record(&header)?;
    for h in history {
        let mut rec =
            vec![h.iteration.to_string(), h.cost.to_string(), h.gradient_norm.to_string(), h.step.to_string()];
        rec.extend(h.times.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
