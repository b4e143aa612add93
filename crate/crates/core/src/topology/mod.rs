//! Topology reconstruction from log-det distances.

mod binary;
mod caterpillar;
mod logdet;
mod quartet;

#[cfg(test)]
mod tests;

pub use binary::{reconstruct_binary, BinaryResult};
pub use caterpillar::{reconstruct_caterpillar, CaterpillarResult, ContractionGraph};
pub use logdet::{additive_logdet, edge_logdet_weight, logdet_pair, LogDetMetric, DET_FLOOR};
pub use quartet::{decide_short_quartets, four_point, QuartetDecision, QuartetSet, QuartetSplit};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuartetMode {
    /// Reject outputs that would need a contracted edge.
    Strict,
    /// Contract unresolved edges into multifurcations.
    Contract,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TopologyParams {
    /// Pairs with distance above `2 * delta_cap` are ignored.
    pub delta_cap: f64,
    /// Four-point decision margin.
    pub contraction_delta: f64,
    pub quartet_mode: QuartetMode,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            delta_cap: 2.0,
            contraction_delta: 0.05,
            quartet_mode: QuartetMode::Contract,
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_cap > 0.0) || !(self.contraction_delta >= 0.0) {
            return Err(Error::InvalidConfig(
                "delta_cap must be positive and contraction_delta nonnegative".into(),
            ));
        }
        Ok(())
    }
}
