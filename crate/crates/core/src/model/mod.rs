//! Trees, Markov models on them, and random instances.

pub mod generate;
mod markov;
mod tree;

pub use markov::{
    bayes_reverse, EdgeCheck, JointTable, LeafSamples, MarkovTreeModel, ModelConfig, NodeCheck,
    TransitionMatrix, ValidationReport, JOINT_BUDGET, STOCHASTIC_TOL,
};
pub use tree::{NodeId, Split, TopologyKind, TreeTopology};

