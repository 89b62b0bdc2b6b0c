//! Reverse-mode differentiation over a fixed op set.
//!
//! A [`Graph`] is a topologically ordered list of nodes ending in one scalar
//! loss. [`forward`] evaluates it on a batch and returns a [`Tape`]; the tape
//! keeps, for every linear neuron, the exact input matrix the neuron multiplied
//! into its parameters. [`Tape::backward`] produces the parameter gradient of
//! the mean loss and fills each [`NeuronRecord`]'s gradient slot.
//!
//! The per-neuron linear maps `θ ↦ f_X(θ)` and their adjoints are exposed as
//! [`neuron_jvp`] and [`neuron_vjp`]; the metric solver composes them.

mod graph;
mod neuron;
mod params;
mod tape;

pub use graph::{Graph, GraphBuilder, NeuronId, NeuronKind, NeuronSpec, Node, NodeId, Op};
pub use neuron::{neuron_jvp, neuron_vjp, NeuronRecord};
pub use params::ParamSet;
pub use tape::{forward, predict, Tape};
