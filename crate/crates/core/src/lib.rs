//! Distribution of quantum circuits over two QPUs with entanglement-assisted
//! packing processes.

pub mod bench;
pub mod circuit;
pub mod cli;
pub mod conversion;
pub mod graphs;
pub mod matrix;
pub mod packets;
pub mod plan;
pub mod solver;
pub mod verifier;

pub use circuit::{parse_circuit, Circuit, CircuitError, GateSpec, Partition, Side};
pub use conversion::{to_control_phase_form, ConversionError, ConvertedCircuit, CpNode, Word};
pub use matrix::{CMat, MatrixError, SingleQubitClass, TOL};
