pub mod coupling;
pub mod error;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod sampling;
pub mod simulator;
pub mod sum;
pub mod transport;
pub mod vecmat;

pub use coupling::EmpiricalCoupling;
pub use error::{Error, Result};
pub use harness::{ExperimentReport, SimConfig};
pub use kernels::{EmpiricalMeasure, Gamma, TestFunction};
pub use sampling::InitialCondition;
pub use simulator::{NoisePlan, PairedEnsemble, ParticleEnsemble};
pub use transport::AssignmentResult;
pub use vecmat::{Mat3, Sym3, Vec3};
