pub mod analysis;
pub mod error;
pub mod hankel;
pub mod io;
pub mod matcore;
pub mod realize;
pub mod rng;
pub mod rsvd;
pub mod sysid;

pub use error::{Error, Result};
pub use hankel::{HankelPair, MarkovParams};
pub use matcore::{DenseMatrix, SvdFactors};
pub use realize::{RealizationMode, RealizationResult, StateSpace};
pub use rsvd::{RsvdConfig, TestMatrixKind};
