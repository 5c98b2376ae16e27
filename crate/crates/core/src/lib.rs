//! Operator library for frequency-domain detail enhancement, multi-scale
//! gated refinement and content-aware pyramid alignment.
//!
//! Every operator works on dense `N×C×H×W` [`Tensor`]s, is recorded on a
//! reverse-mode [`Tape`](autodiff::Tape), and is certified against
//! central differences by [`gradcheck`](autodiff::gradcheck).

pub mod autodiff;
pub mod element;
pub mod error;
pub mod fddem;
pub mod io;
pub mod json;
pub mod msgrb;
pub mod neck;
pub mod ops;
pub mod params;
pub mod props;
pub mod rng;
pub mod spectral;
pub mod tensor;

pub use element::{DType, Element};
pub use error::{Error, Result};
pub use params::{ParamStore, Source};
pub use spectral::{ComplexTensor, ComplexWeights};
pub use tensor::{SamplingGrid, Shape, Tensor};
