//! Content-aware pyramid alignment: deformable downsampling, dynamic
//! upsampling and the two-pass neck built from them.

pub mod ca2neck;
pub mod dysample;
pub mod ldconv;

pub use ca2neck::{ca2neck_forward, Ca2NeckConfig, Ca2NeckParams};
pub use dysample::{dysample_forward, DysampleConfig, DysampleParams};
pub use ldconv::{ldconv_coords, ldconv_forward, AnchorMode, LdconvConfig, LdconvParams};
