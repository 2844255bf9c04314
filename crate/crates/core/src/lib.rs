//! Locally orderless registration.
//!
//! Scale-aware intensity density estimation (Parzen window and generalized
//! partial volume), a family of histogram-based similarity measures with
//! analytic gradients, and a quasi-Newton registration loop.

pub mod error;
pub mod experiments;
pub mod histogram;
pub mod image;
pub mod io;
pub mod kernels;
pub mod measures;
pub mod objective;
pub mod optimize;
pub mod parallel;
pub mod registration;
pub mod spline;
pub mod synth;
pub mod transform;

pub use error::{LorError, Result};
pub use image::{ImageGrid, SamplePoint, Shape};
pub use kernels::{KernelFamily, KernelSpec, ScaleTriple};
pub use spline::{prefilter, Boundary, InterpolantCoefficients};
