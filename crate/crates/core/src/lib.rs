//! Unassisted quality assessment of despeckling filters.
//!
//! A filter is judged only through its ratio image `I = Z / X̂`: on
//! textureless areas `I` should keep the statistics of pure speckle
//! (first order), and it should carry no geometric structure that a
//! random permutation of its pixels would destroy (second order). The two
//! deviations add up to the score `M`; lower is better.

pub mod error;
pub mod filters;
pub mod firstorder;
pub mod metrics;
pub mod quality;
pub mod raster;
pub mod rng;
pub mod secondorder;
pub mod serde_inf;
pub mod simulate;
pub mod tune;

pub use error::{Error, ParseError, Result};
pub use filters::FilterSpec;
pub use firstorder::{AreaSelection, SelectionConfig, SelectionMode, WindowStats};
pub use quality::{evaluate_m, evaluate_m_additive, ratio_image, EvalConfig, MReport};
pub use raster::{load_raster, save_raster, Raster, Roi, SummaryStats};
pub use simulate::{SceneDescriptor, SpeckleParams};
pub use tune::{grid_search, ParamGrid, TuneTrace};
