//! Multi-task classification on disjoint datasets.
//!
//! Two classification tasks share one network trunk, but each training set
//! is labeled for only one of them. Training alternates between the datasets
//! and supervises the unlabeled head with a per-sample blend of a hard pseudo
//! label and a sharpened soft label. The blend weight comes from how confident
//! and locally dense a sample's prediction is, and from how close its feature
//! distribution sits to the dataset that does carry labels for that task.

pub mod bench;
pub mod confidence;
pub mod dataio;
pub mod distribution;
pub mod error;
pub mod labels;
pub mod nn;
pub mod textio;
pub mod trainer;
pub mod weighting;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/labels.md")]
    mod labels {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/confidence.md")]
    mod confidence {}
    #[doc = include_str!("../../../book/src/distribution.md")]
    mod distribution {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
