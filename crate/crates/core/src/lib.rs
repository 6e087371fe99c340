//! A from-scratch 3D CNN for classifying pre-crime behavior in surveillance
//! clips, with the segmentation, dataset and experiment tooling around it.

pub mod dataset;
pub mod harness;
pub mod network;
pub mod pcb;
pub mod tensor;

// the book's chapters run as doctests
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/segments.md")]
    mod segments {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
