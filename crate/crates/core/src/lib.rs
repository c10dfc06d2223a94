//! Blend several room photographs into one navigable 3D mesh.

pub mod backends;
pub mod blend;
pub mod config;
pub mod error;
pub mod export;
pub mod floor_align;
pub mod geometry;
pub mod grid;
pub mod ingest;
pub mod layout;
pub mod lift3d;
pub mod manifest;
pub mod palette;
pub mod prior;
pub mod prompts;
pub mod render;
pub mod trajectory;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/conventions.md")]
    mod conventions {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/lifting.md")]
    mod lifting {}
    #[doc = include_str!("../../../book/src/layout.md")]
    mod layout {}
    #[doc = include_str!("../../../book/src/prior.md")]
    mod prior {}
    #[doc = include_str!("../../../book/src/trajectory.md")]
    mod trajectory {}
    #[doc = include_str!("../../../book/src/blending.md")]
    mod blending {}
    #[doc = include_str!("../../../book/src/config.md")]
    mod config {}
}
