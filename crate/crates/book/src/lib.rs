//! Compiles the code blocks of the guide in `book/src` as doc-tests, since
//! mdbook cannot resolve crate dependencies on its own. One module per
//! chapter so a failing snippet points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/properties.md")]
pub mod properties {}

#[doc = include_str!("../../../book/src/measurement.md")]
pub mod measurement {}

#[doc = include_str!("../../../book/src/histories.md")]
pub mod histories {}

#[doc = include_str!("../../../book/src/frameworks.md")]
pub mod frameworks {}

#[doc = include_str!("../../../book/src/valuations.md")]
pub mod valuations {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
