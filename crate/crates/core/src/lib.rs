//! Correction of NLOS-biased GNSS fixes in street canyons using a
//! precomputed database of simulated position errors.
//!
//! A scene of extruded buildings ([`scene`]) is ray traced for every
//! receiver grid cell and satellite ([`raytrace`]), the resulting
//! pseudoranges ([`measurement`]) are solved by least squares
//! ([`estimator`]), and the biases of those fixes are averaged per time slot
//! and result cell into a [`correction`] database. [`eval`] runs tracks
//! through the whole loop.
//!
//! ```
//! use dtgnss::correction::{build_database, correct_position, BuildSettings};
//! use dtgnss::eval::{gen_constellation, gen_scene, ConstellationParams, SceneParams, ScenePreset};
//! use dtgnss::geo::EnuPoint;
//!
//! let scene = gen_scene(ScenePreset::Canyon, &SceneParams::default())?;
//! let params = ConstellationParams { epochs: 10, ..Default::default() };
//! let table = gen_constellation(scene.origin(), &params)?;
//! let db = build_database(&scene, &table, &BuildSettings::default())?;
//!
//! let fix = EnuPoint::new(4.5, -20.0, 1.0);
//! let r = correct_position(&fix, 90.0, &db);
//! println!("applied: {}, corrected: {:?}", r.applied, r.corrected);
//! # Ok::<(), dtgnss::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correction;
pub mod ephemeris;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod geo;
pub mod io;
pub mod measurement;
pub mod raytrace;
pub mod scene;

pub use error::{Error, Result};

// The guide's snippets run as doctests so they cannot drift from the code.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/scenes.md")]
    struct Scenes;
    #[doc = include_str!("../../../book/src/signal-paths.md")]
    struct SignalPaths;
    #[doc = include_str!("../../../book/src/positioning.md")]
    struct Positioning;
    #[doc = include_str!("../../../book/src/database.md")]
    struct Database;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../book/src/file-formats.md")]
    struct FileFormats;
}
