//! Shoebox room impulse response synthesis with multiband absorption,
//! source/receiver directivity, acoustic validation and mixture building.

pub mod audio;
pub mod directivity;
pub mod dsp;
pub mod error;
pub mod filterbank;
pub mod gamma_fit;
pub mod geom;
pub mod ism;
pub mod mixture;
pub mod params;
pub mod pipeline;
pub mod render;
pub mod room;
pub mod seed;
pub mod validate;

pub use directivity::{DirectivityTable, ReceiverFilterSet};
pub use error::{Error, Result};
pub use filterbank::FilterBank;
pub use geom::{Orientation, Vec3};
pub use ism::{Interp, IsmParams, Reflection, ReflectionList, Rir, WallAbsorption};
pub use mixture::{MixtureRecord, SignalModel};
pub use params::{BandSpec, GammaParams, SimParams};
pub use pipeline::{Manifest, ManifestRecord, RenderOptions, Split};
pub use render::RenderContext;
pub use room::{RoomConfig, Variant};
