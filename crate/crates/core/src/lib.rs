//! Speech-driven lip motion synthesis.
//!
//! The crate builds a library of dynamic visemes from blendshape captures,
//! turns timestamped Pinyin scripts into continuous 27-channel lip
//! trajectories, retargets them to actuator commands and scores the result.
//!
//! Numeric code is generic over [`Scalar`] / [`Real`]; the aliases below
//! pin the common instantiations.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod blendshape;
pub mod builder;
pub mod coarticulation;
pub mod dtw;
pub mod io;
pub mod library;
pub mod metrics;
pub mod pinyin;
pub mod retarget;
pub mod scalar;
pub mod synthetic;

pub use blendshape::{resample_trajectory, BlendshapeError, ChannelId, CHANNEL_COUNT, CHANNEL_NAMES};
pub use io::{parse_capture_csv, write_trajectory_csv, FormatError};
pub use library::{deserialize_library, serialize_library, LibraryError};
pub use pinyin::{
    load_mapping_table, map_to_visemes, split_syllable, syllable_to_visemes, MappingTable, SyllableParts, VisemeId,
    VisemeSequence,
};
pub use scalar::{Real, Scalar};

/// Exact rational scalar for checks that must hold without rounding.
pub type Exact = num_rational::Ratio<i64>;

pub type BlendshapeVector = blendshape::BlendshapeVector<f64>;
pub type BlendshapeVectorF32 = blendshape::BlendshapeVector<f32>;
pub type VisemeTrajectory = blendshape::VisemeTrajectory<f64>;
pub type VisemeTrajectoryF32 = blendshape::VisemeTrajectory<f32>;
pub type FrameSeries = blendshape::FrameSeries<f64>;
pub type FrameSeriesF32 = blendshape::FrameSeries<f32>;
pub type VisemeLibrary = library::VisemeLibrary<f64>;
pub type VisemeLibraryF32 = library::VisemeLibrary<f32>;
