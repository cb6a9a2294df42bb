//! Probabilistic lava-flow hazard mapping on raster terrain.
//!
//! The pipeline has three stages, each usable on its own:
//!
//! 1. [`vent_field`] turns a catalog of historical vent locations into a
//!    kernel density estimate, splits it into danger classes by successive
//!    halving of the density, and lays out a grid of hypothetical vents
//!    whose spatial density tracks the class.
//! 2. [`event_model`] draws eruption scenarios: a weighted die over
//!    duration/volume classes (alias method) and a Poisson count of vent
//!    activations per forecast run.
//! 3. [`lava_ca`] spreads each eruption over the terrain with a
//!    minimization-of-differences cellular automaton; [`hazard`] repeats
//!    that over many runs (optionally in parallel) and aggregates invasion
//!    probability and expected thickness, which [`render`] maps to images.
//!
//! All randomness flows from one `u64` seed through per-run counter-based
//! streams, so results are bit-identical for a given seed regardless of
//! thread count.

pub mod error;
pub mod event_model;
pub mod hazard;
pub mod lava_ca;
pub mod raster;
pub mod render;
pub mod vent_field;

pub use error::{Error, Result};
pub use event_model::{
    sample_poisson, AliasTable, EventClass, EventRealization, EventSampler, EventTable,
    RealizationMode, BUILTIN_TABLE_CSV,
};
pub use hazard::{
    exhaustive_hazard, exhaustive_hazard_with, fit_cubic, read_sidecar, relative_scale,
    run_scenario, run_scenario_with, write_sidecar, Execution, HazardInputs, HazardResult,
    ScenarioConfig,
};
pub use lava_ca::{outflows, simulate_flow, CaParams, FlowResult};
pub use raster::{read_ascii_grid, write_ascii_grid, CellIndex, Grid};
pub use render::{
    default_absolute_breaks, render_absolute, render_log_relative, write_ppm, Image, Palette, Rgb,
};
pub use vent_field::{
    classify_density, estimate_pdf, generate_vent_grid, halving_class_weights, load_vent_records,
    write_vent_records, Bandwidth, ClassMap, DensityGrid, Vent, VentRecord, VentSampler, VentSet,
};
