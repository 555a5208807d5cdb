//! Simulation of wind power generation time series from coarse gridded
//! wind fields.
//!
//! The library covers the full batch pipeline: horizontal interpolation of
//! gridded wind components at a park location ([`grid`]), vertical
//! extrapolation to hub height ([`vertical`]), conversion to capacity
//! factors through a specific-power based power curve ([`turbine`]),
//! scaling to park capacity and regional aggregation ([`fleet`]),
//! wind-speed bias correction against point measurements or a
//! high-resolution mean-wind raster ([`biascorr`]), and validation of the
//! simulated output against observed generation ([`validate`]).
//! [`pipeline`] wires the stages together behind a flat key-value
//! configuration ([`config`]), and [`synthetic`] generates a seeded,
//! fully self-consistent input bundle for end-to-end testing.

pub mod biascorr;
pub mod config;
pub mod fleet;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod synthetic;
pub mod timeseries;
pub mod turbine;
pub mod validate;
pub mod vertical;

mod stats;
