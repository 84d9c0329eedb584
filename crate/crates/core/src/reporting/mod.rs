//! Model export, one-pagers and run artifacts.

mod export;
mod onepager;
mod plots;
pub mod svg;

pub use export::{
    model_file_name, ExportedChannel, ExportedCoefficient, ExportedModel, RunSetup, SelectedModel, SCHEMA_VERSION,
};
pub use onepager::{
    build_onepager, AdstockCurve, BootstrapInterval, CarryoverSplit, ClusterPeers, HeaderMetrics, OnePager,
    ResponseCurvePoints, SpendEffect, WaterfallBar, BOOTSTRAP_RESAMPLES, CURVE_POINTS, CURVE_SPAN,
    MIN_BOOTSTRAP_CLUSTER, PANEL_TITLES,
};
pub use plots::{allocation_svg, response_svg};
