//! Towers of finite Schreier coset graphs approximating weak solenoids.
//!
//! A tower is a sequence of finite action graphs `Λ_0 ← Λ_1 ← …` joined by
//! covering maps. A point of the inverse limit is a coherent thread of
//! vertices, and its leaf is the limit of the balls around it. This crate
//! builds the towers, classifies points, and counts the ends of their
//! leaves from balls that have stopped growing with the level.
//!
//! ```
//! use schreier_tower::{estimate_ends, build_schori_tower, EndsParams, EndsVerdict, FiberPoint, Policy, SchoriMethod};
//!
//! let tower = build_schori_tower(6, SchoriMethod::Voltage).unwrap();
//! let mut id = FiberPoint::new(Policy::Id);
//! let params = EndsParams { r_schedule: vec![2, 4], ..EndsParams::default() };
//! let report = estimate_ends(&tower, &mut id, &params).unwrap();
//! assert_eq!(report.verdict, EndsVerdict::Ends(4));
//! ```

pub mod cli;
mod dsu;
pub mod error;
pub mod graph;
pub mod io;
pub mod leaves;
pub mod towers;
pub mod words;

pub use error::{Error, Result};
pub use graph::{
    annulus_components, ball, decorate_with_loops, distance, is_covering, labeled_iso, prune_loops, ActionView,
    Alphabet, BallSnapshot, CoveringCheck, LabeledGraph, Letter,
};
pub use io::{export_graph, export_report, parse_graph_json, GraphFormat, Report, ReportFormat};
pub use leaves::{
    classify_fiber_point, classify_level, estimate_ends, sample_fiber_points, stable_ball, ClassificationTrace,
    EndsParams, EndsReport, EndsVerdict, FiberPoint, Policy, SampleReport, Side, Tag, ThreadRule, Verdict,
};
pub use towers::{
    build_dyadic_tower, build_generalized_schori_tower, build_mixed_tower, build_rt_tower, build_schori_tower,
    build_torus_tower, voltage_cover, GeneralizedVariant, SchoriMethod, Tower, TowerSpec, VoltageAssignment,
};
pub use words::{
    coset_count, schori_generator_sets, stallings_fold, trace_word, SchoriVariant, SubgroupChainSpec, Word,
};
