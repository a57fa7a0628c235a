//! Bilevel optimizer for human-robot collaborative work-cells.

pub mod cli;
pub mod evolve;
pub mod export;
pub mod feasibility;
pub mod format;
pub mod geometry;
pub mod kpi;
pub mod model;
pub mod registry;
pub mod scheduler;
pub mod surrogate;
