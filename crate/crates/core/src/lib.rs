//! Generation engine for verified plane-geometry problems.

pub mod constructor;
pub mod numeric;
pub mod pipeline;
pub mod reasoner;
pub mod renderer;
pub mod rules;
pub mod sampler;
pub mod statement;
pub mod translator;
