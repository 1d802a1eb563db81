pub mod config;
pub mod eval;
pub mod explain;
pub mod maneuver;
pub mod pipeline;
pub mod trip;
pub mod spatial;
pub mod synth;
pub mod causal;
pub mod features;
pub mod score;
pub mod som;
