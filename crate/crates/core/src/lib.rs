//! Persona-based multi-agent debate, interaction graphs, and distillation
//! into a small Socratic decomposer-solver student.

pub mod agents;
pub mod debate;
pub mod distill;
pub mod gcn;
pub mod graph;
pub mod harness;
pub mod lm;
pub mod losses;
pub mod optim;
pub mod params;
pub mod record;
pub mod scot;
pub mod tape;
pub mod util;
