pub mod eval;
pub mod features;
pub mod forecast;
pub mod series;
pub mod synth;
pub mod twin;
