pub mod geodesy;
pub mod zoning;
pub mod odnet;
pub mod metrics;
pub mod distfit;
pub mod synth;
pub mod radar;
pub mod io;
pub mod pipeline;
