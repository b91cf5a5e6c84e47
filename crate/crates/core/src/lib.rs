pub mod simbus;
pub mod plant;
pub mod stack;
pub mod faultinject;
pub mod trackgeom;
pub mod scenario;
pub mod telemetry;
pub mod cli;

mod params;
