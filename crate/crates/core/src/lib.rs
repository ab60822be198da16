//! Regional climate policy under an international emissions trading scheme:
//! regional welfare optimization, the Nash equilibrium in permit prices and
//! emissions, calibration, diagnostics and scenario I/O.

pub mod banded;
pub mod model;
pub mod params;
pub mod region;
pub mod calibration;
pub mod nash;
pub mod scenario;
pub mod diagnostics;
pub mod archive;
pub mod cli;
