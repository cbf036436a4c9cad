pub mod dyadic;
pub mod error;
pub mod euler_reynolds;
pub mod field;
pub mod jets;
pub mod lorentz;
pub mod profiles;
pub mod quad;
pub mod regression;
pub mod scheduler;
pub mod spectral;
