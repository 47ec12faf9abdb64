//! Identification of stochastic differential equations driven by Brownian
//! motion and non-Gaussian α-stable Lévy noise from short-burst pair data.

pub mod basis;
pub mod estimate;
pub mod expr;
pub mod numeric;
pub mod rng;
pub mod simulate;
pub mod stable;
