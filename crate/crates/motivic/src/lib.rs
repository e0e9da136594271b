//! Computation of the mod-2 motivic Steenrod algebra over an algebraically
//! closed field of characteristic zero, minimal free resolutions of the
//! coefficient ring over it, the resulting Ext charts, and the motivic May
//! spectral sequence.

pub mod grading;
pub mod milnor;
pub mod linalg;
pub mod adem;
pub mod text;
pub mod chart;
pub mod resolution;
pub mod may;
