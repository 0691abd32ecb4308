//! Numerical laboratory for the gluing of an SU(2) instanton into a
//! background connection on the unit ball and the asymptotic estimates of
//! the deformed Yang–Mills functional.

pub mod basis;
pub mod dual;
pub mod forms;
pub mod functionals;
pub mod harness;
pub mod instanton;
pub mod liealg;
