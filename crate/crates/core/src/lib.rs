//! Nehari-manifold solvers and verification tools for the n-Kirchhoff problem
//!
//! ```text
//! −m(‖u‖ⁿ) Δₙu = λ h |u|^{q−1}u + u|u|^p e^{|u|^β}   in Ω,   u = 0 on ∂Ω,
//! ```
//!
//! with `m(s) = as + b`, and for the generic problem `−m(‖u‖ⁿ)Δₙu = f(x, u)`
//! with `f(x, t) = h(x, t) e^{|t|^{n/(n−1)}}`.

pub(crate) mod band;
pub mod error;
pub mod fibering;
pub mod grid;
pub mod io;
pub mod moser;
pub mod problem;
pub mod quadrature;
pub mod roots;
pub mod scalar;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
