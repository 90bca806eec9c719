//! Minimal dense autodiff used by the classifier and the generators.

pub mod matrix;
pub mod optim;
pub mod params;
pub mod tape;

pub use matrix::Matrix;
pub use optim::Adam;
pub use params::{glorot, uniform, Grads, ParamId, ParamSet};
pub use tape::{Tape, Var};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
