//! Dense arrays, the op set the model needs, and a recording tape for
//! reverse-mode differentiation.

mod array;
pub mod gradcheck;
pub mod ops;
mod tape;

pub use array::Array;
pub use ops::ConvSpec;
pub use tape::{Function, Gradients, Tape, Var};
