pub mod checkpoint;
pub mod nn;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use tape::{NodeId, Tape};
pub use tensor::{Tensor, TensorError};
