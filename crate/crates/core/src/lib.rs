pub mod a3c;
pub mod autodiff;
pub mod env;
pub mod error;
pub mod frame;
pub mod gradcheck;
pub mod optim;
pub mod suites;
pub mod tensor;
pub mod trainer;
pub mod vismap;

pub use error::{Error, Result};
