pub mod decomp;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod graphon;
pub mod limits;
pub mod matrix;
pub mod sample;
pub mod spectrum;
