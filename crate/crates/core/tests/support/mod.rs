pub mod gen;
pub mod sequences;
