//! Pipeline surface around `synmap-core`: archive discovery, file
//! formats with checksums, run configuration, the evaluation harness,
//! montage rendering, the synthetic-archive writer, and the `synmap`
//! command-line tool built from those pieces.

pub mod commands;
pub mod dataio;
pub mod evalharness;
pub mod font;
pub mod formats;
pub mod runconfig;
pub mod synth;
