//! Image files, procedural toy irises, manifests and checkpoints.

mod checkpoint;
mod io;
mod manifest;
mod toy;

pub use checkpoint::{Checkpoint, NamedTensor, MAGIC, VERSION};
pub use io::{decode_pgm, encode_pgm, read_image, read_pgm, read_png, write_image, write_pgm, write_png};
pub use manifest::{Manifest, ManifestRow, SampleClass};
pub use toy::{
    print_attack, rubber_sheet_coords, toy_iris, toy_pool, IrisTexture, ToyIrisSpec, ToyRanges, ToySample,
};

#[cfg(test)]
mod tests;
