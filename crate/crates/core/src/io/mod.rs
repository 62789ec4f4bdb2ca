//! Binary containers, PGM images and CSV helpers.

mod bytes;
pub mod container;
pub mod pgm;

pub use container::{
    load_basis, load_rom, load_snapshots, read_basis, read_rom, read_snapshots, save_basis, save_rom,
    save_snapshots, write_basis, write_rom, write_snapshots,
};
pub use pgm::{read_pgm, write_pgm, write_pair};
