// The training tape frees and reallocates hundreds of multi-hundred-kB
// buffers every epoch; glibc malloc serves those with mmap/munmap.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod report;

pub use config::{Method, Overrides, Preset, RunConfig};
pub use error::AppError;
