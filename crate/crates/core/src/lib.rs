pub mod audio_io;
pub mod dsp;
pub mod error;
pub mod segmentation;
pub mod embedding;
pub mod analytics;
pub mod fixtures;
pub mod pipeline;
