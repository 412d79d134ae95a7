pub mod ambisonics;
pub mod audio;
pub mod bss_eval;
pub mod convolver;
pub mod dataset;
pub mod error;
pub mod instrument;
pub mod scene;
pub mod synth;
pub mod tasnet;
pub mod train;

pub use audio::{read_wav, write_wav, AudioBuffer, WavEncoding};
pub use error::{Error, Result};
pub use instrument::Instrument;
