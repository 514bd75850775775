//! WAV files and model checkpoints.

mod checkpoint;
mod wav;

use std::fs::File;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::Result;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use wav::{quantize_pcm16, read_wav, read_wav_any_rate, write_wav, AudioClip, MODEL_SAMPLE_RATE};

/// Writes through a temporary file in the target directory and renames it
/// over `path` only once `write` succeeded.
pub(crate) fn atomic_write(path: &Path, write: impl FnOnce(&File) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir)?;
    write(tmp.as_file())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
