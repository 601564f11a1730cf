use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Frame;

/// Parses `frame_<digits>.<png|pgm>` and returns the numeric index.
fn frame_index_from_name(name: &str) -> Option<u64> {
    let stem = name.strip_prefix("frame_")?;
    let (digits, ext) = stem.rsplit_once('.')?;
    let ext = ext.to_ascii_lowercase();
    if ext != "png" && ext != "pgm" {
        return None;
    }
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn frame_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    if !dir.exists() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some(index) = name.to_str().and_then(frame_index_from_name) {
            files.push((index, entry.path()));
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_frame(path: &Path, index: usize) -> Result<Frame> {
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    Frame::new(index, w, h, gray.into_raw())
}

/// Loads every `frame_<index>.png|pgm` in `dir`, ordered by index and
/// re-indexed from 0. All frames must share one size.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let dir = dir.as_ref();
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for (i, (_, path)) in files.iter().enumerate() {
        let frame = load_frame(path, i)?;
        if let Some(first) = frames.first() {
            if first.size() != frame.size() {
                return Err(Error::DimensionMismatch {
                    expected: (first.width(), first.height()),
                    found: (frame.width(), frame.height()),
                    context: path.display().to_string(),
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes frames as `frame_<index>.png`, zero-padded to at least three digits.
pub fn write_sequence(dir: impl AsRef<Path>, frames: &[Frame]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let last = frames.iter().map(|f| f.index).max().unwrap_or(0);
    let pad = last.to_string().len().max(3);
    for frame in frames {
        let path = dir.join(format!("frame_{:0pad$}.png", frame.index));
        image::save_buffer(
            &path,
            frame.pixels(),
            frame.width(),
            frame.height(),
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(index: usize, w: u32, h: u32) -> Frame {
        let px = (0..w * h).map(|i| ((i as usize + index) % 256) as u8).collect();
        Frame::new(index, w, h, px).unwrap()
    }

    #[test]
    fn name_parsing() {
        assert_eq!(frame_index_from_name("frame_007.png"), Some(7));
        assert_eq!(frame_index_from_name("frame_12.PGM"), Some(12));
        assert_eq!(frame_index_from_name("frame_.png"), None);
        assert_eq!(frame_index_from_name("frame_01.jpg"), None);
        assert_eq!(frame_index_from_name("img_01.png"), None);
    }

    #[test]
    fn round_trip_25_frames() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = (0..25).map(|i| gradient(i, 32, 24)).collect();
        write_sequence(dir.path(), &frames).unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.len(), 25);
        for (i, f) in loaded.iter().enumerate() {
            assert_eq!(f.index, i);
            assert_eq!(f, &frames[i]);
        }
    }

    #[test]
    fn indices_are_rebased() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = [3usize, 10, 11].iter().map(|&i| gradient(i, 8, 8)).collect();
        write_sequence(dir.path(), &frames).unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.iter().map(|f| f.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(loaded[2].pixels(), frames[2].pixels());
    }

    #[test]
    fn pgm_frames_load() {
        let dir = tempfile::tempdir().unwrap();
        let f = gradient(0, 5, 4);
        image::save_buffer(
            dir.path().join("frame_000.pgm"),
            f.pixels(),
            5,
            4,
            image::ExtendedColorType::L8,
        )
        .unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded[0].pixels(), f.pixels());
    }

    #[test]
    fn empty_directory_has_no_frames() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(err.to_string().ends_with("no frames"), "{err}");
    }

    #[test]
    fn missing_directory() {
        let err = load_sequence("/definitely/not/here").unwrap_err();
        assert!(err.is_missing_input());
    }

    #[test]
    fn mixed_sizes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_sequence(dir.path(), &[gradient(0, 768, 576)]).unwrap();
        let small = gradient(1, 100, 100);
        write_sequence(dir.path(), &[small]).unwrap();
        match load_sequence(dir.path()) {
            Err(Error::DimensionMismatch { expected, found, .. }) => {
                assert_eq!(expected, (768, 576));
                assert_eq!(found, (100, 100));
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
    }
}
