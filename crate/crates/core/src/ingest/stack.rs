use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use tiff::encoder::{colortype, TiffEncoder};

use crate::error::{Error, Result};
use crate::model::Frame;

/// `2k + 1` temporally ordered frames centered on one frame, the input a
/// motion-aware detector sees.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedInput {
    pub center_index: usize,
    pub k: usize,
    pub channels: Vec<Frame>,
}

impl StackedInput {
    pub fn middle(&self) -> &Frame {
        &self.channels[self.k]
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

/// Index of the frame used for temporal offset `offset` around `center` in a
/// video of `len` frames. Unavailable neighbours repeat the nearest frame.
pub fn clamped_index(len: usize, center: usize, offset: isize) -> usize {
    let idx = center as isize + offset;
    idx.clamp(0, len as isize - 1) as usize
}

pub fn stack_frames(frames: &[Frame], center: usize, n: usize) -> Result<StackedInput> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "channel count must be odd and positive, got {n}"
        )));
    }
    if center >= frames.len() {
        return Err(Error::InvalidArgument(format!(
            "center {center} outside a video of {} frames",
            frames.len()
        )));
    }
    let k = (n - 1) / 2;
    let channels = (-(k as isize)..=k as isize)
        .map(|off| frames[clamped_index(frames.len(), center, off)].clone())
        .collect();
    Ok(StackedInput {
        center_index: frames[center].index,
        k,
        channels,
    })
}

/// Writes the stack as a multi-page 8-bit TIFF, one page per channel in
/// temporal order.
pub fn write_stack_tiff(path: impl AsRef<Path>, stack: &StackedInput) -> Result<()> {
    let path = path.as_ref();
    let tiff_err = |source| Error::Tiff {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = TiffEncoder::new(BufWriter::new(file)).map_err(tiff_err)?;
    for ch in &stack.channels {
        encoder
            .write_image::<colortype::Gray8>(ch.width(), ch.height(), ch.pixels())
            .map_err(tiff_err)?;
    }
    Ok(())
}

pub fn stack_file_name(center: usize) -> String {
    format!("stack_{center}.tiff")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(len: usize) -> Vec<Frame> {
        (0..len)
            .map(|i| Frame::filled(i, 4, 3, i as u8).unwrap())
            .collect()
    }

    fn indices(s: &StackedInput) -> Vec<usize> {
        s.channels.iter().map(|f| f.index).collect()
    }

    #[test]
    fn single_channel_is_identity() {
        let v = video(25);
        let s = stack_frames(&v, 7, 1).unwrap();
        assert_eq!(indices(&s), vec![7]);
        assert_eq!(s.middle(), &v[7]);
    }

    #[test]
    fn edges_repeat_nearest_frame() {
        let v = video(25);
        assert_eq!(indices(&stack_frames(&v, 0, 3).unwrap()), vec![0, 0, 1]);
        assert_eq!(indices(&stack_frames(&v, 2, 5).unwrap()), vec![0, 1, 2, 3, 4]);
        assert_eq!(indices(&stack_frames(&v, 24, 3).unwrap()), vec![23, 24, 24]);
    }

    #[test]
    fn rejects_even_or_out_of_range() {
        let v = video(5);
        assert!(stack_frames(&v, 0, 2).is_err());
        assert!(stack_frames(&v, 0, 0).is_err());
        assert!(stack_frames(&v, 5, 3).is_err());
    }

    #[test]
    fn tiff_has_one_page_per_channel() {
        let v = video(5);
        let s = stack_frames(&v, 0, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(stack_file_name(0));
        write_stack_tiff(&path, &s).unwrap();

        let mut decoder = tiff::decoder::Decoder::new(File::open(&path).unwrap()).unwrap();
        let mut pages = Vec::new();
        loop {
            match decoder.read_image().unwrap() {
                tiff::decoder::DecodingResult::U8(px) => pages.push(px[0]),
                other => panic!("unexpected sample type {other:?}"),
            }
            if !decoder.more_images() {
                break;
            }
            decoder.next_image().unwrap();
        }
        assert_eq!(pages, vec![0, 0, 0, 1, 2]);
    }
}
