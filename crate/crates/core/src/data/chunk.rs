use crate::error::{Error, Result};
use crate::sequence::PoseSequence;

/// Window start frames for a sequence of `len` frames: multiples of
/// `stride`, plus a final window aligned to the end if the last regular one
/// stops short.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if window == 0 || stride == 0 || stride > window {
        return Err(Error::Config(format!(
            "window {window} with stride {stride}: need 1 ≤ stride ≤ window"
        )));
    }
    if len < window {
        return Err(Error::Shape(format!("{len} frames is shorter than the window {window}")));
    }
    let mut starts: Vec<usize> = (0..=len - window).step_by(stride).collect();
    if starts.last() != Some(&(len - window)) {
        starts.push(len - window);
    }
    Ok(starts)
}

/// Fixed-length windows covering every frame of `seq`, in start order.
pub fn chunk(seq: &PoseSequence, window: usize, stride: usize) -> Result<Vec<PoseSequence>> {
    window_starts(seq.frames(), window, stride)?
        .into_iter()
        .map(|s| seq.slice_frames(s, window))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_windows() {
        assert_eq!(window_starts(36, 24, 12).unwrap(), vec![0, 12]);
        assert_eq!(window_starts(24, 24, 24).unwrap(), vec![0]);
        assert_eq!(window_starts(30, 24, 12).unwrap(), vec![0, 6]);
        assert_eq!(window_starts(48, 24, 24).unwrap(), vec![0, 24]);
        assert_eq!(window_starts(48, 24, 12).unwrap(), vec![0, 12, 24]);
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(window_starts(10, 24, 12), Err(Error::Shape(_))));
        assert!(matches!(window_starts(30, 24, 0), Err(Error::Config(_))));
        assert!(matches!(window_starts(30, 24, 25), Err(Error::Config(_))));
    }

    #[test]
    fn chunks_carry_frames() {
        let seq = PoseSequence::from_fn(30, 2, |f, j| [f as f64, j as f64]).unwrap();
        let parts = chunk(&seq, 24, 12).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[1].position(0, 0), [6.0, 0.0]);
        assert_eq!(parts[1].frames(), 24);
    }

    proptest! {
        #[test]
        fn windows_cover_every_frame(half in 1usize..16, extra in 0usize..60) {
            let window = 2 * half;
            let len = window + extra;
            let starts = window_starts(len, window, half).unwrap();
            let mut cover = vec![0usize; len];
            for s in &starts {
                for c in &mut cover[*s..*s + window] {
                    *c += 1;
                }
            }
            prop_assert!(cover.iter().all(|&c| c >= 1));
            if len % half == 0 {
                // Regular half-overlap tiling: interior frames are covered twice.
                prop_assert!(cover[half..len - half].iter().all(|&c| c == 2));
            }
        }
    }
}
