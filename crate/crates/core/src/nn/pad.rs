//! Reflection padding (mirror without repeating the edge sample).

use ndarray::Array3;

fn mirror(i: isize, len: usize) -> usize {
    let len = len as isize;
    let m = if i < 0 {
        -i
    } else if i >= len {
        2 * len - 2 - i
    } else {
        i
    };
    m as usize
}

pub fn reflect_pad(x: &Array3<f64>, pad: usize) -> Array3<f64> {
    let (c, h, w) = x.dim();
    assert!(pad < h && pad < w, "reflection pad must be smaller than the image");
    let mut y = Array3::<f64>::zeros((c, h + 2 * pad, w + 2 * pad));
    for ci in 0..c {
        for oy in 0..h + 2 * pad {
            let iy = mirror(oy as isize - pad as isize, h);
            for ox in 0..w + 2 * pad {
                let ix = mirror(ox as isize - pad as isize, w);
                y[[ci, oy, ox]] = x[[ci, iy, ix]];
            }
        }
    }
    y
}

/// Adjoint of [`reflect_pad`]: fold padded-gradient contributions back onto
/// their mirrored source positions.
pub fn reflect_pad_backward(gy: &Array3<f64>, pad: usize, h: usize, w: usize) -> Array3<f64> {
    let (c, ph, pw) = gy.dim();
    debug_assert_eq!((ph, pw), (h + 2 * pad, w + 2 * pad));
    let mut gx = Array3::<f64>::zeros((c, h, w));
    for ci in 0..c {
        for oy in 0..ph {
            let iy = mirror(oy as isize - pad as isize, h);
            for ox in 0..pw {
                let ix = mirror(ox as isize - pad as isize, w);
                gx[[ci, iy, ix]] += gy[[ci, oy, ox]];
            }
        }
    }
    gx
}
