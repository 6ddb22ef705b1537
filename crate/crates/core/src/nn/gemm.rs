//! Matrix-multiply entry point for all convolution/linear kernels.
//!
//! Large products are split along the output-column axis across the rayon
//! pool. Each output element is still produced by a single `dot` call over
//! the full inner dimension, so results do not depend on the split.

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

/// Work threshold (multiply-accumulates) below which splitting is not worth
/// the scheduling overhead.
const PAR_MIN_MACS: usize = 1 << 22;
const MIN_COLS_PER_CHUNK: usize = 256;

/// `dot` may hand back a column-major result when an operand is
/// transposed; downstream reshapes need C order.
fn standardize(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

pub fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let n = b.ncols();
    let macs = m * k * n;
    let threads = rayon::current_num_threads();
    if macs < PAR_MIN_MACS || threads < 2 || n < 2 * MIN_COLS_PER_CHUNK {
        return standardize(a.dot(&b));
    }
    let nchunks = threads.min(n / MIN_COLS_PER_CHUNK).max(1);
    let chunk = n.div_ceil(nchunks);
    let parts: Vec<Array2<f64>> = (0..nchunks)
        .into_par_iter()
        .map(|i| {
            let lo = i * chunk;
            let hi = ((i + 1) * chunk).min(n);
            standardize(a.dot(&b.slice(s![.., lo..hi])))
        })
        .collect();
    let mut out = Array2::<f64>::zeros((m, n));
    let mut lo = 0;
    for part in parts {
        let hi = lo + part.ncols();
        out.slice_mut(s![.., lo..hi]).assign(&part);
        lo = hi;
    }
    out
}
