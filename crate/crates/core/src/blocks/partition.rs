//! Block partition and reassembly for the LAF module.

use ndarray::{s, Array3};

use crate::error::{Error, Result};

/// Row-major grid of equally-sized multi-channel image blocks.
#[derive(Debug, Clone)]
pub struct BlockGrid {
    pub rows: usize,
    pub cols: usize,
    pub block_size: usize,
    pub blocks: Vec<Array3<f64>>,
}

/// Split a `(channels, H, W)` image into a grid of `block_size`-square
/// blocks. Non-divisible dimensions are rejected; no padding is applied.
pub fn partition_blocks(image: &Array3<f64>, block_size: usize) -> Result<BlockGrid> {
    let (_, h, w) = image.dim();
    if block_size == 0 {
        return Err(Error::Config("block_size must be positive".into()));
    }
    if h % block_size != 0 {
        return Err(Error::Divisibility {
            op: "partition_blocks",
            size: h,
            divisor: block_size,
        });
    }
    if w % block_size != 0 {
        return Err(Error::Divisibility {
            op: "partition_blocks",
            size: w,
            divisor: block_size,
        });
    }
    let rows = h / block_size;
    let cols = w / block_size;
    let mut blocks = Vec::with_capacity(rows * cols);
    for by in 0..rows {
        for bx in 0..cols {
            let y0 = by * block_size;
            let x0 = bx * block_size;
            blocks.push(
                image
                    .slice(s![.., y0..y0 + block_size, x0..x0 + block_size])
                    .to_owned(),
            );
        }
    }
    Ok(BlockGrid {
        rows,
        cols,
        block_size,
        blocks,
    })
}

/// Place blocks back at their original positions. Exact inverse of
/// [`partition_blocks`].
pub fn reassemble_blocks(grid: &BlockGrid) -> Result<Array3<f64>> {
    if grid.blocks.len() != grid.rows * grid.cols {
        return Err(Error::shape(
            "reassemble_blocks",
            format!(
                "{} blocks for a {}x{} grid",
                grid.blocks.len(),
                grid.rows,
                grid.cols
            ),
        ));
    }
    let channels = grid
        .blocks
        .first()
        .map(|b| b.dim().0)
        .ok_or_else(|| Error::shape("reassemble_blocks", "empty grid"))?;
    let bs = grid.block_size;
    for (i, b) in grid.blocks.iter().enumerate() {
        if b.dim() != (channels, bs, bs) {
            return Err(Error::shape(
                "reassemble_blocks",
                format!("block {i} has shape {:?}, expected ({channels}, {bs}, {bs})", b.dim()),
            ));
        }
    }
    let mut image = Array3::<f64>::zeros((channels, grid.rows * bs, grid.cols * bs));
    for by in 0..grid.rows {
        for bx in 0..grid.cols {
            let y0 = by * bs;
            let x0 = bx * bs;
            image
                .slice_mut(s![.., y0..y0 + bs, x0..x0 + bs])
                .assign(&grid.blocks[by * grid.cols + bx]);
        }
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    #[test]
    fn full_resolution_grid_shapes() {
        let img = Array3::<f64>::zeros((2, 256, 256));
        let grid = partition_blocks(&img, 128).unwrap();
        assert_eq!((grid.rows, grid.cols), (2, 2));
        assert_eq!(grid.blocks.len(), 4);
        assert_eq!(grid.blocks[0].dim(), (2, 128, 128));

        let single = partition_blocks(&img, 256).unwrap();
        assert_eq!((single.rows, single.cols), (1, 1));
    }

    #[test]
    fn non_divisible_rejected() {
        let img = Array3::<f64>::zeros((1, 250, 250));
        assert!(matches!(
            partition_blocks(&img, 128),
            Err(Error::Divisibility { .. })
        ));
    }

    #[test]
    fn single_block_grid_reassembles_to_itself() {
        let img = Array3::from_shape_fn((1, 4, 4), |(_, y, x)| (y * 4 + x) as f64);
        let grid = partition_blocks(&img, 4).unwrap();
        assert_eq!(reassemble_blocks(&grid).unwrap(), img);
    }

    #[test]
    fn constant_blocks_land_in_row_major_quadrants() {
        let grid = BlockGrid {
            rows: 2,
            cols: 2,
            block_size: 2,
            blocks: (0..4)
                .map(|i| Array3::from_elem((1, 2, 2), i as f64))
                .collect(),
        };
        let img = reassemble_blocks(&grid).unwrap();
        assert_eq!(img[[0, 0, 0]], 0.0);
        assert_eq!(img[[0, 0, 2]], 1.0);
        assert_eq!(img[[0, 2, 0]], 2.0);
        assert_eq!(img[[0, 3, 3]], 3.0);
    }

    #[test]
    fn inconsistent_block_shapes_rejected() {
        let grid = BlockGrid {
            rows: 1,
            cols: 2,
            block_size: 2,
            blocks: vec![Array3::zeros((1, 2, 2)), Array3::zeros((1, 3, 3))],
        };
        assert!(reassemble_blocks(&grid).is_err());
    }

    proptest! {
        #[test]
        fn partition_reassemble_round_trip(
            channels in 1usize..3,
            blocks_y in 1usize..5,
            blocks_x in 1usize..5,
            bs in prop::sample::select(vec![1usize, 2, 4, 8]),
            seed in 0u64..1000,
        ) {
            let h = blocks_y * bs;
            let w = blocks_x * bs;
            let img = Array3::from_shape_fn((channels, h, w), |(c, y, x)| {
                ((c as u64 * 7919 + y as u64 * 31 + x as u64 * 17 + seed) % 1000) as f64 * 0.013
            });
            let grid = partition_blocks(&img, bs).unwrap();
            let back = reassemble_blocks(&grid).unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
