//! Dense row-major matrices, T-by-T tiling with boundary zero padding, and
//! the padding units that turn tiles into skewed systolic input streams.

use crate::scalar::Scalar;

/// Dense row-major matrix over either datapath scalar.
#[derive(Clone, PartialEq, Debug)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn filled(rows: usize, cols: usize, fill: S) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![fill; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> crate::Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(crate::Error::DimMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Identity matrix; `exemplar` supplies the element format.
    pub fn identity_like(n: usize, exemplar: S) -> Self {
        let mut m = Self::filled(n, n, exemplar.zero_like());
        for i in 0..n {
            m.set(i, i, exemplar.one_like());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    /// An exemplar element, used to mint zeros/ones of the right format.
    pub fn exemplar(&self) -> S {
        self.data[0]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::filled(self.cols, self.rows, self.data[0].zero_like());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Largest absolute difference against another matrix, on the
    /// instrumentation path.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// One T-by-T block of a tiled matrix. Entries outside the valid region are
/// exactly zero.
#[derive(Clone, PartialEq, Debug)]
pub struct Tile<S> {
    t: usize,
    values: Vec<S>,
    block_row: usize,
    block_col: usize,
    valid_rows: usize,
    valid_cols: usize,
}

impl<S: Scalar> Tile<S> {
    pub fn zero(t: usize, block_row: usize, block_col: usize, exemplar: S) -> Self {
        Self {
            t,
            values: vec![exemplar.zero_like(); t * t],
            block_row,
            block_col,
            valid_rows: 0,
            valid_cols: 0,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.values[r * self.t + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize, v: S) {
        self.values[r * self.t + c] = v;
    }

    pub fn origin(&self) -> (usize, usize) {
        (self.block_row, self.block_col)
    }

    pub(crate) fn set_origin(&mut self, block_row: usize, block_col: usize) {
        self.block_row = block_row;
        self.block_col = block_col;
    }

    pub fn valid_rows(&self) -> usize {
        self.valid_rows
    }

    pub fn valid_cols(&self) -> usize {
        self.valid_cols
    }

    pub(crate) fn set_valid(&mut self, rows: usize, cols: usize) {
        self.valid_rows = rows;
        self.valid_cols = cols;
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }
}

/// A matrix partitioned into T-by-T tiles, boundary tiles zero padded.
#[derive(Clone, Debug)]
pub struct TiledMatrix<S> {
    rows: usize,
    cols: usize,
    t: usize,
    grid_rows: usize,
    grid_cols: usize,
    tiles: Vec<Tile<S>>,
}

/// Partition `m` into ceil(rows/t) x ceil(cols/t) tiles.
pub fn tile<S: Scalar>(m: &Matrix<S>, t: usize) -> crate::Result<TiledMatrix<S>> {
    if t == 0 {
        return Err(crate::Error::InvalidConfig("tile size must be at least 1".into()));
    }
    let grid_rows = m.rows().div_ceil(t);
    let grid_cols = m.cols().div_ceil(t);
    let exemplar = m.exemplar();
    let mut tiles = Vec::with_capacity(grid_rows * grid_cols);
    for br in 0..grid_rows {
        for bc in 0..grid_cols {
            let valid_rows = t.min(m.rows() - br * t);
            let valid_cols = t.min(m.cols() - bc * t);
            let mut tile = Tile::zero(t, br, bc, exemplar);
            tile.set_valid(valid_rows, valid_cols);
            for r in 0..valid_rows {
                for c in 0..valid_cols {
                    tile.set(r, c, m.get(br * t + r, bc * t + c));
                }
            }
            tiles.push(tile);
        }
    }
    Ok(TiledMatrix { rows: m.rows(), cols: m.cols(), t, grid_rows, grid_cols, tiles })
}

impl<S: Scalar> TiledMatrix<S> {
    /// Empty (all-zero) tiling of the given source shape.
    pub fn zeros(rows: usize, cols: usize, t: usize, exemplar: S) -> Self {
        let grid_rows = rows.div_ceil(t);
        let grid_cols = cols.div_ceil(t);
        let mut tiles = Vec::with_capacity(grid_rows * grid_cols);
        for br in 0..grid_rows {
            for bc in 0..grid_cols {
                let mut tile = Tile::zero(t, br, bc, exemplar);
                tile.set_valid(t.min(rows - br * t), t.min(cols - bc * t));
                tiles.push(tile);
            }
        }
        Self { rows, cols, t, grid_rows, grid_cols, tiles }
    }

    pub fn source_rows(&self) -> usize {
        self.rows
    }

    pub fn source_cols(&self) -> usize {
        self.cols
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    pub fn tile_at(&self, block_row: usize, block_col: usize) -> &Tile<S> {
        &self.tiles[block_row * self.grid_cols + block_col]
    }

    pub fn set_tile(&mut self, tile: Tile<S>) {
        let (br, bc) = tile.origin();
        self.tiles[br * self.grid_cols + bc] = tile;
    }

    pub fn tiles(&self) -> &[Tile<S>] {
        &self.tiles
    }

    /// Local tile address within this operand: block_row * grid_cols + block_col.
    pub fn tile_addr(&self, block_row: usize, block_col: usize) -> u64 {
        (block_row * self.grid_cols + block_col) as u64
    }

    /// Reassemble the source matrix, cropping the zero padding.
    pub fn reassemble(&self) -> Matrix<S> {
        let exemplar = self.tiles[0].values[0];
        let mut m = Matrix::filled(self.rows, self.cols, exemplar.zero_like());
        for tile in &self.tiles {
            let (br, bc) = tile.origin();
            for r in 0..tile.valid_rows() {
                for c in 0..tile.valid_cols() {
                    m.set(br * self.t + r, bc * self.t + c, tile.get(r, c));
                }
            }
        }
        m
    }
}

/// One slot of a skewed lane: carried value plus whether the slot holds a
/// tile element (as opposed to alignment padding).
pub type Slot<S> = (S, bool);

/// Per-lane skewed ("parallelogram") input profile for a systolic array.
/// Lane `i` carries `i` leading alignment zeros, then the tile data, then
/// trailing zeros so every lane has the same slot count.
#[derive(Clone, Debug)]
pub struct SkewedStream<S> {
    lanes: Vec<Vec<Slot<S>>>,
}

impl<S: Scalar> SkewedStream<S> {
    pub fn lane_count(&self) -> usize {
        self.lanes.len()
    }

    pub fn total_slots(&self) -> usize {
        self.lanes[0].len()
    }

    pub fn slot(&self, lane: usize, time: usize) -> Slot<S> {
        self.lanes[lane].get(time).copied().unwrap_or_else(|| {
            // Past the end of the stream the lane idles on zeros.
            (self.lanes[lane][0].0.zero_like(), false)
        })
    }

    /// Append another tile's stream back-to-back (its data slots follow this
    /// stream's data slots with no drain gap), as block streaming feeds them.
    pub fn concat(&self, next: &SkewedStream<S>) -> SkewedStream<S> {
        assert_eq!(self.lane_count(), next.lane_count());
        let t = self.lane_count();
        let lanes = (0..t)
            .map(|lane| {
                let mut slots: Vec<Slot<S>> = self.lanes[lane]
                    .iter()
                    .chain(next.lanes[lane].iter())
                    .filter(|(_, valid)| *valid)
                    .copied()
                    .collect();
                let data = slots.len();
                let zero = slots[0].0.zero_like();
                let mut lane_slots = vec![(zero, false); lane];
                lane_slots.append(&mut slots);
                lane_slots.extend(std::iter::repeat_n((zero, false), t - 1 - lane));
                debug_assert_eq!(lane_slots.len(), lane + data + t - 1 - lane);
                lane_slots
            })
            .collect();
        SkewedStream { lanes }
    }
}

fn skew<S: Scalar>(tile: &Tile<S>, element: impl Fn(usize, usize) -> S) -> SkewedStream<S> {
    let t = tile.t();
    let zero = tile.get(0, 0).zero_like();
    let lanes = (0..t)
        .map(|lane| {
            let mut slots = vec![(zero, false); lane];
            slots.extend((0..t).map(|k| (element(lane, k), true)));
            slots.extend(std::iter::repeat_n((zero, false), t - 1 - lane));
            slots
        })
        .collect();
    SkewedStream { lanes }
}

/// LHS profile: lane `i` streams row `i` of the tile along its columns,
/// delayed by `i` cycles.
pub fn mpu_skew_lhs<S: Scalar>(tile: &Tile<S>) -> SkewedStream<S> {
    skew(tile, |lane, k| tile.get(lane, k))
}

/// RHS profile: lane `j` streams column `j` of the tile along its rows,
/// delayed by `j` cycles.
pub fn mpu_skew_rhs<S: Scalar>(tile: &Tile<S>) -> SkewedStream<S> {
    skew(tile, |lane, k| tile.get(k, lane))
}
