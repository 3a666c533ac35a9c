//! Bit-packed GF(2) matrices: rank by Gaussian elimination and
//! matrix-vector products used as independent checks on the sparse path.

/// Dense binary matrix with 64 columns packed per word.
#[derive(Debug, Clone)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            words_per_row,
            data: vec![0; rows * words_per_row],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let w = r * self.words_per_row + c / 64;
        let bit = 1u64 << (c % 64);
        if v {
            self.data[w] |= bit;
        } else {
            self.data[w] &= !bit;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.words_per_row + c / 64] >> (c % 64) & 1 == 1
    }

    pub fn flip(&mut self, r: usize, c: usize) {
        let w = r * self.words_per_row + c / 64;
        self.data[w] ^= 1u64 << (c % 64);
    }

    /// Rank over GF(2), by row-reduction on a working copy.
    pub fn rank(&self) -> usize {
        let mut m = self.data.clone();
        let wpr = self.words_per_row;
        let mut rank = 0;
        for col in 0..self.cols {
            let word = col / 64;
            let bit = 1u64 << (col % 64);
            // find a pivot row at or below `rank`
            let Some(pivot) = (rank..self.rows).find(|&r| m[r * wpr + word] & bit != 0) else {
                continue;
            };
            if pivot != rank {
                for w in 0..wpr {
                    m.swap(pivot * wpr + w, rank * wpr + w);
                }
            }
            for r in 0..self.rows {
                if r != rank && m[r * wpr + word] & bit != 0 {
                    for w in word..wpr {
                        m[r * wpr + w] ^= m[rank * wpr + w];
                    }
                }
            }
            rank += 1;
            if rank == self.rows {
                break;
            }
        }
        rank
    }

    /// Matrix-vector product over GF(2); `v` holds one bit per entry.
    pub fn mul_vec(&self, v: &[u8]) -> Vec<u8> {
        assert_eq!(v.len(), self.cols);
        let mut packed = vec![0u64; self.words_per_row];
        for (c, &b) in v.iter().enumerate() {
            if b & 1 == 1 {
                packed[c / 64] |= 1 << (c % 64);
            }
        }
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.words_per_row..(r + 1) * self.words_per_row];
                let acc = row
                    .iter()
                    .zip(&packed)
                    .fold(0u64, |acc, (a, b)| acc ^ (a & b));
                (acc.count_ones() & 1) as u8
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_full_rank() {
        let mut m = BitMatrix::zeros(5, 5);
        for i in 0..5 {
            m.set(i, i, true);
        }
        assert_eq!(m.rank(), 5);
    }

    #[test]
    fn duplicate_rows_drop_rank() {
        let mut m = BitMatrix::zeros(3, 4);
        for c in [0, 2] {
            m.set(0, c, true);
            m.set(2, c, true);
        }
        m.set(1, 1, true);
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn mul_vec_matches_manual_xor() {
        let mut m = BitMatrix::zeros(2, 70);
        m.set(0, 0, true);
        m.set(0, 69, true);
        m.set(1, 69, true);
        let mut v = vec![0u8; 70];
        v[0] = 1;
        v[69] = 1;
        assert_eq!(m.mul_vec(&v), vec![0, 1]);
    }

    #[test]
    fn rank_of_wide_random_matrix_is_row_count() {
        // rows deliberately independent: unit vectors plus noise
        let mut m = BitMatrix::zeros(8, 100);
        for r in 0..8 {
            m.set(r, r, true);
            m.set(r, 50 + ((r * 7) % 40), true);
        }
        assert_eq!(m.rank(), 8);
    }
}
