//! Sylvester-Hadamard matrices and the bit-domain spreading transform.
//!
//! The bit-domain transform uses the unnormalized ±1 matrix so that a block
//! of user bits maps to small integers: for `N = 2`, `w = (d1 + d2, d1 - d2)`.
//! After the affine shift by `N/2` every entry is a nonnegative integer that
//! can index a constellation label. The unitary (1/√N-scaled) matrix is only
//! used for the symbol-domain baseline, see [`HadamardMatrix::apply_unitary`].
//!
//! Entries are never stored: for the Sylvester recursion `H_{2M} = H_M ⊗ H_2`
//! the entry at `(r, c)` is `(-1)^popcount(r & c)`. [`HadamardMatrix::to_dense`]
//! expands the Kronecker recursion explicitly and is what the tests compare
//! against.

use std::ops::{Add, Sub};

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Largest supported order.
pub const MAX_ORDER: usize = 1 << 16;

/// Orders above this use the O(N log N) butterfly instead of the matrix product.
pub const FAST_TRANSFORM_ABOVE: usize = 64;

/// Largest order [`HadamardMatrix::to_dense`] will expand.
const MAX_DENSE_ORDER: usize = 4096;

/// Unnormalized Sylvester-Hadamard matrix of order `N = 2^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HadamardMatrix {
    order: usize,
}

impl HadamardMatrix {
    /// Builds the order-`order` matrix. `order` must be a power of two in `1..=2^16`.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || !order.is_power_of_two() {
            return invalid(format!("hadamard order {order} is not a power of two"));
        }
        if order > MAX_ORDER {
            return invalid(format!("hadamard order {order} exceeds maximum {MAX_ORDER}"));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Affine shift `m = N/2` applied to transformed vectors.
    pub fn shift(&self) -> i64 {
        (self.order / 2) as i64
    }

    /// Entry `(row, col)`, either `+1` or `-1`.
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> i8 {
        debug_assert!(row < self.order && col < self.order);
        if (row & col).count_ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// Expands `H_1 = [1]`, `H_{2M} = H_M ⊗ H_2` into a dense row-major matrix.
    pub fn to_dense(&self) -> Result<Vec<Vec<i8>>> {
        if self.order > MAX_DENSE_ORDER {
            return invalid(format!(
                "refusing to expand order {} densely (limit {MAX_DENSE_ORDER})",
                self.order
            ));
        }
        const H2: [[i8; 2]; 2] = [[1, 1], [1, -1]];
        let mut h = vec![vec![1i8]];
        while h.len() < self.order {
            let m = h.len();
            let mut next = vec![vec![0i8; 2 * m]; 2 * m];
            for (i, row) in h.iter().enumerate() {
                for (j, &hij) in row.iter().enumerate() {
                    for (a, h2row) in H2.iter().enumerate() {
                        for (b, &h2ab) in h2row.iter().enumerate() {
                            next[2 * i + a][2 * j + b] = hij * h2ab;
                        }
                    }
                }
            }
            h = next;
        }
        Ok(h)
    }

    /// `H·v` over integers.
    pub fn apply_i64(&self, v: &[i64]) -> Result<Vec<i64>> {
        self.apply(v)
    }

    /// `H·v` over reals.
    pub fn apply_f64(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v)
    }

    /// `(1/√N)·H·v`. The normalized matrix is symmetric and its own inverse.
    pub fn apply_unitary(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let scale = 1.0 / (self.order as f64).sqrt();
        let mut out = self.apply(v)?;
        out.iter_mut().for_each(|x| *x *= scale);
        Ok(out)
    }

    /// Matrix-product path, kept public so the butterfly can be checked against it.
    pub fn apply_by_matrix<T>(&self, v: &[T]) -> Result<Vec<T>>
    where
        T: Copy + Default + Add<Output = T> + Sub<Output = T>,
    {
        self.check_len(v.len())?;
        Ok((0..self.order)
            .map(|r| {
                v.iter().enumerate().fold(T::default(), |acc, (c, &x)| {
                    if self.entry(r, c) > 0 {
                        acc + x
                    } else {
                        acc - x
                    }
                })
            })
            .collect())
    }

    /// Butterfly path (natural / Sylvester ordering).
    pub fn apply_fast<T>(&self, v: &[T]) -> Result<Vec<T>>
    where
        T: Copy + Add<Output = T> + Sub<Output = T>,
    {
        self.check_len(v.len())?;
        let mut out = v.to_vec();
        fwht_in_place(&mut out);
        Ok(out)
    }

    fn apply<T>(&self, v: &[T]) -> Result<Vec<T>>
    where
        T: Copy + Default + Add<Output = T> + Sub<Output = T>,
    {
        if self.order > FAST_TRANSFORM_ABOVE {
            self.apply_fast(v)
        } else {
            self.apply_by_matrix(v)
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.order {
            return invalid(format!(
                "vector length {len} does not match hadamard order {}",
                self.order
            ));
        }
        Ok(())
    }
}

/// In-place fast Walsh-Hadamard transform; `v.len()` must be a power of two.
pub fn fwht_in_place<T>(v: &mut [T])
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for j in start..start + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// One bit per user for a single Hadamard block; index `k` is the user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitBlock(Vec<u8>);

impl BitBlock {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(i) = bits.iter().position(|&b| b > 1) {
            return invalid(format!("bit at index {i} is {}, expected 0 or 1", bits[i]));
        }
        Ok(Self(bits))
    }

    /// All blocks of length `n` in lexicographic order, bit 0 most significant.
    pub fn enumerate(n: usize) -> impl Iterator<Item = BitBlock> {
        assert!(n < 32);
        (0u32..1 << n).map(move |v| BitBlock((0..n).map(|k| ((v >> (n - 1 - k)) & 1) as u8).collect()))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

/// Integer Hadamard output `w` and its shifted form `w + N/2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformedVector {
    pub w: Vec<i64>,
    pub shifted: Vec<i64>,
}

/// Unsliced and sliced output of the inverse transform.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseOutput {
    pub raw: Vec<f64>,
    pub bits: BitBlock,
}

/// `w = H·d`, `w' = w + N/2`.
pub fn forward_transform(d: &BitBlock, h: &HadamardMatrix) -> Result<TransformedVector> {
    if h.order() < 2 {
        return invalid("the affine shift needs an even order (>= 2)");
    }
    let input: Vec<i64> = d.bits().iter().map(|&b| b as i64).collect();
    let w = h.apply_i64(&input)?;
    let m = h.shift();
    let shifted = w.iter().map(|x| x + m).collect();
    Ok(TransformedVector { w, shifted })
}

/// Inverse of [`forward_transform`] on possibly noisy real-valued shifted entries.
///
/// Removes the shift, computes `(1/N)·H·ŵ` and slices each entry at 0.5
/// (exactly 0.5 goes to 1).
pub fn inverse_transform(shifted: &[f64], h: &HadamardMatrix) -> Result<InverseOutput> {
    if h.order() < 2 {
        return invalid("the affine shift needs an even order (>= 2)");
    }
    let m = h.shift() as f64;
    let unshifted: Vec<f64> = shifted.iter().map(|x| x - m).collect();
    let n = h.order() as f64;
    let raw: Vec<f64> = h.apply_f64(&unshifted)?.into_iter().map(|x| x / n).collect();
    let bits = raw.iter().map(|&x| u8::from(x >= 0.5)).collect();
    Ok(InverseOutput { raw, bits: BitBlock(bits) })
}

/// Exact integer inverse for decided labels: `d̂_k = 1` iff `2·(H·ŵ)_k >= N`.
pub fn inverse_transform_labels(shifted: &[i64], h: &HadamardMatrix) -> Result<BitBlock> {
    if h.order() < 2 {
        return invalid("the affine shift needs an even order (>= 2)");
    }
    let m = h.shift();
    let unshifted: Vec<i64> = shifted.iter().map(|x| x - m).collect();
    let n = h.order() as i64;
    let num = h.apply_i64(&unshifted)?;
    Ok(BitBlock(num.into_iter().map(|x| u8::from(2 * x >= n)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(bits: &[u8]) -> BitBlock {
        BitBlock::new(bits.to_vec()).unwrap()
    }

    #[test]
    fn small_orders_match_hand_expansion() {
        assert_eq!(HadamardMatrix::new(1).unwrap().to_dense().unwrap(), vec![vec![1]]);
        assert_eq!(
            HadamardMatrix::new(2).unwrap().to_dense().unwrap(),
            vec![vec![1, 1], vec![1, -1]]
        );
        assert_eq!(
            HadamardMatrix::new(4).unwrap().to_dense().unwrap(),
            vec![
                vec![1, 1, 1, 1],
                vec![1, -1, 1, -1],
                vec![1, 1, -1, -1],
                vec![1, -1, -1, 1],
            ]
        );
    }

    #[test]
    fn rejects_bad_orders() {
        for order in [0, 3, 6, 12, MAX_ORDER * 2] {
            assert!(matches!(HadamardMatrix::new(order), Err(crate::Error::InvalidArgument(_))));
        }
        assert!(HadamardMatrix::new(MAX_ORDER).is_ok());
    }

    #[test]
    fn entry_formula_matches_kronecker_expansion() {
        for p in 0..=8 {
            let h = HadamardMatrix::new(1 << p).unwrap();
            let dense = h.to_dense().unwrap();
            for (r, row) in dense.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    assert_eq!(h.entry(r, c), v, "order {} ({r},{c})", h.order());
                }
            }
        }
    }

    #[test]
    fn forward_examples() {
        let h2 = HadamardMatrix::new(2).unwrap();
        let t = forward_transform(&block(&[1, 0]), &h2).unwrap();
        assert_eq!(t.w, vec![1, 1]);
        assert_eq!(t.shifted, vec![2, 2]);
        let t = forward_transform(&block(&[0, 0]), &h2).unwrap();
        assert_eq!((t.w, t.shifted), (vec![0, 0], vec![1, 1]));

        let h4 = HadamardMatrix::new(4).unwrap();
        let t = forward_transform(&block(&[1, 1, 0, 1]), &h4).unwrap();
        assert_eq!(t.w, vec![3, -1, 1, 1]);
        assert_eq!(t.shifted, vec![5, 1, 3, 3]);
    }

    #[test]
    fn inverse_examples() {
        let h2 = HadamardMatrix::new(2).unwrap();
        let out = inverse_transform(&[2.0, 2.0], &h2).unwrap();
        assert_eq!(out.bits.bits(), &[1, 0]);

        let h4 = HadamardMatrix::new(4).unwrap();
        let out = inverse_transform(&[5.0, 1.0, 3.0, 3.0], &h4).unwrap();
        assert_eq!(out.bits.bits(), &[1, 1, 0, 1]);
        assert_eq!(inverse_transform_labels(&[5, 1, 3, 3], &h4).unwrap().bits(), &[1, 1, 0, 1]);

        let out = inverse_transform(&[2.4, 1.6], &h2).unwrap();
        assert!((out.raw[0] - 1.0).abs() < 1e-12);
        assert!((out.raw[1] - 0.4).abs() < 1e-12);
        assert_eq!(out.bits.bits(), &[1, 0]);
    }

    #[test]
    fn slicer_tie_goes_to_one() {
        let h2 = HadamardMatrix::new(2).unwrap();
        // raw = (1/2)(w1 + w2, w1 - w2) with w = (1, 0) -> (0.5, 0.5)
        let out = inverse_transform(&[2.0, 1.0], &h2).unwrap();
        assert_eq!(out.raw, vec![0.5, 0.5]);
        assert_eq!(out.bits.bits(), &[1, 1]);
        assert_eq!(inverse_transform_labels(&[2, 1], &h2).unwrap().bits(), &[1, 1]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let h4 = HadamardMatrix::new(4).unwrap();
        assert!(forward_transform(&block(&[1, 0]), &h4).is_err());
        assert!(inverse_transform(&[1.0; 3], &h4).is_err());
        assert!(inverse_transform_labels(&[1; 8], &h4).is_err());
        assert!(BitBlock::new(vec![0, 2]).is_err());
    }

    #[test]
    fn unitary_two_by_two() {
        let h2 = HadamardMatrix::new(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let out = h2
            .apply_unitary(&[Complex64::new(s, s), Complex64::new(s, -s)])
            .unwrap();
        assert!((out[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((out[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }
}
