//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;

pub fn det(m: &Matrix) -> f64 {
    m.clone().lu().determinant()
}

/// Solves `m x = b` column-wise; `None` when `m` is exactly singular.
pub fn solve(m: &Matrix, b: &Matrix) -> Option<Matrix> {
    m.clone().lu().solve(b)
}

/// `b m^{-1}`, computed as the transpose of `m^T x = b^T`.
pub fn right_solve(b: &Matrix, m: &Matrix) -> Option<Matrix> {
    solve(&m.transpose(), &b.transpose()).map(|x| x.transpose())
}

pub fn inverse(m: &Matrix) -> Option<Matrix> {
    m.clone().try_inverse()
}

/// Maximum absolute column sum.
pub fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Sum of absolute entries.
pub fn entrywise_l1(m: &Matrix) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Row vector `p^T m`.
pub fn vec_mat(p: &[f64], m: &Matrix) -> Vec<f64> {
    let v = DVector::from_column_slice(p);
    (m.transpose() * v).iter().copied().collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
    let k = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(k, c, |i, j| rows[i][j])
}

/// `m` with columns reordered: column `j` of the result is column `perm[j]` of `m`.
pub fn permute_columns(m: &Matrix, perm: &[usize]) -> Matrix {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, perm[j])])
}

pub fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(perm[i], j)])
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_solve_matches_inverse() {
        let m = from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let b = from_rows(&[vec![1.0, 0.0], vec![4.0, 5.0]]);
        let x = right_solve(&b, &m).unwrap();
        assert!(max_abs(&(x - &b * inverse(&m).unwrap())) < 1e-14);
    }

    #[test]
    fn permutations_are_complete() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(3)[1], vec![0, 2, 1]);
    }
}
