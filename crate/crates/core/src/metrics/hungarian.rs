//! Maximum-weight assignment on a dense rectangular matrix.

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs, sorted by row. Length is `min(rows, cols)`.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Maximizes the summed similarity of a one-to-one assignment of
/// `min(rows, cols)` pairs. Runs in O(r²c) with r ≤ c after transposing.
pub fn hungarian(similarity: &Matrix) -> Assignment {
    let (r, c) = similarity.shape();
    if r == 0 || c == 0 {
        return Assignment {
            pairs: Vec::new(),
            total: 0.0,
        };
    }
    let transposed = r > c;
    let (n, m) = if transposed { (c, r) } else { (r, c) };
    let cost = |i: usize, j: usize| {
        if transposed {
            -similarity[(j, i)]
        } else {
            -similarity[(i, j)]
        }
    };

    // Potentials and matching are 1-based; index 0 is a sentinel column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (i, j) = (owner[j] - 1, j - 1);
            if transposed {
                (j, i)
            } else {
                (i, j)
            }
        })
        .collect();
    pairs.sort();
    let total = pairs.iter().map(|&(i, j)| similarity[(i, j)]).sum();
    Assignment { pairs, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let one = hungarian(&Matrix::from_vec(1, 1, vec![1.0]).unwrap());
        assert_eq!(one.pairs, vec![(0, 0)]);
        assert_eq!(one.total, 1.0);

        let diag = hungarian(&Matrix::identity(2));
        assert_eq!(diag.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(diag.total, 2.0);

        let anti = hungarian(&Matrix::from_vec(2, 2, vec![1.0, 5.0, 4.0, 1.0]).unwrap());
        assert_eq!(anti.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(anti.total, 9.0);

        assert!(hungarian(&Matrix::zeros(0, 3)).pairs.is_empty());
    }

    #[test]
    fn rectangular() {
        let wide = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.9, 0.8, 0.0, 0.0]).unwrap();
        let a = hungarian(&wide);
        assert_eq!(a.pairs, vec![(0, 2), (1, 0)]);
        let tall = hungarian(&wide.transpose());
        assert_eq!(tall.pairs, vec![(0, 1), (2, 0)]);
        assert!((a.total - tall.total).abs() < 1e-15);
    }
}
