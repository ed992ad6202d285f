//! Dynamic time warping with the symmetric step set `{(1,0), (0,1), (1,1)}`.

use thiserror::Error;

use crate::blendshape::BlendshapeVector;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DtwError {
    #[error("dtw needs two non-empty sequences (got lengths {0} and {1})")]
    Empty(usize, usize),
}

/// Optimal alignment between two sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment<T> {
    /// Sum of frame costs along the path.
    pub cost: T,
    /// Monotone index pairs `(i, j)` from `(0, 0)` to `(len_a - 1, len_b - 1)`.
    pub path: Vec<(usize, usize)>,
}

/// DTW under an arbitrary frame cost.
pub fn dtw_by<X, T, F>(a: &[X], b: &[X], cost: F) -> Result<Alignment<T>, DtwError>
where
    T: Real,
    F: Fn(&X, &X) -> T,
{
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(DtwError::Empty(n, m));
    }
    let at = |i: usize, j: usize| i * m + j;
    let mut acc = vec![T::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(&a[i], &b[j]);
            acc[at(i, j)] = match (i, j) {
                (0, 0) => c,
                (0, _) => c + acc[at(0, j - 1)],
                (_, 0) => c + acc[at(i - 1, 0)],
                _ => {
                    let best = acc[at(i - 1, j - 1)].min(acc[at(i - 1, j)]).min(acc[at(i, j - 1)]);
                    c + best
                }
            };
        }
    }

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            // diagonal wins ties, then the a-step
            let diag = acc[at(i - 1, j - 1)];
            let up = acc[at(i - 1, j)];
            let left = acc[at(i, j - 1)];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();

    Ok(Alignment {
        cost: acc[at(n - 1, m - 1)],
        path,
    })
}

/// Euclidean distance over all 27 channels.
pub fn frame_distance<T: Real>(a: &BlendshapeVector<T>, b: &BlendshapeVector<T>) -> T {
    a.values()
        .iter()
        .zip(b.values().iter())
        .fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
        .sqrt()
}

/// DTW between two frame sequences with Euclidean frame cost.
pub fn dtw_distance<T: Real>(a: &[BlendshapeVector<T>], b: &[BlendshapeVector<T>]) -> Result<Alignment<T>, DtwError> {
    dtw_by(a, b, frame_distance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_frames(vals: &[f64]) -> Vec<BlendshapeVector<f64>> {
        vals.iter()
            .map(|&v| BlendshapeVector::from_fn(|c| if c.index() == 3 { v } else { 0.0 }).unwrap())
            .collect()
    }

    #[test]
    fn self_alignment_is_diagonal() {
        let x = scalar_frames(&[0.1, 0.5, 0.9, 0.4]);
        let al = dtw_distance(&x, &x).unwrap();
        assert_eq!(al.cost, 0.0);
        assert_eq!(al.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn single_cell() {
        let al = dtw_distance(&scalar_frames(&[0.0]), &scalar_frames(&[1.0])).unwrap();
        assert_eq!(al.cost, 1.0);
        assert_eq!(al.path, vec![(0, 0)]);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(
            dtw_distance::<f64>(&[], &scalar_frames(&[1.0])),
            Err(DtwError::Empty(0, 1))
        );
    }

    #[test]
    fn stretched_copy_aligns_at_zero_cost() {
        let a = scalar_frames(&[0.0, 0.3, 0.8, 0.2]);
        let b = scalar_frames(&[0.0, 0.0, 0.3, 0.3, 0.8, 0.8, 0.2, 0.2]);
        let al = dtw_distance(&a, &b).unwrap();
        assert_eq!(al.cost, 0.0);
        for (i, j) in al.path {
            assert_eq!(i, j / 2);
        }
    }
}
