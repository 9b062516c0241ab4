use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dot, norm_sq, Scalar};
use crate::weights::Matrix;

/// The model-space singular vectors of the unembedding belonging to its
/// `k` smallest singular values.
///
/// The right singular vectors of `W_Uᵀ` (one token per row) are the
/// eigenvectors of the `d_model x d_model` Gram matrix `W_U W_Uᵀ`, which is
/// accumulated in `f64` and decomposed once per model. When
/// `d_vocab < d_model` the exact null directions show up as zero
/// eigenvalues.
#[derive(Debug, Clone)]
pub struct NullSpace {
    basis: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
}

impl NullSpace {
    pub fn from_unembed(unembed: &Matrix, k: usize) -> Result<Self> {
        let d = unembed.cols();
        if k == 0 || k > d {
            return Err(Error::InvalidParameter(format!(
                "null-space dimension k must lie in 1..={d}, got {k}"
            )));
        }
        let gram = gram_matrix(unembed);
        let eig = SymmetricEigen::try_new(gram, 1e-14, 10_000)
            .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let chosen = &order[..k];
        let basis = chosen
            .iter()
            .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
            .collect();
        let singular_values = chosen.iter().map(|&c| eig.eigenvalues[c].max(0.0).sqrt()).collect();
        Ok(Self { basis, singular_values })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthonormal basis vectors, smallest singular value first.
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `‖Nᵀ w‖ / ‖w‖`, the share of `w`'s norm inside the subspace.
    pub fn fraction<T: Scalar>(&self, w: &[T]) -> Result<f64> {
        let n = norm_sq(w);
        if n == 0.0 {
            return Err(Error::ZeroNorm("w_out in null-space projection".into()));
        }
        if w.len() != self.basis.first().map_or(0, Vec::len) {
            return Err(Error::LengthMismatch {
                left: self.basis.first().map_or(0, Vec::len),
                right: w.len(),
            });
        }
        let proj: f64 = self
            .basis
            .iter()
            .map(|b| {
                let p = dot(w, b);
                p * p
            })
            .sum();
        Ok((proj / n).sqrt().clamp(0.0, 1.0))
    }
}

fn gram_matrix(tokens: &Matrix) -> DMatrix<f64> {
    let d = tokens.cols();
    // upper triangle only, mirrored at the end
    let upper = (0..tokens.rows())
        .into_par_iter()
        .fold(
            || vec![0.0f64; d * d],
            |mut g, r| {
                let row = tokens.row(r);
                for i in 0..d {
                    let ri = row[i] as f64;
                    if ri == 0.0 {
                        continue;
                    }
                    for (gij, &rj) in g[i * d + i..(i + 1) * d].iter_mut().zip(&row[i..]) {
                        *gij += ri * rj as f64;
                    }
                }
                g
            },
        )
        .reduce(
            || vec![0.0f64; d * d],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    DMatrix::from_fn(d, d, |i, j| {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        upper[lo * d + hi]
    })
}

/// One-shot form of [`NullSpace::fraction`]. Prefer building a
/// [`NullSpace`] once when projecting many vectors.
pub fn null_space_fraction(w_out: &[f32], unembed: &Matrix, k: usize) -> Result<f64> {
    NullSpace::from_unembed(unembed, k)?.fraction(w_out)
}
