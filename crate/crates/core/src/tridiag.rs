/// Pre-factored tridiagonal system (Thomas algorithm without pivoting).
///
/// Row `i` reads `lower[i]·u[i−1] + diag[i]·u[i] + upper[i]·u[i+1] = r[i]`;
/// `lower[0]` and `upper[n−1]` are ignored. Intended for diagonally
/// dominant matrices, where elimination without pivoting is stable.
#[derive(Clone, Debug)]
pub(crate) struct Tridiagonal {
    lower: Vec<f64>,
    /// Modified super-diagonal `c'_i`.
    upper_mod: Vec<f64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    pub(crate) fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { lower[i] };
            let pivot = diag[i] - l * prev;
            inv_pivot[i] = 1.0 / pivot;
            prev = if i + 1 < n { upper[i] * inv_pivot[i] } else { 0.0 };
            upper_mod[i] = prev;
        }
        Self {
            lower,
            upper_mod,
            inv_pivot,
        }
    }

    /// Overwrite `r` with the solution.
    pub(crate) fn solve_in_place(&self, r: &mut [f64]) {
        let n = r.len();
        let mut prev = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { self.lower[i] };
            r[i] = (r[i] - l * prev) * self.inv_pivot[i];
            prev = r[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            r[i] -= self.upper_mod[i] * r[i + 1];
        }
    }
}
