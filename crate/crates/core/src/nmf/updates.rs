//! Multiplicative update rules and objectives for each factorization model.
//!
//! Every update floors the factors at [`EPSILON_FLOOR`] afterwards, so zero
//! entries can never become absorbing and denominators stay positive.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

pub const EPSILON_FLOOR: f64 = 1e-12;

/// Below this many multiply-adds a plain loop beats the blocked kernel,
/// whose packing dominates for the small matrices of short chains.
const SMALL_PRODUCT: usize = 4096;

/// `a b`, with a direct loop for small products.
pub(crate) fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let n = b.ncols();
    if m * k * n > SMALL_PRODUCT {
        return a.dot(&b);
    }
    let b = b.as_standard_layout();
    let b = b.as_slice().expect("standard layout");
    let mut c = Array2::zeros((m, n));
    for (a_row, mut c_row) in a.rows().into_iter().zip(c.rows_mut()) {
        let c_row = c_row.as_slice_mut().expect("fresh array");
        for (l, &x) in a_row.iter().enumerate() {
            for (cj, &bj) in c_row.iter_mut().zip(&b[l * n..(l + 1) * n]) {
                *cj += x * bj;
            }
        }
    }
    c
}

/// `base * numer / denom`, floored, in place.
fn multiplicative(base: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>) {
    Zip::from(base).and(numer).and(denom).for_each(|b, &n, &d| {
        *b = (*b * n / d).max(EPSILON_FLOOR);
    });
}

/// Least-squares update of the weights given a fixed basis.
pub(crate) fn ls_update_weights(pi: ArrayView2<f64>, basis: ArrayView2<f64>, h: &mut Array2<f64>) {
    let numer = matmul(basis.t(), pi);
    let denom = matmul(matmul(basis.t(), basis).view(), h.view());
    multiplicative(h, &numer, &denom);
}

/// Least-squares update of the basis given fixed weights. Given
/// `||pi||_F^2`, also returns the squared
/// error of the updated `W weights` via
/// `||pi||^2 - 2 <W, pi weights'> + <W'W, weights weights'>`, which reuses
/// the update's products and avoids forming the reconstruction.
pub(crate) fn ls_update_basis_with_error(
    pi: ArrayView2<f64>,
    w: &mut Array2<f64>,
    weights: ArrayView2<f64>,
    pi_sq: Option<f64>,
    symmetric: bool,
) -> Option<f64> {
    // for symmetric pi, `(weights pi)'` is the same product with a faster layout
    let numer = if symmetric {
        matmul(weights, pi).reversed_axes()
    } else {
        matmul(pi, weights.t())
    };
    let gram = matmul(weights, weights.t());
    let denom = matmul(w.view(), gram.view());
    multiplicative(w, &numer, &denom);
    pi_sq.map(|pi_sq| {
        let cross = Zip::from(&*w).and(&numer).fold(0.0, |acc, &a, &b| acc + a * b);
        let quad = Zip::from(&matmul(w.t(), w.view()))
            .and(&gram)
            .fold(0.0, |acc, &a, &b| acc + a * b);
        pi_sq - 2.0 * cross + quad
    })
}

/// One squared-error step: `H` first, then `W` against the new `H`.
pub fn update_step_ls(
    pi: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (mut w, mut h) = (w.to_owned(), h.to_owned());
    ls_step_in_place(pi, &mut w, &mut h);
    (w, h)
}

pub(crate) fn ls_step_in_place(pi: ArrayView2<f64>, w: &mut Array2<f64>, h: &mut Array2<f64>) {
    ls_step_with_error(pi, w, h, None, false);
}

pub(crate) fn ls_step_with_error(
    pi: ArrayView2<f64>,
    w: &mut Array2<f64>,
    h: &mut Array2<f64>,
    pi_sq: Option<f64>,
    symmetric: bool,
) -> Option<f64> {
    ls_update_weights(pi, w.view(), h);
    ls_update_basis_with_error(pi, w, h.view(), pi_sq, symmetric)
}

/// Elementwise `pi / recon`, where `0 / x = 0`.
fn kl_ratio(pi: ArrayView2<f64>, recon: &Array2<f64>) -> Array2<f64> {
    let mut r = recon.clone();
    Zip::from(&mut r).and(pi).for_each(|r, &p| {
        *r = if p == 0.0 { 0.0 } else { p / *r };
    });
    r
}

/// One generalized-KL step: `H` first, then `W` against the new `H`.
pub fn update_step_kl(
    pi: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (mut w, mut h) = (w.to_owned(), h.to_owned());
    kl_step_in_place(pi, &mut w, &mut h);
    (w, h)
}

pub(crate) fn kl_step_in_place(pi: ArrayView2<f64>, w: &mut Array2<f64>, h: &mut Array2<f64>) {
    let ratio = kl_ratio(pi, &matmul(w.view(), h.view()));
    let numer = matmul(w.t(), ratio.view());
    let col_sums = w.sum_axis(Axis(0));
    Zip::indexed(&mut *h).and(&numer).for_each(|(a, _), h, &num| {
        *h = (*h * num / col_sums[a]).max(EPSILON_FLOOR);
    });

    let ratio = kl_ratio(pi, &matmul(w.view(), h.view()));
    let numer = matmul(ratio.view(), h.t());
    let row_sums = h.sum_axis(Axis(1));
    Zip::indexed(&mut *w).and(&numer).for_each(|(_, a), w, &num| {
        *w = (*w * num / row_sums[a]).max(EPSILON_FLOOR);
    });
}

/// Smoothing matrix `(1 - theta) I + (theta / K) 11'`.
pub fn smoothing_matrix(rank: usize, theta: f64) -> Array2<f64> {
    let mut s = Array2::from_elem((rank, rank), theta / rank as f64);
    for a in 0..rank {
        s[[a, a]] += 1.0 - theta;
    }
    s
}

/// One non-smooth step: `W S` acts as the basis when updating `H`, and
/// `S H` as the weights when updating `W`. Squared-error objective.
pub fn update_step_ns(
    pi: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    s: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (mut w, mut h) = (w.to_owned(), h.to_owned());
    ns_step_in_place(pi, &mut w, &mut h, s);
    (w, h)
}

pub(crate) fn ns_step_in_place(
    pi: ArrayView2<f64>,
    w: &mut Array2<f64>,
    h: &mut Array2<f64>,
    s: ArrayView2<f64>,
) {
    ns_step_with_error(pi, w, h, s, None, false);
}

pub(crate) fn ns_step_with_error(
    pi: ArrayView2<f64>,
    w: &mut Array2<f64>,
    h: &mut Array2<f64>,
    s: ArrayView2<f64>,
    pi_sq: Option<f64>,
    symmetric: bool,
) -> Option<f64> {
    let basis = matmul(w.view(), s);
    ls_update_weights(pi, basis.view(), h);
    let weights = matmul(s, h.view());
    ls_update_basis_with_error(pi, w, weights.view(), pi_sq, symmetric)
}

/// `W H + b 1'`
pub fn offset_reconstruction(
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    offset: ArrayView1<f64>,
) -> Array2<f64> {
    let mut recon = matmul(w, h);
    for (mut row, &b) in recon.rows_mut().into_iter().zip(offset) {
        row += b;
    }
    recon
}

/// One offset-model step: `H` against the full reconstruction, then `W`
/// and the offset together as one block (the offset is a basis column whose
/// weights are fixed at 1).
pub fn update_step_offset(
    pi: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    offset: ArrayView1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let (mut w, mut h, mut b) = (w.to_owned(), h.to_owned(), offset.to_owned());
    offset_step_in_place(pi, &mut w, &mut h, &mut b);
    (w, h, b)
}

pub(crate) fn offset_step_in_place(
    pi: ArrayView2<f64>,
    w: &mut Array2<f64>,
    h: &mut Array2<f64>,
    b: &mut Array1<f64>,
) {
    let recon = offset_reconstruction(w.view(), h.view(), b.view());
    let numer = matmul(w.t(), pi);
    let denom = matmul(w.t(), recon.view());
    multiplicative(h, &numer, &denom);

    let recon = offset_reconstruction(w.view(), h.view(), b.view());
    let numer_w = matmul(pi, h.t());
    let denom_w = matmul(recon.view(), h.t());
    let numer_b = pi.sum_axis(Axis(1));
    let denom_b = recon.sum_axis(Axis(1));
    multiplicative(w, &numer_w, &denom_w);
    Zip::from(b).and(&numer_b).and(&denom_b).for_each(|b, &n, &d| {
        *b = (*b * n / d).max(EPSILON_FLOOR);
    });
}

/// Squared Frobenius error.
pub fn squared_error(pi: ArrayView2<f64>, recon: &Array2<f64>) -> f64 {
    Zip::from(pi)
        .and(recon)
        .fold(0.0, |acc, &p, &r| acc + (p - r) * (p - r))
}

/// Generalized Kullback-Leibler divergence `D(pi || recon)` with `0 log 0 = 0`.
pub fn kl_divergence(pi: ArrayView2<f64>, recon: &Array2<f64>) -> f64 {
    Zip::from(pi).and(recon).fold(0.0, |acc, &p, &r| {
        let log_term = if p > 0.0 { p * (p / r).ln() } else { 0.0 };
        acc + log_term - p + r
    })
}
