//! Pfaffians of small and medium antisymmetric matrices.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};

const ANTISYM_TOL: f64 = 1e-10;

fn check_square_even<T: ComplexField + Copy>(a: &DMatrix<T>, m: impl Fn(T) -> f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Domain("pfaffian of a non-square matrix".into()));
    }
    if a.nrows() % 2 == 1 {
        return Err(Error::Domain(format!("pfaffian of odd dimension {}", a.nrows())));
    }
    let scale = a.iter().map(|&x| m(x)).fold(1.0f64, f64::max);
    for i in 0..a.nrows() {
        for j in 0..=i {
            let s = m(a[(i, j)] + a[(j, i)]);
            if s > ANTISYM_TOL * scale {
                return Err(Error::Domain(format!("matrix not antisymmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Pfaffian of a real antisymmetric matrix. Sizes up to 8 use the Laplace
/// expansion along the first row; larger ones use Parlett-Reid elimination.
pub fn pfaffian(a: &DMatrix<f64>) -> Result<f64> {
    check_square_even(a, f64::abs)?;
    let n = a.nrows();
    if n <= 8 {
        let idx: Vec<usize> = (0..n).collect();
        Ok(laplace(a, &idx))
    } else {
        Ok(parlett_reid(a.clone()))
    }
}

/// Pfaffian of a complex antisymmetric matrix, by Parlett-Reid elimination.
pub fn pfaffian_complex(a: &DMatrix<num_complex::Complex64>) -> Result<num_complex::Complex64> {
    check_square_even(a, |x| x.norm())?;
    Ok(parlett_reid(a.clone()))
}

/// Pfaffian of the rows and columns `idx` of `a`. `idx` must be strictly increasing
/// and of even length.
pub fn pfaffian_sub(a: &DMatrix<f64>, idx: &[usize]) -> Result<f64> {
    if idx.len() % 2 == 1 {
        return Err(Error::Domain("odd index set".into()));
    }
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("index set not strictly increasing".into()));
    }
    if idx.last().is_some_and(|&m| m >= a.nrows()) {
        return Err(Error::Domain("index out of range".into()));
    }
    if idx.len() <= 8 {
        Ok(laplace(a, idx))
    } else {
        Ok(parlett_reid(a.select_rows(idx).select_columns(idx)))
    }
}

/// Laplace expansion over the selected indices. No checks.
pub(crate) fn laplace<T: ComplexField + Copy>(a: &DMatrix<T>, idx: &[usize]) -> T {
    match idx.len() {
        0 => T::one(),
        2 => a[(idx[0], idx[1])],
        4 => {
            let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
            a[(i, j)] * a[(k, l)] - a[(i, k)] * a[(j, l)] + a[(i, l)] * a[(j, k)]
        }
        n => {
            let mut rest = Vec::with_capacity(n - 2);
            let mut acc = T::zero();
            for j in 1..n {
                rest.clear();
                rest.extend(idx[1..].iter().enumerate().filter(|&(m, _)| m + 1 != j).map(|(_, &v)| v));
                let term = a[(idx[0], idx[j])] * laplace(a, &rest);
                if j % 2 == 1 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            acc
        }
    }
}

/// Partial derivatives of `Pf(a|idx)` with respect to the upper entries
/// `a[idx[i], idx[j]]`, `i < j`; written into `out` (size `idx.len()` squared,
/// antisymmetrically, so that `dPf = 1/2 sum out[i][j] da[i][j]`).
pub(crate) fn pfaffian_grad<T: ComplexField + Copy>(a: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    let n = idx.len();
    let mut out = DMatrix::<T>::zeros(n, n);
    let mut rest = Vec::with_capacity(n);
    for i in 0..n {
        for j in i + 1..n {
            rest.clear();
            rest.extend((0..n).filter(|&m| m != i && m != j).map(|m| idx[m]));
            let mut v = laplace(a, &rest);
            if (i + j) % 2 == 0 {
                v = -v;
            }
            out[(i, j)] = v;
            out[(j, i)] = -v;
        }
    }
    out
}

/// Parlett-Reid elimination with partial pivoting.
fn parlett_reid<T: ComplexField + Copy>(mut a: DMatrix<T>) -> T {
    let n = a.nrows();
    let mut pf = T::one();
    let mut k = 0;
    while k + 1 < n {
        let mut kp = k + 1;
        let mut best = a[(k, k + 1)].modulus();
        for m in k + 2..n {
            let v = a[(k, m)].modulus();
            if v > best {
                best = v;
                kp = m;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let piv = a[(k, k + 1)];
        if piv == T::zero() {
            return T::zero();
        }
        pf *= piv;
        if k + 2 < n {
            for i in k + 2..n {
                let ti = a[(k, i)] / piv;
                let ui = a[(k + 1, i)];
                for j in k + 2..n {
                    let tj = a[(k, j)] / piv;
                    let uj = a[(k + 1, j)];
                    a[(i, j)] = a[(i, j)] - (ti * uj - ui * tj);
                }
            }
        }
        k += 2;
    }
    pf
}
