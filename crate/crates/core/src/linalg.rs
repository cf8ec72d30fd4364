//! Dense complex solves for the small systems of the scattering conversion.

use num_complex::Complex64;

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` if a pivot vanishes.
pub fn solve<const N: usize>(mut a: [[Complex64; N]; N], mut b: [Complex64; N]) -> Option<[Complex64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[pivot][col].norm() == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            if factor.norm() == 0.0 {
                continue;
            }
            for k in col..N {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for k in row + 1..N {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Max-column-sum norm.
pub fn norm1<const N: usize>(a: &[[Complex64; N]; N]) -> f64 {
    (0..N).map(|j| (0..N).map(|i| a[i][j].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `‖a‖₁ ‖a⁻¹‖₁`, infinite if `a` is singular.
pub fn condition1<const N: usize>(a: &[[Complex64; N]; N]) -> f64 {
    let mut inv_norm = 0.0f64;
    for j in 0..N {
        let mut e = [Complex64::new(0.0, 0.0); N];
        e[j] = Complex64::new(1.0, 0.0);
        match solve(*a, e) {
            Some(col) => inv_norm = inv_norm.max(col.iter().map(|z| z.norm()).sum()),
            None => return f64::INFINITY,
        }
    }
    norm1(a) * inv_norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_needing_pivot() {
        let a = [[c(0.0, 0.0), c(2.0, 1.0)], [c(1.0, -1.0), c(3.0, 0.0)]];
        let x_true = [c(0.5, 2.0), c(-1.0, 0.25)];
        let b = [a[0][0] * x_true[0] + a[0][1] * x_true[1], a[1][0] * x_true[0] + a[1][1] * x_true[1]];
        let x = solve(a, b).unwrap();
        for i in 0..2 {
            assert!((x[i] - x_true[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn singular_and_condition() {
        let a = [[c(1.0, 0.0), c(2.0, 0.0)], [c(2.0, 0.0), c(4.0, 0.0)]];
        assert!(solve(a, [c(1.0, 0.0); 2]).is_none());
        assert!(condition1(&a).is_infinite());
        let id = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert_eq!(condition1(&id), 1.0);
    }
}
