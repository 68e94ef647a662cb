//! Dense kernels for the tiny systems (n <= MAX_DIM) met in strata search.

pub(crate) const MAX_DIM: usize = 6;

pub(crate) type Mat = [[f64; MAX_DIM]; MAX_DIM];
pub(crate) type Vector = [f64; MAX_DIM];

pub(crate) const ZERO_MAT: Mat = [[0.0; MAX_DIM]; MAX_DIM];

/// LU with partial pivoting on the leading `n x n` block. Returns the
/// factored matrix, row permutation and determinant.
fn lu(a: &Mat, n: usize) -> (Mat, [usize; MAX_DIM], f64) {
    let mut m = *a;
    let mut perm = [0usize; MAX_DIM];
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if piv != col {
            m.swap(piv, col);
            perm.swap(piv, col);
            det = -det;
        }
        let d = m[col][col];
        det *= d;
        if d == 0.0 {
            return (m, perm, 0.0);
        }
        for row in col + 1..n {
            let f = m[row][col] / d;
            m[row][col] = f;
            for k in col + 1..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    (m, perm, det)
}

pub(crate) fn det(a: &Mat, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    lu(a, n).2
}

/// Solves `a x = b`; `None` when the matrix is exactly singular.
pub(crate) fn solve(a: &Mat, b: &[f64], n: usize) -> Option<Vector> {
    let (m, perm, det) = lu(a, n);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut x = [0.0; MAX_DIM];
    for i in 0..n {
        let mut s = b[perm[i]];
        for k in 0..i {
            s -= m[i][k] * x[k];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Unit normal of the hyperplane through `d` points in `d` dimensions,
/// by cofactor expansion of the edge matrix. `None` if the points are
/// affinely dependent.
pub(crate) fn hyperplane_normal(points: &[&[f64]], d: usize) -> Option<Vec<f64>> {
    let mut edges = ZERO_MAT;
    for r in 0..d - 1 {
        for c in 0..d {
            edges[r][c] = points[r + 1][c] - points[0][c];
        }
    }
    let mut normal = vec![0.0; d];
    for (i, n) in normal.iter_mut().enumerate() {
        let mut minor = ZERO_MAT;
        for r in 0..d - 1 {
            let mut cc = 0;
            for c in 0..d {
                if c != i {
                    minor[r][cc] = edges[r][c];
                    cc += 1;
                }
            }
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        *n = sign * det(&minor, d - 1);
    }
    let len = dot(&normal, &normal).sqrt();
    if !(len > 0.0) || !len.is_finite() {
        return None;
    }
    normal.iter_mut().for_each(|x| *x /= len);
    Some(normal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = ZERO_MAT;
        a[0][0] = 2.0;
        a[0][1] = 1.0;
        a[1][0] = 1.0;
        a[1][1] = 3.0;
        let x = solve(&a, &[3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!((det(&a, 2) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_has_no_solution() {
        let mut a = ZERO_MAT;
        a[0][0] = 1.0;
        a[0][1] = 2.0;
        a[1][0] = 2.0;
        a[1][1] = 4.0;
        assert!(solve(&a, &[1.0, 2.0], 2).is_none());
    }

    #[test]
    fn plane_normal_in_3d() {
        let p: [&[f64]; 3] = [&[0.0, 0.0, 1.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0]];
        let n = hyperplane_normal(&p, 3).unwrap();
        assert!((n[2].abs() - 1.0).abs() < 1e-12);
    }
}
