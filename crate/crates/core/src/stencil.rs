//! Finite-difference weights on arbitrary nodes (Fornberg's recursion).

/// Weights `w[m][i]` such that `Σ_i w[m][i] f(x_i) ≈ f^{(m)}(x0)` for every
/// derivative order `m ≤ max_deriv`.
pub fn fornberg(x0: f64, nodes: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One-sided weights for the `deriv`-th derivative at the left end of a
/// uniform grid with spacing `h`, using `points` nodes `0, h, 2h, ...`.
pub fn one_sided(deriv: usize, points: usize, h: f64) -> Vec<f64> {
    let nodes: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
    fornberg(0.0, &nodes, deriv).swap_remove(deriv)
}

/// Applies one-sided weights at the left end (`left = true`, nodes
/// `v[0], v[1], ...`) or the right end (nodes `v[n-1], v[n-2], ...`, with the
/// sign flip of odd derivatives).
pub fn apply_one_sided<T>(v: &[T], weights: &[f64], deriv: usize, left: bool) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Default,
{
    let n = v.len();
    let mut acc = T::default();
    for (i, w) in weights.iter().enumerate() {
        let sample = if left { v[i] } else { v[n - 1 - i] };
        acc = acc + sample * *w;
    }
    if !left && deriv % 2 == 1 {
        acc * -1.0
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_fourth_order_first_derivative() {
        let w = one_sided(1, 5, 1.0);
        let want = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn centered_second_derivative() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn right_end_mirrors_with_sign() {
        let h = 0.01;
        let v: Vec<f64> = (0..=100).map(|i| (i as f64 * h).powi(2)).collect();
        let w = one_sided(1, 5, h);
        let d = apply_one_sided(&v, &w, 1, false);
        assert!((d - 2.0).abs() < 1e-9);
    }
}
