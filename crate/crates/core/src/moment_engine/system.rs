use nalgebra::{DMatrix, DVector};

use super::combinatorics::binomial;
use super::MAX_ORDER_CAP;
use crate::error::{Error, Result};
use crate::urn_model::{DrawnColor, Rule};

/// Number of pairs `(i, j)` with `1 <= i + j <= order_cap`.
pub fn moment_count(order_cap: u32) -> usize {
    let n = order_cap as usize;
    n * (n + 3) / 2
}

/// Position of `m_{i,j}` in the stacked moment vector. Moments are grouped
/// by order ascending; within order `n` they run `m_{n,0}, m_{n-1,1}, ...,
/// m_{0,n}`.
pub fn moment_position(i: u32, j: u32) -> usize {
    let n = (i + j) as usize;
    debug_assert!(n >= 1);
    (n - 1) * (n + 2) / 2 + (n - i as usize)
}

pub fn moment_indices(order_cap: u32) -> Vec<(u32, u32)> {
    (1..=order_cap)
        .flat_map(|n| (0..=n).map(move |j| (n - j, j)))
        .collect()
}

/// Linear system `m' = L m` over all mixed moments up to `order_cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSystem {
    pub order_cap: u32,
    /// Balance factor; moments of order `n` grow like `e^{n k t}`.
    pub k: f64,
    pub index: Vec<(u32, u32)>,
    pub matrix: DMatrix<f64>,
    /// `m(0)`, entries `w0^i b0^j`.
    pub initial: DVector<f64>,
}

impl MomentSystem {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn position(&self, i: u32, j: u32) -> Option<usize> {
        (i + j >= 1 && i + j <= self.order_cap).then(|| moment_position(i, j))
    }

    /// Block coupling order-`row_order` derivatives to order-`col_order`
    /// moments.
    pub fn block(&self, row_order: u32, col_order: u32) -> DMatrix<f64> {
        let start = |n: u32| moment_position(n, 0);
        self.matrix
            .view(
                (start(row_order), start(col_order)),
                (row_order as usize + 1, col_order as usize + 1),
            )
            .into_owned()
    }

    pub fn diagonal_block(&self, order: u32) -> DMatrix<f64> {
        self.block(order, order)
    }
}

/// Assembles the mixed-moment ODE system for `rule` started from `(w0, b0)`.
///
/// Drawing white (rate `W`) adds the row `(X, Y)`, drawing blue (rate `B`)
/// adds `(X', Y')`, so
///
/// ```text
/// d/dt m_{i,j} = sum_{(r,s) < (i,j)} C(i,r) C(j,s) E[X^{i-r} Y^{j-s}]   m_{r+1,s}
///              + sum_{(r,s) < (i,j)} C(i,r) C(j,s) E[X'^{i-r} Y'^{j-s}] m_{r,s+1}
/// ```
///
/// where `(r,s) < (i,j)` ranges over `0 <= r <= i`, `0 <= s <= j` minus the
/// corner. Every referenced moment has order at most `i + j`, so the system
/// is closed.
pub fn build_moment_ode(rule: &Rule, order_cap: u32, w0: u64, b0: u64) -> Result<MomentSystem> {
    if order_cap < 1 || order_cap > MAX_ORDER_CAP {
        return Err(Error::OrderCap(order_cap));
    }
    let index = moment_indices(order_cap);
    let dim = index.len();
    let mut matrix = DMatrix::zeros(dim, dim);

    for (row, &(i, j)) in index.iter().enumerate() {
        for r in 0..=i {
            for s in 0..=j {
                if (r, s) == (i, j) {
                    continue;
                }
                let coef = binomial(i, r) * binomial(j, s);
                let white = rule.row_moment(DrawnColor::White, i - r, j - s);
                let blue = rule.row_moment(DrawnColor::Blue, i - r, j - s);
                matrix[(row, moment_position(r + 1, s))] += coef * white;
                matrix[(row, moment_position(r, s + 1))] += coef * blue;
            }
        }
    }

    let (w0, b0) = (w0 as f64, b0 as f64);
    let initial = DVector::from_iterator(
        dim,
        index.iter().map(|&(i, j)| w0.powi(i as i32) * b0.powi(j as i32)),
    );

    Ok(MomentSystem {
        order_cap,
        k: rule.k() as f64,
        index,
        matrix,
        initial,
    })
}

/// Tridiagonal coupling of the order-`n` moments for the Bagchi-Pal rule
/// with rows `(k - b, b)`, `(c, k - c)`, ordered `m_{n,0}, ..., m_{0,n}`.
///
/// The row of `m_{i,n-i}` has diagonal `i (k - b) + (n - i)(k - c)`,
/// coefficient `i c` on `m_{i-1,n-i+1}` and `(n - i) b` on `m_{i+1,n-i-1}`.
pub fn build_an(n: u32, b: i64, c: i64, k: i64) -> DMatrix<f64> {
    let size = n as usize + 1;
    let (b, c, k) = (b as f64, c as f64, k as f64);
    let mut a = DMatrix::zeros(size, size);
    for p in 0..size {
        let i = (n as usize - p) as f64;
        let j = p as f64;
        a[(p, p)] = i * (k - b) + j * (k - c);
        if p > 0 {
            a[(p, p - 1)] = j * b;
        }
        if p + 1 < size {
            a[(p, p + 1)] = i * c;
        }
    }
    a
}

/// Closed-form spectrum of [`build_an`]: `n k - s (b + c)` for `s = 0..=n`,
/// sorted descending.
pub fn eigenvalues_an(n: u32, b: i64, c: i64, k: i64) -> Vec<f64> {
    let mut out: Vec<f64> = (0..=n as i64)
        .map(|s| (n as i64 * k - s * (b + c)) as f64)
        .collect();
    out.sort_by(|x, y| y.total_cmp(x));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn_model::{RandomizedRule, ReplacementRule};
    use nalgebra::Schur;

    fn example_rule() -> Rule {
        Rule::from(ReplacementRule::new(1, 3, 2, 2))
    }

    fn numerical_spectrum(m: DMatrix<f64>) -> Vec<f64> {
        let mut ev: Vec<f64> = Schur::new(m).complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn positions_follow_index() {
        for (p, &(i, j)) in moment_indices(6).iter().enumerate() {
            assert_eq!(moment_position(i, j), p);
        }
        assert_eq!(moment_count(6), 27);
        assert_eq!(moment_indices(2), vec![(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn order_one_block_for_example_rule() {
        let sys = build_moment_ode(&example_rule(), 1, 3, 2).unwrap();
        assert_eq!(sys.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 2.0]));
        assert_eq!(sys.initial.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn order_one_block_for_play_the_winner() {
        let rule = Rule::from(RandomizedRule::play_the_winner(0.3, 0.6).unwrap());
        let sys = build_moment_ode(&rule, 1, 3, 2).unwrap();
        // mu1(1,0) = p1, mu1(0,1) = q1, mu2(1,0) = q2, mu2(0,1) = p2
        let expected = DMatrix::from_row_slice(2, 2, &[0.3, 0.4, 0.7, 0.6]);
        assert!((sys.matrix - expected).abs().max() < 1e-15);
    }

    #[test]
    fn system_is_block_lower_triangular() {
        let rules = [
            example_rule(),
            Rule::from(RandomizedRule::play_the_winner(0.3, 0.6).unwrap()),
            Rule::from(ReplacementRule::new(-1, 2, 3, -2)),
        ];
        for rule in &rules {
            let sys = build_moment_ode(rule, 4, 3, 2).unwrap();
            assert_eq!(sys.diagonal_block(2).shape(), (3, 3));
            for n in 1..=4 {
                for m in n + 1..=4 {
                    assert!(sys.block(n, m).iter().all(|x| *x == 0.0), "{rule:?} block ({n},{m})");
                }
            }
        }
    }

    #[test]
    fn diagonal_blocks_equal_an() {
        for (b, c, k) in [(3, 2, 4), (0, 2, 2), (1, 1, 3), (5, 2, 4)] {
            let sys = build_moment_ode(&Rule::from(ReplacementRule::bagchi_pal(b, c, k)), 6, 1, 1).unwrap();
            for n in 1..=6 {
                assert_eq!(sys.diagonal_block(n), build_an(n, b, c, k), "n={n} b={b} c={c} k={k}");
            }
        }
    }

    #[test]
    fn an_examples() {
        assert_eq!(build_an(1, 3, 2, 4), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 2.0]));
        assert_eq!(
            build_an(2, 3, 2, 4),
            DMatrix::from_row_slice(3, 3, &[2.0, 4.0, 0.0, 3.0, 3.0, 2.0, 0.0, 6.0, 4.0])
        );
        assert_eq!(build_an(1, 2, 2, 5), DMatrix::from_row_slice(2, 2, &[3.0, 2.0, 2.0, 3.0]));
    }

    #[test]
    fn spectrum_examples() {
        assert_eq!(eigenvalues_an(1, 3, 2, 4), vec![4.0, -1.0]);
        assert_eq!(eigenvalues_an(2, 3, 2, 4), vec![8.0, 3.0, -2.0]);
        assert_eq!(eigenvalues_an(3, 0, 0, 2), vec![6.0; 4]);

        // characteristic polynomial of [[1,2],[3,2]]: x^2 - 3x - 4 = (x - 4)(x + 1)
        let num = numerical_spectrum(build_an(1, 3, 2, 4));
        assert!((num[0] - 4.0).abs() < 1e-12 && (num[1] + 1.0).abs() < 1e-12);
        let num = numerical_spectrum(build_an(2, 3, 2, 4));
        for (x, y) in num.iter().zip([8.0, 3.0, -2.0]) {
            assert!((x - y).abs() < 1e-10, "{num:?}");
        }
    }

    #[test]
    fn rejects_order_cap_out_of_range() {
        assert!(matches!(build_moment_ode(&example_rule(), 0, 3, 2), Err(Error::OrderCap(0))));
        assert!(matches!(build_moment_ode(&example_rule(), 7, 3, 2), Err(Error::OrderCap(7))));
    }
}
