use nalgebra::{DMatrix, DVector, Schur, SVD};
use serde::{Deserialize, Serialize};

use super::system::{moment_position, MomentSystem};
use crate::error::{Error, Result};

/// Eigenvector matrices with a larger condition number are treated as
/// defective.
const MAX_EIGENVECTOR_CONDITION: f64 = 1e8;
const INTEGRATOR_RTOL: f64 = 1e-10;
const INTEGRATOR_ATOL: f64 = 1e-12;
const INTEGRATOR_MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Eigendecomposition,
    RungeKutta,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Store `m_{i,j}(t) e^{-k (i+j) t}` instead of `m_{i,j}(t)`.
    pub scaled: bool,
    /// Skip the eigendecomposition and integrate directly.
    pub force_integration: bool,
}

/// Solved moments on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub index: Vec<(u32, u32)>,
    pub k: f64,
    pub times: Vec<f64>,
    /// `values[t][p]` is the moment at `index[p]` and `times[t]`, raw or
    /// scaled according to `scaled`.
    pub values: Vec<Vec<f64>>,
    pub scaled: bool,
    pub method: SolveMethod,
}

impl MomentTrajectory {
    pub fn order_cap(&self) -> u32 {
        self.index.last().map_or(0, |(i, j)| i + j)
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|x| (x - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    fn slot(&self, i: u32, j: u32) -> usize {
        assert!(
            i + j >= 1 && i + j <= self.order_cap(),
            "moment ({i}, {j}) outside order cap {}",
            self.order_cap()
        );
        moment_position(i, j)
    }

    /// Stored value, raw or scaled.
    pub fn value(&self, i: u32, j: u32, t_idx: usize) -> f64 {
        self.values[t_idx][self.slot(i, j)]
    }

    pub fn raw(&self, i: u32, j: u32, t_idx: usize) -> f64 {
        let v = self.value(i, j, t_idx);
        if self.scaled {
            v * (self.k * (i + j) as f64 * self.times[t_idx]).exp()
        } else {
            v
        }
    }

    /// `m_{i,j}(t) e^{-k (i+j) t}`.
    pub fn scaled_value(&self, i: u32, j: u32, t_idx: usize) -> f64 {
        let v = self.value(i, j, t_idx);
        if self.scaled {
            v
        } else {
            v * (-self.k * (i + j) as f64 * self.times[t_idx]).exp()
        }
    }
}

/// Raw trajectories of every moment of `system` on `grid`.
pub fn solve_moments(system: &MomentSystem, grid: &[f64]) -> Result<MomentTrajectory> {
    solve_moments_with(system, grid, SolveOptions::default())
}

/// Solves `m' = L m` on `grid` (strictly increasing, starting at 0).
///
/// Uses `m(t) = V e^{Λ t} V^{-1} m(0)` when `L` has a real, well-conditioned
/// eigenbasis, otherwise integrates with an adaptive Dormand-Prince 5(4)
/// scheme at relative tolerance 1e-10.
pub fn solve_moments_with(
    system: &MomentSystem,
    grid: &[f64],
    options: SolveOptions,
) -> Result<MomentTrajectory> {
    check_grid(grid)?;
    let orders: Vec<f64> = system.index.iter().map(|(i, j)| (i + j) as f64).collect();

    let eigen = if options.force_integration {
        None
    } else {
        Eigenbasis::new(system)
    };

    let (method, mut values) = match eigen {
        Some(basis) => {
            let values = grid
                .iter()
                .map(|&t| {
                    let shift = |p: usize| if options.scaled { system.k * orders[p] } else { 0.0 };
                    basis.evaluate(t, shift)
                })
                .collect();
            (SolveMethod::Eigendecomposition, values)
        }
        None => {
            let mut values = integrate(&system.matrix, &system.initial, grid)?;
            if options.scaled {
                for (row, &t) in values.iter_mut().zip(grid) {
                    for (v, n) in row.iter_mut().zip(&orders) {
                        *v *= (-system.k * n * t).exp();
                    }
                }
            }
            (SolveMethod::RungeKutta, values)
        }
    };
    values[0] = system.initial.iter().copied().collect();

    if let Some((t, _)) = values
        .iter()
        .zip(grid)
        .map(|(row, t)| (t, row))
        .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Solver(format!("moments overflow at t = {t}")));
    }

    Ok(MomentTrajectory {
        index: system.index.clone(),
        k: system.k,
        times: grid.to_vec(),
        values,
        scaled: options.scaled,
        method,
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    match grid.first() {
        None => return Err(Error::TimeGrid("grid is empty".into())),
        Some(&t0) if t0 != 0.0 => {
            return Err(Error::TimeGrid(format!("grid must start at 0, starts at {t0}")))
        }
        _ => {}
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::TimeGrid("grid contains non-finite times".into()));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::TimeGrid(format!(
            "grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Real eigenbasis of `L` with the expansion coefficients of `m(0)`.
///
/// Built block by block: an eigenpair `(λ, u)` of the order-`n` diagonal
/// block extends to an eigenvector of `L` that vanishes on orders below `n`
/// and solves `(λ - A_m) v_m = sum_{p<m} L_{m,p} v_p` on each higher order
/// `m`. That solve is singular exactly when `λ` is also an eigenvalue of a
/// higher block, in which case `L` is generically defective and `None` is
/// returned.
struct Eigenbasis {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    coefficients: DVector<f64>,
}

/// Eigenpairs of a small dense block; `None` if any eigenvalue is complex or
/// a repeated eigenvalue lacks a full eigenspace.
fn block_eigenpairs(a: &DMatrix<f64>) -> Option<Vec<(f64, DVector<f64>)>> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    let mut spectrum: Vec<f64> = Schur::try_new(a.clone(), f64::EPSILON, 10_000)?
        .eigenvalues()?
        .iter()
        .copied()
        .collect();
    spectrum.sort_by(f64::total_cmp);

    let mut pairs = Vec::with_capacity(n);
    let mut start = 0;
    for p in 1..=n {
        if p < n && spectrum[p] - spectrum[p - 1] <= 1e-7 * scale {
            continue;
        }
        let group = &spectrum[start..p];
        let multiplicity = group.len();
        let lambda = group.iter().sum::<f64>() / multiplicity as f64;
        start = p;

        let svd = SVD::try_new(a - DMatrix::identity(n, n) * lambda, false, true, f64::EPSILON, 10_000)?;
        let v_t = svd.v_t.as_ref()?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
        for &row in order.iter().take(multiplicity) {
            if svd.singular_values[row] > 1e-9 * scale {
                return None;
            }
            let u: DVector<f64> = v_t.row(row).transpose();
            let refined = u.dot(&(a * &u)) / u.dot(&u);
            pairs.push((refined, u));
        }
    }
    Some(pairs)
}

impl Eigenbasis {
    fn new(system: &MomentSystem) -> Option<Self> {
        let dim = system.dim();
        let cap = system.order_cap;
        let offset = |n: u32| moment_position(n, 0);

        let mut values = Vec::with_capacity(dim);
        let mut vectors = DMatrix::zeros(dim, dim);
        for n in 1..=cap {
            for (lambda, u) in block_eigenpairs(&system.diagonal_block(n))? {
                let col = values.len();
                vectors.view_mut((offset(n), col), (u.len(), 1)).copy_from(&u);
                for m in n + 1..=cap {
                    let size = m as usize + 1;
                    let mut rhs = DVector::zeros(size);
                    for p in n..m {
                        let v_p = vectors.view((offset(p), col), (p as usize + 1, 1)).into_owned();
                        rhs += system.block(m, p) * v_p;
                    }
                    let shifted = DMatrix::identity(size, size) * lambda - system.diagonal_block(m);
                    let sv = shifted.clone().singular_values();
                    if sv.min() <= 1e-8 * sv.max().max(1.0) {
                        return None;
                    }
                    let v_m = shifted.lu().solve(&rhs)?;
                    vectors.view_mut((offset(m), col), (size, 1)).copy_from(&v_m);
                }
                values.push(lambda);
            }
        }

        let sv = vectors.clone().singular_values();
        if !(sv.min() > 0.0 && sv.max() / sv.min() <= MAX_EIGENVECTOR_CONDITION) {
            return None;
        }

        // V is block lower-triangular with the same grouping as the moments,
        // so the coefficients follow by block forward substitution.
        let mut coefficients = DVector::zeros(dim);
        for n in 1..=cap {
            let (start, size) = (offset(n), n as usize + 1);
            let mut rhs: DVector<f64> = system.initial.rows(start, size).into_owned();
            if start > 0 {
                rhs -= vectors.view((start, 0), (size, start)) * coefficients.rows(0, start);
            }
            let diag = vectors.view((start, start), (size, size)).into_owned();
            let c = diag.lu().solve(&rhs)?;
            coefficients.rows_mut(start, size).copy_from(&c);
        }

        let basis = Self {
            values,
            vectors,
            coefficients,
        };
        let reconstructed = basis.evaluate(0.0, |_| 0.0);
        let ok = reconstructed
            .iter()
            .zip(system.initial.iter())
            .all(|(a, b)| (a - b).abs() <= 1e-10 * b.abs().max(1.0));
        ok.then_some(basis)
    }

    /// `sum_s V[p,s] c_s e^{(λ_s - shift(p)) t}` for every component `p`.
    fn evaluate(&self, t: f64, shift: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..self.vectors.nrows())
            .map(|p| {
                let sh = shift(p);
                self.values
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| self.vectors[(p, *s)] != 0.0)
                    .map(|(s, lambda)| {
                        self.vectors[(p, s)] * self.coefficients[s] * ((lambda - sh) * t).exp()
                    })
                    .sum()
            })
            .collect()
    }
}

// Dormand-Prince 5(4) tableau. The system is autonomous, so the stage
// nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = L y` from `y(0) = y0`, returning `y` at each grid time.
fn integrate(l: &DMatrix<f64>, y0: &DVector<f64>, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    let rhs = |y: &DVector<f64>| l * y;
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.iter().copied().collect());

    let mut t = 0.0;
    let mut y = y0.clone();
    let mut k1 = rhs(&y);
    let mut h = 0.01 / l.amax().max(1.0);
    let mut steps = 0usize;

    for &target in &grid[1..] {
        while t < target {
            steps += 1;
            if steps > INTEGRATOR_MAX_STEPS {
                return Err(Error::Solver(format!(
                    "integrator exceeded {INTEGRATOR_MAX_STEPS} steps before t = {target}"
                )));
            }
            let last = t + h >= target;
            let step = if last { target - t } else { h };

            let mut stages: Vec<DVector<f64>> = Vec::with_capacity(7);
            stages.push(k1.clone());
            for s in 1..7 {
                let mut arg = y.clone();
                for (r, a) in A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        arg.axpy(step * a, &stages[r], 1.0);
                    }
                }
                stages.push(rhs(&arg));
            }
            // Stage 7 is evaluated at the fifth-order solution (FSAL).
            let mut y_new = y.clone();
            for (r, a) in A[6].iter().enumerate() {
                if *a != 0.0 {
                    y_new.axpy(step * a, &stages[r], 1.0);
                }
            }

            let mut err = 0.0f64;
            for p in 0..y.len() {
                let e: f64 = E.iter().zip(&stages).map(|(w, k)| w * k[p]).sum::<f64>() * step;
                let sc = INTEGRATOR_ATOL + INTEGRATOR_RTOL * y[p].abs().max(y_new[p].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                return Err(Error::Solver(format!("non-finite error estimate at t = {t}")));
            }

            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
                k1 = stages.pop().expect("seven stages");
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && last {
                // keep the unclipped step size for the next interval
                h = h.max(step * factor);
            } else {
                h = step * factor;
            }
            if h < 1e-14 * target.max(1.0) {
                return Err(Error::Solver(format!(
                    "step size underflow at t = {t}; cannot meet tolerance"
                )));
            }
        }
        out.push(y.iter().copied().collect());
    }
    Ok(out)
}
