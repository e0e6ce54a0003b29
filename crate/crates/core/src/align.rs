//! Fused Gromov-Wasserstein alignment between the emotion-side and cause-side
//! representations of one conversation.
//!
//! The objective is
//!
//! ```text
//! L(T) = alpha * <C_attr, T> + (1 - alpha) * sum_{i,k,j,l} (A_E[i,k] - A_C[j,l])^2 T[i,j] T[k,l]
//! ```
//!
//! over couplings with uniform marginals. Starting from the uniform plan, the
//! quadratic term is linearized around the current plan and the resulting
//! entropic OT problem is solved with a log-domain Sinkhorn iteration. An outer
//! step that raises the exact objective is discarded and the loop stops, so the
//! returned plan never scores worse than the uniform start.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::matrix::{cosine_similarity, log_sum_exp, row_softmax, DenseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportPlan {
    #[serde(rename = "T")]
    pub t: DenseMatrix,
    /// Row softmax of `t` at temperature `tau_r`.
    #[serde(rename = "T_tilde")]
    pub t_tilde: DenseMatrix,
    /// Exact objective of the uniform start followed by every accepted iterate.
    pub objective_trace: Vec<f64>,
    /// Accepted outer iterations.
    pub iterations_used: usize,
    /// Whether every inner Sinkhorn solve met its marginal tolerance.
    pub sinkhorn_converged: bool,
}

/// Sinkhorn solution with solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornSolution {
    pub plan: DenseMatrix,
    pub iterations: usize,
    /// Max-norm marginal residual at exit.
    pub residual: f64,
    pub converged: bool,
}

/// `C_attr(i, j) = 1 - cos(h_E[i], h_C[j])`.
pub fn attr_cost(h_e: &DenseMatrix, h_c: &DenseMatrix) -> Result<DenseMatrix> {
    if h_e.rows() != h_c.rows() || h_e.cols() != h_c.cols() {
        return Err(Error::contract(format!(
            "attribute cost on {:?} and {:?} representations",
            h_e.shape(),
            h_c.shape()
        )));
    }
    let n = h_e.rows();
    let mut cost = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cost[(i, j)] = 1.0 - cosine_similarity(h_e.row(i), h_c.row(j))?;
        }
    }
    Ok(cost)
}

fn check_square_trio(a_e: &DenseMatrix, a_c: &DenseMatrix, t: &DenseMatrix) -> Result<usize> {
    let n = a_e.rows();
    if !a_e.is_square() || a_c.shape() != (n, n) || t.shape() != (n, n) {
        return Err(Error::contract(format!(
            "structure cost needs matching square matrices, got {:?}, {:?}, {:?}",
            a_e.shape(),
            a_c.shape(),
            t.shape()
        )));
    }
    Ok(n)
}

/// Linearized structure cost
/// `C(i, j) = sum_{k,l} (A_E[i,k] - A_C[j,l])^2 T[k,l]`, evaluated through the
/// square-loss decomposition
/// `(A_E o A_E) r 1^T + 1 c^T (A_C o A_C)^T - 2 A_E T A_C^T` with `r`, `c` the
/// row and column sums of `T`.
pub fn struct_cost_linearized(
    a_e: &DenseMatrix,
    a_c: &DenseMatrix,
    t: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = check_square_trio(a_e, a_c, t)?;
    let row_mass = t.row_sums();
    let col_mass = t.col_sums();
    let emotion_term = a_e.map(|x| x * x).matvec(&row_mass)?;
    let cause_term = a_c.map(|x| x * x).matvec(&col_mass)?;
    let cross = a_e.matmul(t)?.matmul(&a_c.transpose())?;
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        emotion_term[i] + cause_term[j] - 2.0 * cross[(i, j)]
    }))
}

/// `sum_{i,k,j,l} (A_E[i,k] - A_C[j,l])^2 T[i,j] T[k,l] = <C_struct(T), T>`.
pub fn struct_loss(a_e: &DenseMatrix, a_c: &DenseMatrix, t: &DenseMatrix) -> Result<f64> {
    struct_cost_linearized(a_e, a_c, t)?.inner(t)
}

/// Exact fused objective at `t`.
pub fn fused_objective(
    c_attr: &DenseMatrix,
    a_e: &DenseMatrix,
    a_c: &DenseMatrix,
    t: &DenseMatrix,
    alpha: f64,
) -> Result<f64> {
    let attr = c_attr.inner(t)?;
    let structure = if alpha < 1.0 {
        struct_loss(a_e, a_c, t)?
    } else {
        0.0
    };
    Ok(alpha * attr + (1.0 - alpha) * structure)
}

/// Entropic OT plan for `cost` with uniform marginals.
pub fn sinkhorn(
    cost: &DenseMatrix,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
) -> Result<DenseMatrix> {
    Ok(sinkhorn_with_stats(cost, epsilon, max_iters, tol)?.plan)
}

/// Log-domain Sinkhorn with uniform marginals `1/rows` and `1/cols`.
///
/// Potentials `f`, `g` parameterize `T[i,j] = exp((f_i + g_j - C[i,j]) / eps)`.
/// Each sweep makes the column marginals exact; iteration stops once the row
/// residual (max norm) drops below `tol`, or after `max_iters` sweeps.
pub fn sinkhorn_with_stats(
    cost: &DenseMatrix,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornSolution> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::contract(format!(
            "sinkhorn epsilon must be > 0, got {epsilon}"
        )));
    }
    if !cost.all_finite() {
        return Err(Error::contract("sinkhorn cost contains non-finite entries"));
    }
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Ok(SinkhornSolution {
            plan: DenseMatrix::zeros(n, m),
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let log_mu = -(n as f64).ln();
    let log_nu = -(m as f64).ln();
    let mu = 1.0 / n as f64;

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut buf = vec![0.0; n.max(m)];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < max_iters {
        iterations += 1;
        for (i, f_i) in f.iter_mut().enumerate() {
            for ((b, g_j), c) in buf.iter_mut().zip(&g).zip(cost.row(i)) {
                *b = (g_j - c) / epsilon;
            }
            *f_i = epsilon * (log_mu - log_sum_exp(&buf[..m]));
        }
        for j in 0..m {
            for i in 0..n {
                buf[i] = (f[i] - cost[(i, j)]) / epsilon;
            }
            g[j] = epsilon * (log_nu - log_sum_exp(&buf[..n]));
        }
        residual = (0..n)
            .map(|i| {
                let mass: f64 = (0..m)
                    .map(|j| ((f[i] + g[j] - cost[(i, j)]) / epsilon).exp())
                    .sum();
                (mass - mu).abs()
            })
            .fold(0.0, f64::max);
        if residual < tol {
            break;
        }
    }

    let plan = DenseMatrix::from_fn(n, m, |i, j| ((f[i] + g[j] - cost[(i, j)]) / epsilon).exp());
    Ok(SinkhornSolution {
        plan,
        iterations,
        residual,
        converged: residual < tol,
    })
}

/// Aligns emotion-side and cause-side graphs; see the module docs.
pub fn fgw_align(
    h_e: &DenseMatrix,
    h_c: &DenseMatrix,
    a_e: &DenseMatrix,
    a_c: &DenseMatrix,
    hp: &HyperParams,
) -> Result<TransportPlan> {
    let c_attr = attr_cost(h_e, h_c)?;
    let n = c_attr.rows();
    check_square_trio(a_e, a_c, &c_attr)?;
    if !(0.0..=1.0).contains(&hp.alpha) {
        return Err(Error::contract(format!(
            "alpha must lie in [0, 1], got {}",
            hp.alpha
        )));
    }
    if n == 0 {
        return Ok(TransportPlan {
            t: DenseMatrix::zeros(0, 0),
            t_tilde: DenseMatrix::zeros(0, 0),
            objective_trace: vec![0.0],
            iterations_used: 0,
            sinkhorn_converged: true,
        });
    }

    let alpha = hp.alpha;
    let mut plan = DenseMatrix::filled(n, n, 1.0 / (n * n) as f64);
    let mut objective = fused_objective(&c_attr, a_e, a_c, &plan, alpha)?;
    let mut objective_trace = vec![objective];
    let mut iterations_used = 0;
    let mut sinkhorn_converged = true;

    for _ in 0..hp.outer_iters {
        let cost = if alpha < 1.0 {
            let c_struct = struct_cost_linearized(a_e, a_c, &plan)?;
            c_attr.lin_comb(alpha, &c_struct, 1.0 - alpha)?
        } else {
            c_attr.clone()
        };
        let solved = sinkhorn_with_stats(&cost, hp.epsilon, hp.sinkhorn_iters, hp.sinkhorn_tol)?;
        let candidate = fused_objective(&c_attr, a_e, a_c, &solved.plan, alpha)?;
        if candidate > objective {
            break;
        }
        sinkhorn_converged &= solved.converged;
        plan = solved.plan;
        iterations_used += 1;
        objective_trace.push(candidate);
        let delta = (objective - candidate).abs();
        objective = candidate;
        if delta < hp.outer_tol {
            break;
        }
    }

    let t_tilde = row_softmax(&plan, hp.tau_r)?;
    Ok(TransportPlan {
        t: plan,
        t_tilde,
        objective_trace,
        iterations_used,
        sinkhorn_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_struct_cost(a_e: &DenseMatrix, a_c: &DenseMatrix, t: &DenseMatrix) -> DenseMatrix {
        let n = a_e.rows();
        DenseMatrix::from_fn(n, n, |i, j| {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += (a_e[(i, k)] - a_c[(j, l)]).powi(2) * t[(k, l)];
                }
            }
            s
        })
    }

    #[test]
    fn attr_cost_examples() {
        let h = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let c = attr_cost(&h, &h).unwrap();
        assert_eq!(c[(0, 0)], 0.0);
        assert_eq!(c[(1, 1)], 0.0);
        assert_eq!(c[(0, 1)], 1.0);

        let he = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let hc = DenseMatrix::from_rows(&[[2.0, 1.0]]).unwrap();
        assert!((attr_cost(&he, &hc).unwrap()[(0, 0)] - 0.2).abs() < 1e-15);

        assert!(attr_cost(&he, &h).is_err());
    }

    #[test]
    fn struct_cost_zero_cases() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.1);
        let zero = DenseMatrix::zeros(3, 3);
        let t = DenseMatrix::filled(3, 3, 1.0 / 9.0);
        assert_eq!(struct_cost_linearized(&zero, &zero, &t).unwrap(), zero);
        assert_eq!(struct_cost_linearized(&a, &a, &zero).unwrap(), zero);
        assert_eq!(struct_loss(&a, &a, &zero).unwrap(), 0.0);
    }

    #[test]
    fn struct_cost_matches_naive_sum_on_identity_plan() {
        let a = DenseMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let t = DenseMatrix::identity(5).scale(0.2);
        let fast = struct_cost_linearized(&a, &a, &t).unwrap();
        let slow = naive_struct_cost(&a, &a, &t);
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-10);
    }

    #[test]
    fn struct_cost_shape_errors() {
        let a = DenseMatrix::zeros(2, 2);
        let b = DenseMatrix::zeros(3, 3);
        assert!(struct_cost_linearized(&a, &b, &a).is_err());
        assert!(struct_cost_linearized(&a, &a, &b).is_err());
    }

    #[test]
    fn sinkhorn_single_point() {
        let t = sinkhorn(&DenseMatrix::filled(1, 1, 3.0), 0.5, 10, 1e-9).unwrap();
        assert!((t[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sinkhorn_constant_cost_is_uniform() {
        let t = sinkhorn(&DenseMatrix::filled(4, 4, 0.7), 0.5, 100, 1e-12).unwrap();
        for &x in t.as_slice() {
            assert!((x - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sinkhorn_two_by_two_concentrates_on_diagonal() {
        let c = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let t = sinkhorn(&c, 0.5, 500, 1e-12).unwrap();
        // closed form: by symmetry T = [[a, b], [b, a]] with a / b = exp(2) and a + b = 1/2
        let e2 = 2f64.exp();
        let a = 0.5 * e2 / (1.0 + e2);
        assert!((t[(0, 0)] - a).abs() < 1e-12);
        assert!((t[(0, 1)] - (0.5 - a)).abs() < 1e-12);
        assert!(t[(0, 0)] > t[(0, 1)]);
    }

    #[test]
    fn sinkhorn_survives_tiny_epsilon() {
        let c =
            DenseMatrix::from_rows(&[[0.0, 50.0, 100.0], [100.0, 0.0, 50.0], [50.0, 100.0, 0.0]])
                .unwrap();
        let sol = sinkhorn_with_stats(&c, 1e-4, 500, 1e-9).unwrap();
        assert!(sol.plan.all_finite());
        assert!(sol.converged);
        assert!((sol.plan[(0, 0)] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn sinkhorn_rejects_bad_input() {
        let c = DenseMatrix::zeros(2, 2);
        assert!(sinkhorn(&c, 0.0, 10, 1e-9).is_err());
        assert!(sinkhorn(&DenseMatrix::filled(2, 2, f64::NAN), 0.5, 10, 1e-9).is_err());
    }

    fn small_instance() -> (DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix) {
        let h_e =
            DenseMatrix::from_rows(&[[1.0, 0.2, -0.3], [0.1, 0.9, 0.4], [-0.5, 0.3, 1.0]]).unwrap();
        let h_c =
            DenseMatrix::from_rows(&[[0.8, -0.1, 0.0], [0.3, 1.0, 0.2], [0.0, 0.1, 0.7]]).unwrap();
        let a_e =
            DenseMatrix::from_rows(&[[0.6, 0.4, 0.0], [0.3, 0.4, 0.3], [0.0, 0.5, 0.5]]).unwrap();
        let a_c =
            DenseMatrix::from_rows(&[[0.5, 0.5, 0.0], [0.2, 0.6, 0.2], [0.0, 0.3, 0.7]]).unwrap();
        (h_e, h_c, a_e, a_c)
    }

    #[test]
    fn alpha_one_is_plain_entropic_ot() {
        let (h_e, h_c, a_e, a_c) = small_instance();
        let hp = HyperParams {
            alpha: 1.0,
            ..HyperParams::default()
        };
        let plan = fgw_align(&h_e, &h_c, &a_e, &a_c, &hp).unwrap();
        let direct = sinkhorn(
            &attr_cost(&h_e, &h_c).unwrap(),
            hp.epsilon,
            hp.sinkhorn_iters,
            hp.sinkhorn_tol,
        )
        .unwrap();
        assert_eq!(plan.t, direct);
    }

    #[test]
    fn pure_structure_objective_descends() {
        let (h_e, h_c, a_e, _) = small_instance();
        let hp = HyperParams {
            alpha: 0.0,
            epsilon: 0.05,
            ..HyperParams::default()
        };
        let plan = fgw_align(&h_e, &h_c, &a_e, &a_e, &hp).unwrap();
        let trace = &plan.objective_trace;
        assert!(trace.last().unwrap() <= &(trace[0] + 1e-9));
    }

    #[test]
    fn exact_objective_at_ends_descends() {
        let (h_e, h_c, a_e, a_c) = small_instance();
        let hp = HyperParams::default();
        let plan = fgw_align(&h_e, &h_c, &a_e, &a_c, &hp).unwrap();

        // independent evaluation through the quadruple sum
        let c_attr = attr_cost(&h_e, &h_c).unwrap();
        let exact = |t: &DenseMatrix| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            s += (a_e[(i, k)] - a_c[(j, l)]).powi(2) * t[(i, j)] * t[(k, l)];
                        }
                    }
                }
            }
            hp.alpha * c_attr.inner(t).unwrap() + (1.0 - hp.alpha) * s
        };
        let start = exact(&DenseMatrix::filled(3, 3, 1.0 / 9.0));
        let end = exact(&plan.t);
        assert!(end <= start + 1e-9);
        assert!((plan.objective_trace[0] - start).abs() < 1e-12);
        assert!((plan.objective_trace.last().unwrap() - end).abs() < 1e-12);
    }

    #[test]
    fn t_tilde_rows_are_distributions() {
        let (h_e, h_c, a_e, a_c) = small_instance();
        let plan = fgw_align(&h_e, &h_c, &a_e, &a_c, &HyperParams::default()).unwrap();
        for s in plan.t_tilde.row_sums() {
            assert!((s - 1.0).abs() < 1e-9);
        }
        for s in plan.t.row_sums().into_iter().chain(plan.t.col_sums()) {
            assert!((s - 1.0 / 3.0).abs() < 1e-6);
        }
    }
}
