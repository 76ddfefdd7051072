use std::sync::Arc;

use ndarray::Array2;

use super::{cubic_positive_root, HifbsOracle, HifbsSolution};
use crate::error::{Error, Result};
use crate::problem::{check_gamma, CompositeProblem, Point};
use crate::problems::nmf::{frobenius, NmfData, NmfState};

/// Minimizes `⟨Θ_U, U⟩ + ⟨Θ_V, V⟩ + (a/4)T² + (c/2)T` over `U, V ≥ 0`, where
/// `T = ‖U‖_F² + ‖V‖_F²`. The minimizer is `r·Π₊(−Θ)` with `r` the root of
/// `a(A_U² + A_V²)r³ + c·r − 1 = 0`.
pub(crate) fn projected_cubic_step(
    theta_u: &Array2<f64>,
    theta_v: &Array2<f64>,
    a: f64,
    c: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let pu = theta_u.mapv(|t| (-t).max(0.0));
    let pv = theta_v.mapv(|t| (-t).max(0.0));
    let au = frobenius(&pu.view());
    let av = frobenius(&pv.view());
    if au == 0.0 && av == 0.0 {
        return Ok((pu, pv));
    }
    let r = cubic_positive_root(a * (au * au + av * av), c, 1.0)?;
    Ok((pu * r, pv * r))
}

fn gradient_blocks(
    data: &NmfData,
    u: &Array2<f64>,
    v: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let (gu, gv) = data.smooth_gradient(u, v);
    let (_, hu, hv) = data.kernel(u, v);
    (gu, gv, hu, hv)
}

fn check_shapes(state: &NmfState, u: &Array2<f64>, v: &Array2<f64>) -> Result<()> {
    let (m, n, r) = state.dims();
    if u.dim() != (m, r) || v.dim() != (n, r) {
        return Err(Error::InvalidParameter(format!(
            "factor shapes {:?}/{:?} do not match data {m}×{n} at rank {r}",
            u.dim(),
            v.dim()
        )));
    }
    Ok(())
}

/// Closed-form minimizer of
///
/// ```text
/// Ψ(U,V) = ⟨∇_U f − ∇_U h, U⟩ + ⟨∇_V f − ∇_V h, V⟩ + g(U,V) + h(U,V) + (‖U − U_k‖² + ‖V − V_k‖²)/(2γ)
/// ```
///
/// with gradients taken at `(U_k, V_k)`. When `Π₊(−Θ)` vanishes in both
/// blocks the minimizer is `(0, 0)`.
pub fn solve_hifbs_nmf(
    state: &NmfState,
    u_cur: &Array2<f64>,
    v_cur: &Array2<f64>,
    gamma: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_gamma(gamma)?;
    check_shapes(state, u_cur, v_cur)?;
    closed_form(&state.data(), u_cur, v_cur, gamma)
}

fn closed_form(
    data: &NmfData,
    u: &Array2<f64>,
    v: &Array2<f64>,
    gamma: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (gu, gv, hu, hv) = gradient_blocks(data, u, v);
    let lambda = data.lambda;
    let theta_u = (gu - hu) - u / gamma + lambda;
    let theta_v = (gv - hv) - v / gamma + lambda;
    projected_cubic_step(&theta_u, &theta_v, data.a, data.b + 1.0 / gamma)
}

/// One Bregman proximal gradient step
/// `argmin ⟨∇f(x), y⟩ + g(y) + D_h(y, x)/γ` for the NMF kernel.
///
/// Scaling by `γ` gives `⟨γ∇f − ∇h(x) + γλ, y⟩ + h(y)` on `y ≥ 0`, hence
/// `Θ = γ∇f − ∇h + γλ` and the cubic `a(A_U² + A_V²)r³ + b·r − 1 = 0`.
pub(crate) fn bregman_step_nmf(
    state: &NmfState,
    u: &Array2<f64>,
    v: &Array2<f64>,
    gamma: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_gamma(gamma)?;
    check_shapes(state, u, v)?;
    let data = state.data();
    let (gu, gv, hu, hv) = gradient_blocks(&data, u, v);
    let shift = gamma * data.lambda;
    let theta_u = gu * gamma - hu + shift;
    let theta_v = gv * gamma - hv + shift;
    projected_cubic_step(&theta_u, &theta_v, data.a, data.b)
}

/// [`HifbsOracle`] for the reformulated NMF problem with `p = 2`: exact, one cubic per call.
#[derive(Debug, Clone)]
pub struct NmfClosedForm {
    data: Arc<NmfData>,
}

impl NmfClosedForm {
    pub fn new(state: &NmfState) -> Self {
        NmfClosedForm {
            data: Arc::new(state.data()),
        }
    }
}

impl HifbsOracle for NmfClosedForm {
    fn solve(
        &self,
        problem: &CompositeProblem,
        x: &Point,
        gamma: f64,
        epsilon: f64,
    ) -> Result<HifbsSolution> {
        check_gamma(gamma)?;
        if problem.p() != 2.0 {
            return Err(Error::InvalidParameter(format!(
                "closed-form NMF step needs p = 2, got {}",
                problem.p()
            )));
        }
        crate::error::check_dim(self.data.dim(), x.len())?;
        let (u, v) = self.data.split(x);
        let (un, vn) = closed_form(&self.data, &u.to_owned(), &v.to_owned(), gamma)?;
        HifbsSolution::new(problem, x, NmfState::flatten(&un, &vn), gamma, epsilon, 1)
    }
}
