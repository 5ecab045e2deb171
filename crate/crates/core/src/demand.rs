//! Excess-demand fields built constructively from a scalar potential and a
//! divergence-free remainder.
//!
//! A demand model evaluates as `xi(p) = -grad(phi)(p) + A(p)`. Models are
//! never decomposed from a black-box field; callers supply the two parts (or
//! a linear generator matrix, which this module splits in closed form). The
//! potential is normalized so that `phi` vanishes at the model equilibrium,
//! which makes potential-energy readings comparable across runs.
//!
//! Linear splitting: for a generator matrix `M` the skew part is computed
//! entrywise as `(m_ij - m_ji) / 2`, which is exactly antisymmetric in
//! floating point, and the symmetric part as the floating-point complement
//! `M - K`. The skew diagonal, and hence its trace, is exactly zero. The two
//! parts add back to `M` bit-for-bit whenever each pair average
//! `(m_ij + m_ji) / 2` is no larger in binade than the entries it came from —
//! in particular for any pair of comparable magnitude, for mostly
//! antisymmetric pairs, and for every short-decimal case (exact halfway
//! ties are detected and nudged off by one ulp of the skew entry). For pairs
//! of wildly different scale no floating-point split can reconstruct both
//! entries exactly (the rounding window around `m - k` is narrower than the
//! float spacing there); those reconstruct to within one ulp per entry.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Slack accepted when an operation requires a unit-norm price vector.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Relative scale of the default finite-difference step in divergence checks.
pub const DIVERGENCE_STEP_SCALE: f64 = 1e-5;
/// Default acceptance threshold for the divergence check.
pub const DIVERGENCE_TOL: f64 = 1e-6;

/// Scalar potential with an analytic gradient.
///
/// Implementations must fix the additive constant so the value is zero at the
/// model equilibrium.
pub trait ScalarField: Send + Sync {
    /// Potential value at `p`.
    fn value(&self, p: &DVector<f64>) -> f64;
    /// Gradient of the potential at `p`.
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64>;
}

/// Vector field intended to be divergence-free. The property is checked by
/// [`verify_divergence_free`], not assumed.
pub trait VectorField: Send + Sync {
    /// Field value at `p`.
    fn eval(&self, p: &DVector<f64>) -> DVector<f64>;
}

/// Quadratic potential `phi(p) = (p - center)' H (p - center) / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticPotential {
    /// Coefficient matrix `H` of the quadratic form.
    pub hessian: DMatrix<f64>,
    /// Point where the potential (and its gradient) vanish.
    pub center: DVector<f64>,
}

impl QuadraticPotential {
    /// Builds the quadratic form, checking shapes.
    pub fn new(hessian: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        if hessian.nrows() != hessian.ncols() {
            return Err(Error::invalid(format!(
                "quadratic potential needs a square matrix, got {}x{}",
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        if hessian.nrows() != center.len() {
            return Err(Error::invalid(format!(
                "quadratic potential: matrix is {}x{} but center has length {}",
                hessian.nrows(),
                hessian.ncols(),
                center.len()
            )));
        }
        if !hessian.iter().all(|x| x.is_finite()) || !center.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("quadratic potential: non-finite coefficients"));
        }
        Ok(Self { hessian, center })
    }
}

impl ScalarField for QuadraticPotential {
    fn value(&self, p: &DVector<f64>) -> f64 {
        let q = p - &self.center;
        0.5 * q.dot(&(&self.hessian * &q))
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let q = p - &self.center;
        &self.hessian * q
    }
}

/// Linear divergence-free field `A(p) = K (p - center)` with `K` exactly
/// antisymmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolenoidal {
    /// Antisymmetric generator matrix.
    pub skew: DMatrix<f64>,
    /// Point where the field vanishes.
    pub center: DVector<f64>,
}

impl LinearSolenoidal {
    /// Builds the field, requiring `K` to be antisymmetric to the bit
    /// (`k_ij == -k_ji`, zero diagonal) so its trace — and hence the exact
    /// divergence — is zero.
    pub fn new(skew: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        let n = skew.nrows();
        if n != skew.ncols() {
            return Err(Error::invalid(format!(
                "solenoidal generator must be square, got {}x{}",
                n,
                skew.ncols()
            )));
        }
        if n != center.len() {
            return Err(Error::invalid(format!(
                "solenoidal generator is {n}x{n} but center has length {}",
                center.len()
            )));
        }
        if !skew.iter().all(|x| x.is_finite()) || !center.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("solenoidal field: non-finite coefficients"));
        }
        for i in 0..n {
            if skew[(i, i)] != 0.0 {
                return Err(Error::invalid(format!(
                    "solenoidal generator has non-zero diagonal entry at ({i},{i})"
                )));
            }
            for j in (i + 1)..n {
                if skew[(i, j)] != -skew[(j, i)] {
                    return Err(Error::invalid(format!(
                        "solenoidal generator is not antisymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { skew, center })
    }
}

impl VectorField for LinearSolenoidal {
    fn eval(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.skew * (p - &self.center)
    }
}

/// Two-price linear demand parameters: own-price response `alpha`, symmetric
/// cross-price response `beta`, antisymmetric cross-price response `delta`,
/// and the equilibrium pair `p_hat`.
///
/// The generated field, in deviations `q = p - p_hat`, is
///
/// ```text
/// xi_1 = -alpha q_1 + (beta + delta) q_2
/// xi_2 = (beta - delta) q_1 - alpha q_2
/// ```
///
/// i.e. generator matrix `M = [[-alpha, beta + delta], [beta - delta, -alpha]]`,
/// potential `phi(q) = alpha (q_1^2 + q_2^2) / 2 - beta q_1 q_2`, and rotational
/// part `A(q) = delta (q_2, -q_1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTwoPriceSpec {
    alpha: f64,
    beta: f64,
    delta: f64,
    p_hat: [f64; 2],
}

impl LinearTwoPriceSpec {
    /// Validates and stores the parameters: `alpha > 0`, `beta >= 0`,
    /// everything finite.
    pub fn new(alpha: f64, beta: f64, delta: f64, p_hat: [f64; 2]) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid(format!("alpha must be finite and > 0, got {alpha}")));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        if !p_hat.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("p_hat must be finite"));
        }
        Ok(Self { alpha, beta, delta, p_hat })
    }

    /// Own-price coefficient.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Symmetric cross-price coefficient.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Antisymmetric cross-price coefficient.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Equilibrium price pair.
    pub fn p_hat(&self) -> [f64; 2] {
        self.p_hat
    }

    /// Generator matrix `[[-alpha, beta + delta], [beta - delta, -alpha]]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -self.alpha,
                self.beta + self.delta,
                self.beta - self.delta,
                -self.alpha,
            ],
        )
    }

    /// Same parameters with `p_hat` rescaled to unit norm (sphere mode).
    pub fn normalized(&self) -> Result<Self> {
        let norm = (self.p_hat[0] * self.p_hat[0] + self.p_hat[1] * self.p_hat[1]).sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero equilibrium pair"));
        }
        Self::new(
            self.alpha,
            self.beta,
            self.delta,
            [self.p_hat[0] / norm, self.p_hat[1] / norm],
        )
    }

    /// Builds the demand model: quadratic potential with coefficient matrix
    /// `[[alpha, -beta], [-beta, alpha]]` and rotational part generated by
    /// `[[0, delta], [-delta, 0]]`, both centered at `p_hat`.
    pub fn model(&self) -> DemandModel {
        let center = DVector::from_row_slice(&self.p_hat);
        let hessian = DMatrix::from_row_slice(2, 2, &[self.alpha, -self.beta, -self.beta, self.alpha]);
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, self.delta, -self.delta, 0.0]);
        let potential =
            QuadraticPotential::new(hessian, center.clone()).expect("validated parameters");
        let solenoidal =
            LinearSolenoidal::new(skew, center.clone()).expect("exact antisymmetric literal");
        DemandModel {
            dim: 2,
            potential: Arc::new(potential),
            solenoidal: Arc::new(solenoidal),
            equilibrium: Some(center),
            jacobian: Some(self.matrix()),
            label: format!(
                "linear_two_price(alpha={}, beta={}, delta={})",
                self.alpha, self.beta, self.delta
            ),
        }
    }
}

/// Closed-form split of a linear generator matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionResult {
    /// Symmetric part; generates the gradient component of the field.
    pub symmetric_matrix: DMatrix<f64>,
    /// Antisymmetric part; generates the divergence-free component.
    pub skew_matrix: DMatrix<f64>,
    /// Potential `phi(q) = -q' S q / 2` about `p_hat`, stored with its
    /// coefficient matrix `-S` so that `value`/`gradient` read directly.
    pub potential_quadratic: QuadraticPotential,
}

/// Splits a linear field generator `M` into symmetric and antisymmetric parts
/// about the equilibrium `p_hat`.
///
/// The skew part is `(M - M')/2` computed entrywise, which is antisymmetric to
/// the bit; the symmetric part is the floating-point complement `M - K`, so
/// `symmetric + skew` reproduces `M` exactly (see the module docs for the
/// scale caveat). The potential is `phi(q) = -q' S q / 2` with `q = p - p_hat`.
pub fn decompose_linear(m: &DMatrix<f64>, p_hat: &DVector<f64>) -> Result<DecompositionResult> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::invalid(format!(
            "decompose_linear needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if p_hat.len() != n {
        return Err(Error::invalid(format!(
            "decompose_linear: matrix is {n}x{n} but p_hat has length {}",
            p_hat.len()
        )));
    }
    if !m.iter().all(|x| x.is_finite()) || !p_hat.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("decompose_linear: non-finite input"));
    }

    let mut skew = DMatrix::zeros(n, n);
    let mut symmetric = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = m[(i, j)];
            let b = m[(j, i)];
            let k0 = (a - b) / 2.0;
            // When the pair average lands exactly halfway between floats,
            // the complement can round one ulp away from reconstructing the
            // entry; nudging k by one ulp (still assigned antisymmetrically)
            // moves the sum off the tie. Keep the first candidate that
            // reconstructs both entries, falling back to the plain value.
            let mut chosen = (k0, a - k0, b + k0);
            for k in [k0, k0.next_up(), k0.next_down()] {
                let s_a = a - k;
                let s_b = b + k;
                if s_a + k == a && s_b - k == b {
                    chosen = (k, s_a, s_b);
                    break;
                }
            }
            let (k, s_a, s_b) = chosen;
            skew[(i, j)] = k;
            skew[(j, i)] = -k;
            symmetric[(i, j)] = s_a;
            symmetric[(j, i)] = s_b;
        }
    }
    let potential_quadratic = QuadraticPotential::new(-&symmetric, p_hat.clone())?;
    Ok(DecompositionResult {
        symmetric_matrix: symmetric,
        skew_matrix: skew,
        potential_quadratic,
    })
}

/// Excess-demand model: dimension, potential part, divergence-free part, and
/// optional equilibrium / exact Jacobian.
#[derive(Clone)]
pub struct DemandModel {
    dim: usize,
    potential: Arc<dyn ScalarField>,
    solenoidal: Arc<dyn VectorField>,
    equilibrium: Option<DVector<f64>>,
    jacobian: Option<DMatrix<f64>>,
    label: String,
}

impl fmt::Debug for DemandModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DemandModel")
            .field("dim", &self.dim)
            .field("equilibrium", &self.equilibrium)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl DemandModel {
    /// Builds a model from explicit potential and divergence-free parts.
    ///
    /// `jacobian`, when supplied, must be the exact Jacobian of the combined
    /// field (used by linearization-based maps and analyzers); pass `None`
    /// for nonlinear models and a finite-difference fallback is used instead.
    pub fn custom(
        dim: usize,
        potential: Arc<dyn ScalarField>,
        solenoidal: Arc<dyn VectorField>,
        equilibrium: Option<DVector<f64>>,
        jacobian: Option<DMatrix<f64>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        if let Some(eq) = &equilibrium {
            if eq.len() != dim {
                return Err(Error::invalid(format!(
                    "equilibrium has length {} but model dimension is {dim}",
                    eq.len()
                )));
            }
            if !eq.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid("equilibrium must be finite"));
            }
        }
        if let Some(j) = &jacobian {
            if j.nrows() != dim || j.ncols() != dim {
                return Err(Error::invalid(format!(
                    "jacobian is {}x{} but model dimension is {dim}",
                    j.nrows(),
                    j.ncols()
                )));
            }
        }
        Ok(Self {
            dim,
            potential,
            solenoidal,
            equilibrium,
            jacobian,
            label: label.into(),
        })
    }

    /// Builds a linear model from a generator matrix via [`decompose_linear`].
    pub fn from_matrix(m: &DMatrix<f64>, p_hat: &DVector<f64>) -> Result<Self> {
        let split = decompose_linear(m, p_hat)?;
        let solenoidal = LinearSolenoidal::new(split.skew_matrix, p_hat.clone())?;
        Ok(Self {
            dim: m.nrows(),
            potential: Arc::new(split.potential_quadratic),
            solenoidal: Arc::new(solenoidal),
            equilibrium: Some(p_hat.clone()),
            jacobian: Some(m.clone()),
            label: format!("matrix({}x{})", m.nrows(), m.ncols()),
        })
    }

    /// Builds a model from an explicit quadratic-potential coefficient matrix
    /// and an antisymmetric generator, both centered at `p_hat`.
    ///
    /// `hessian` must be symmetric and `skew` antisymmetric, both to the bit;
    /// scenario files carry literal coefficient arrays, so any asymmetry is an
    /// authoring mistake rather than roundoff.
    pub fn composite(
        hessian: &DMatrix<f64>,
        skew: &DMatrix<f64>,
        p_hat: &DVector<f64>,
    ) -> Result<Self> {
        let n = hessian.nrows();
        if hessian.ncols() != n || skew.nrows() != n || skew.ncols() != n {
            return Err(Error::invalid(
                "composite model: coefficient matrices must be square and same size",
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if hessian[(i, j)] != hessian[(j, i)] {
                    return Err(Error::invalid(format!(
                        "composite model: potential coefficients not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let potential = QuadraticPotential::new(hessian.clone(), p_hat.clone())?;
        let solenoidal = LinearSolenoidal::new(skew.clone(), p_hat.clone())?;
        let jacobian = skew - hessian;
        Ok(Self {
            dim: n,
            potential: Arc::new(potential),
            solenoidal: Arc::new(solenoidal),
            equilibrium: Some(p_hat.clone()),
            jacobian: Some(jacobian),
            label: format!("composite({n}x{n})"),
        })
    }

    /// Number of commodities.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Equilibrium price vector, if the model has one.
    pub fn equilibrium(&self) -> Option<&DVector<f64>> {
        self.equilibrium.as_ref()
    }

    /// Human-readable model tag (echoed into run summaries).
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Unchecked excess demand for integrator inner loops: no dimension or
    /// finiteness guards, so non-finite values propagate into the caller's
    /// state where the per-step abort check catches them.
    pub(crate) fn eval_raw(&self, p: &DVector<f64>) -> DVector<f64> {
        -self.potential.gradient(p) + self.solenoidal.eval(p)
    }

    /// Excess demand `xi(p) = -grad(phi)(p) + A(p)`.
    pub fn excess_demand(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(p)?;
        let xi = -self.potential.gradient(p) + self.solenoidal.eval(p);
        if !xi.iter().all(|x| x.is_finite()) {
            return Err(Error::non_finite(format!("excess demand at p = {:?}", p.as_slice())));
        }
        Ok(xi)
    }

    /// Potential value `phi(p)`.
    pub fn potential_value(&self, p: &DVector<f64>) -> Result<f64> {
        self.check_point(p)?;
        Ok(self.potential.value(p))
    }

    /// Potential gradient at `p`.
    pub fn potential_gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(p)?;
        Ok(self.potential.gradient(p))
    }

    /// Divergence-free part `A(p)`.
    pub fn solenoidal_at(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(p)?;
        Ok(self.solenoidal.eval(p))
    }

    /// Jacobian of the excess demand at `p`: the stored exact matrix when the
    /// model is linear, otherwise a central finite-difference estimate with
    /// step `1e-6 * max(1, |p|)` per coordinate.
    pub fn jacobian_at(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        if let Some(j) = &self.jacobian {
            return Ok(j.clone());
        }
        let h = 1e-6 * p.norm().max(1.0);
        let n = self.dim;
        let mut jac = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut fwd = p.clone();
            fwd[col] += h;
            let mut bwd = p.clone();
            bwd[col] -= h;
            let diff = (self.excess_demand(&fwd)? - self.excess_demand(&bwd)?) / (2.0 * h);
            jac.set_column(col, &diff);
        }
        Ok(jac)
    }

    fn check_point(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::invalid(format!(
                "price vector has length {} but model dimension is {}",
                p.len(),
                self.dim
            )));
        }
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("price vector must be finite"));
        }
        Ok(())
    }
}

fn check_unit(p: &DVector<f64>, op: &str) -> Result<()> {
    let norm = p.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::invalid(format!(
            "{op} requires a unit price vector; |p| = {norm}"
        )));
    }
    Ok(())
}

/// Checks whether `|p . xi(p)| <= tol` at a unit price point.
pub fn verify_walras(model: &DemandModel, p: &DVector<f64>, tol: f64) -> Result<bool> {
    check_unit(p, "verify_walras")?;
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::invalid("verify_walras: tol must be finite and >= 0"));
    }
    let xi = model.excess_demand(p)?;
    Ok(p.dot(&xi).abs() <= tol)
}

/// Removes the radial component: `xi - (p . xi) p` for unit `p`.
///
/// The result is orthogonal to `p` to machine precision.
pub fn project_tangent(p: &DVector<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
    check_unit(p, "project_tangent")?;
    if p.len() != xi.len() {
        return Err(Error::invalid(format!(
            "project_tangent: p has length {} but xi has length {}",
            p.len(),
            xi.len()
        )));
    }
    Ok(xi - p * p.dot(xi))
}

/// Central-difference estimate of the divergence of the model's
/// divergence-free part at `p`, compared against `tol`.
///
/// Defaults: step `h = 1e-5 * max(1, |p|)`, threshold `tol = 1e-6`.
pub fn verify_divergence_free(
    model: &DemandModel,
    p: &DVector<f64>,
    h: Option<f64>,
    tol: Option<f64>,
) -> Result<bool> {
    let h = h.unwrap_or(DIVERGENCE_STEP_SCALE * p.norm().max(1.0));
    let tol = tol.unwrap_or(DIVERGENCE_TOL);
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::invalid("divergence check: step h must be finite and > 0"));
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::invalid("divergence check: tol must be finite and >= 0"));
    }
    let mut div = 0.0;
    for i in 0..model.dim() {
        let mut fwd = p.clone();
        fwd[i] += h;
        let mut bwd = p.clone();
        bwd[i] -= h;
        let a_fwd = model.solenoidal_at(&fwd)?;
        let a_bwd = model.solenoidal_at(&bwd)?;
        div += (a_fwd[i] - a_bwd[i]) / (2.0 * h);
    }
    if !div.is_finite() {
        return Err(Error::non_finite("divergence estimate"));
    }
    Ok(div.abs() <= tol)
}
