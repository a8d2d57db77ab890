//! Mechanical control systems with configuration outputs, their Lagrangian
//! front-end, the tangent lift, and the mechanical transformation group
//! (coordinate change `Φ(x,v) = (φ(x), ∂φ/∂x·v)` composed with quadratic
//! feedback `u_r = vᵀγ^r(x)v + α^r(x) + Σ_s β^r_s(x) ũ_s`).

use crate::expr::diff::diff;
use crate::expr::nf::simplify;
use crate::expr::{is_zero, Expr, Point, ZeroTestError, ZeroVerdict};
use crate::symmat::{self, SymMatrix, SymVector};
use std::collections::BTreeMap;

#[derive(Clone, Debug, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("Christoffel symbols not symmetric: Γ^{i}_({j},{k}) differs from Γ^{i}_({k},{j})")]
    AsymmetricChristoffel { i: usize, j: usize, k: usize },
    #[error("inertia matrix not symmetric at entry ({i},{j})")]
    AsymmetricMetric { i: usize, j: usize },
    #[error("{what} depends on velocity variables; only configuration dependence is allowed")]
    VelocityDependence { what: String },
    #[error("more outputs than inputs is unsupported: m = {m} exceeds n = {n}")]
    TooManyOutputs { m: usize, n: usize },
    #[error("degenerate metric: det M vanishes ({verdict})")]
    DegenerateMetric { verdict: String },
    #[error("feedback matrix β is singular")]
    SingularBeta,
    #[error("diffeomorphism Jacobian is singular")]
    SingularJacobian,
    #[error("φ is not symbolically invertible here; provide inverse explicitly")]
    PhiNotInvertible,
    #[error("provided φ-inverse fails the round-trip check on component {component}")]
    BadInverse { component: usize },
    #[error("zero test failed: {0}")]
    ZeroTest(#[from] ZeroTestError),
}

/// A mechanical control system
///
/// ```text
/// ẋ = v,   v̇ = −vᵀΓ(x)v + e(x) + Σ_r g_r(x) u_r,   y_ℓ = h_ℓ(x)
/// ```
///
/// All stored expressions are functions of configuration only.  Velocity
/// variables, where they appear (tangent lift, feedback quadratic forms),
/// use indices n+1..2n.
#[derive(Clone, Debug)]
pub struct MechanicalSystem {
    pub n: usize,
    pub m: usize,
    /// Γ\[i\]\[j\]\[k\] = Γ^{i+1}_{(j+1)(k+1)}, symmetric in (j,k).
    pub gamma: Vec<Vec<Vec<Expr>>>,
    pub e: SymVector,
    /// g\[r\]\[i\] = g_{r+1}^{i+1}.
    pub g: Vec<SymVector>,
    pub h: SymVector,
    pub var_names: Vec<String>,
    /// Default numeric parameter values (analysis points start from these).
    pub params: BTreeMap<String, f64>,
}

impl MechanicalSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        var_names: Vec<String>,
        params: BTreeMap<String, f64>,
        gamma: Vec<Vec<Vec<Expr>>>,
        e: SymVector,
        g: Vec<SymVector>,
        h: SymVector,
    ) -> Result<MechanicalSystem, ModelError> {
        if m > n {
            return Err(ModelError::TooManyOutputs { m, n });
        }
        if var_names.len() != n {
            return Err(ModelError::Dimensions(format!(
                "{} variable names for n = {n}",
                var_names.len()
            )));
        }
        let dims_ok = gamma.len() == n
            && gamma.iter().all(|gi| {
                gi.len() == n && gi.iter().all(|row| row.len() == n)
            })
            && e.len() == n
            && g.len() == m
            && g.iter().all(|gr| gr.len() == n)
            && h.len() == m;
        if !dims_ok {
            return Err(ModelError::Dimensions(
                "Γ must be n×n×n, e length n, g an m-list of n-vectors, h length m".into(),
            ));
        }
        for (what, exprs) in [
            ("Christoffel symbol", gamma.iter().flatten().flatten().collect::<Vec<_>>()),
            ("uncontrolled field e", e.iter().collect()),
            ("control field g", g.iter().flatten().collect()),
            ("output h", h.iter().collect()),
        ] {
            for ex in exprs {
                if ex.max_var_index() > n {
                    return Err(ModelError::VelocityDependence { what: what.into() });
                }
            }
        }
        for (i, gi) in gamma.iter().enumerate() {
            for j in 0..n {
                for k in (j + 1)..n {
                    let d = Expr::sub(gi[j][k].clone(), gi[k][j].clone());
                    if !is_zero(&d)?.is_zero() {
                        return Err(ModelError::AsymmetricChristoffel {
                            i: i + 1,
                            j: j + 1,
                            k: k + 1,
                        });
                    }
                }
            }
        }
        Ok(MechanicalSystem {
            n,
            m,
            gamma,
            e,
            g,
            h,
            var_names,
            params,
        })
    }

    /// Velocity expression v^j as a tangent-bundle variable.
    pub fn v(&self, j: usize) -> Expr {
        Expr::Var(self.n + j)
    }

    /// Variable names on TQ: configuration names followed by velocity names.
    pub fn tq_var_names(&self) -> Vec<String> {
        let mut out = self.var_names.clone();
        for name in &self.var_names {
            out.push(velocity_name(name));
        }
        out
    }

    /// Analysis point with the system's default parameter values bound.
    pub fn point(&self, x: Vec<f64>, v: Option<Vec<f64>>) -> Point {
        Point {
            x,
            v,
            params: self.params.clone(),
        }
    }

    /// The quadratic drift term −Σ_{jk} Γ^i_{jk} v^j v^k + e^i on TQ.
    pub fn acceleration_drift(&self, i: usize) -> Expr {
        let mut terms = vec![self.e[i - 1].clone()];
        for j in 1..=self.n {
            for k in 1..=self.n {
                let gijk = &self.gamma[i - 1][j - 1][k - 1];
                if gijk.is_const_zero() {
                    continue;
                }
                terms.push(Expr::neg(gijk.clone() * self.v(j) * self.v(k)));
            }
        }
        simplify(&Expr::add(terms))
    }

    /// Same system with the output map replaced (re-validated).
    pub fn with_outputs(&self, h: SymVector) -> Result<MechanicalSystem, ModelError> {
        MechanicalSystem::new(
            self.n,
            self.m,
            self.var_names.clone(),
            self.params.clone(),
            self.gamma.clone(),
            self.e.clone(),
            self.g.clone(),
            h,
        )
    }

    /// Drift and control vector fields of the tangent lift on TQ:
    /// F = (v, −vᵀΓv + e), G_r = (0, g_r), as 2n-vectors in (x, v).
    pub fn tangent_lift(&self) -> (SymVector, Vec<SymVector>) {
        let n = self.n;
        let mut f = Vec::with_capacity(2 * n);
        for j in 1..=n {
            f.push(self.v(j));
        }
        for i in 1..=n {
            f.push(self.acceleration_drift(i));
        }
        let gs = self
            .g
            .iter()
            .map(|gr| {
                let mut col = vec![Expr::zero(); n];
                col.extend(gr.iter().cloned());
                col
            })
            .collect();
        (f, gs)
    }
}

fn velocity_name(config_name: &str) -> String {
    match config_name.strip_prefix('x') {
        Some(rest) if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) => {
            format!("v{rest}")
        }
        _ => format!("v_{config_name}"),
    }
}

// ---------------------------------------------------------------------------
// Lagrangian front-end

/// Lagrangian data ℒ = ½ ẋᵀM(x)ẋ − V(x) with generalized forces
/// τ₀(x) + Σ τ_r(x) u_r, plus the artifact plumbing (names, parameter
/// defaults, outputs) needed to build a full system.
#[derive(Clone, Debug)]
pub struct LagrangianSpec {
    pub n: usize,
    pub m: usize,
    pub mass: SymMatrix,
    pub potential: Expr,
    pub tau0: SymVector,
    pub tau: Vec<SymVector>,
    pub var_names: Vec<String>,
    pub params: BTreeMap<String, f64>,
    pub outputs: SymVector,
}

/// Levi-Civita Christoffels of M, e = M⁻¹(−∂V/∂x + τ₀), g_r = M⁻¹τ_r.
pub fn from_lagrangian(spec: &LagrangianSpec) -> Result<MechanicalSystem, ModelError> {
    let n = spec.n;
    if spec.mass.len() != n || spec.mass.iter().any(|r| r.len() != n) {
        return Err(ModelError::Dimensions("inertia matrix must be n×n".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = Expr::sub(spec.mass[i][j].clone(), spec.mass[j][i].clone());
            if !is_zero(&d)?.is_zero() {
                return Err(ModelError::AsymmetricMetric { i: i + 1, j: j + 1 });
            }
        }
    }
    let (minv, detm) = symmat::inverse(&spec.mass);
    match is_zero(&detm)? {
        ZeroVerdict::NonZero { .. } => {}
        v => {
            return Err(ModelError::DegenerateMetric {
                verdict: format!("{v:?}"),
            })
        }
    }
    // Γ^i_jk = ½ m^{il} (∂_j m_{lk} + ∂_k m_{lj} − ∂_l m_{jk})
    let mut gamma = vec![vec![vec![Expr::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut terms = Vec::new();
                for l in 0..n {
                    let bracket = Expr::add(vec![
                        diff(&spec.mass[l][k], j + 1),
                        diff(&spec.mass[l][j], k + 1),
                        Expr::neg(diff(&spec.mass[j][k], l + 1)),
                    ]);
                    terms.push(minv[i][l].clone() * bracket);
                }
                let val = simplify(&Expr::mul(vec![Expr::rat(1, 2), Expr::add(terms)]));
                gamma[i][j][k] = val.clone();
                gamma[i][k][j] = val;
            }
        }
    }
    let p: SymVector = (0..n)
        .map(|i| {
            Expr::add(vec![
                Expr::neg(diff(&spec.potential, i + 1)),
                spec.tau0[i].clone(),
            ])
        })
        .collect();
    let e = symmat::matvec(&minv, &p);
    let g = spec
        .tau
        .iter()
        .map(|tr| symmat::matvec(&minv, tr))
        .collect();
    MechanicalSystem::new(
        n,
        spec.m,
        spec.var_names.clone(),
        spec.params.clone(),
        gamma,
        e,
        g,
        spec.outputs.clone(),
    )
}

// ---------------------------------------------------------------------------
// Transformation group

/// A mechanical transformation: coordinate change φ plus quadratic feedback
/// (γ, α, β).  `phi_inverse`, when provided, must express x in terms of the
/// new coordinates and is validated on use.
#[derive(Clone, Debug)]
pub struct MechanicalTransformation {
    pub phi: SymVector,
    /// γ\[r\]\[j\]\[k\], symmetric in (j,k).
    pub gamma_fb: Vec<SymMatrix>,
    pub alpha: SymVector,
    /// β\[r\]\[s\] in u_r = … + Σ_s β^r_s ũ_s.
    pub beta: SymMatrix,
    pub phi_inverse: Option<SymVector>,
}

impl MechanicalTransformation {
    pub fn identity(n: usize, m: usize) -> MechanicalTransformation {
        MechanicalTransformation {
            phi: (1..=n).map(Expr::Var).collect(),
            gamma_fb: vec![vec![vec![Expr::zero(); n]; n]; m],
            alpha: vec![Expr::zero(); m],
            beta: symmat::identity(m),
            phi_inverse: None,
        }
    }

    /// Pure feedback (φ = id) from the (γ, α, β) triple.
    pub fn feedback(
        n: usize,
        gamma_fb: Vec<SymMatrix>,
        alpha: SymVector,
        beta: SymMatrix,
    ) -> MechanicalTransformation {
        MechanicalTransformation {
            phi: (1..=n).map(Expr::Var).collect(),
            gamma_fb,
            alpha,
            beta,
            phi_inverse: None,
        }
    }

    pub fn is_identity_phi(&self) -> bool {
        self.phi
            .iter()
            .enumerate()
            .all(|(i, p)| *p == Expr::Var(i + 1))
    }

    /// Inverse of the feedback part: solving u = vᵀγv + α + βũ for ũ gives
    /// γ' = −β⁻¹γ, α' = −β⁻¹α, β' = β⁻¹ (φ left as identity).
    pub fn feedback_inverse(&self, n: usize) -> Result<MechanicalTransformation, ModelError> {
        let m = self.beta.len();
        let (binv, detb) = symmat::inverse(&self.beta);
        if !matches!(is_zero(&detb)?, ZeroVerdict::NonZero { .. }) {
            return Err(ModelError::SingularBeta);
        }
        let mut gamma_inv = vec![vec![vec![Expr::zero(); n]; n]; m];
        for r in 0..m {
            for j in 0..n {
                for k in 0..n {
                    let mut terms = Vec::new();
                    for s in 0..m {
                        terms.push(Expr::neg(
                            binv[r][s].clone() * self.gamma_fb[s][j][k].clone(),
                        ));
                    }
                    gamma_inv[r][j][k] = simplify(&Expr::add(terms));
                }
            }
        }
        let alpha_inv = (0..m)
            .map(|r| {
                simplify(&Expr::add(
                    (0..m)
                        .map(|s| Expr::neg(binv[r][s].clone() * self.alpha[s].clone()))
                        .collect(),
                ))
            })
            .collect();
        Ok(MechanicalTransformation {
            phi: (1..=n).map(Expr::Var).collect(),
            gamma_fb: gamma_inv,
            alpha: alpha_inv,
            beta: binv,
            phi_inverse: None,
        })
    }
}

/// Transformed system data expressed in the *original* chart: every entry
/// is the new-coordinate object composed with φ.  This is exact and needs
/// no inversion of φ; `apply_transformation` substitutes φ⁻¹ afterwards
/// when it is available.
#[derive(Clone, Debug)]
pub struct PullbackView {
    /// Γ̃^i_ab ∘ φ
    pub gamma: Vec<Vec<Vec<Expr>>>,
    /// ẽ^i ∘ φ
    pub e: SymVector,
    /// g̃_s^i ∘ φ
    pub g: Vec<SymVector>,
    /// ∂φ/∂x
    pub jac: SymMatrix,
}

fn validate_transformation(
    s: &MechanicalSystem,
    t: &MechanicalTransformation,
) -> Result<(), ModelError> {
    let (n, m) = (s.n, s.m);
    let dims_ok = t.phi.len() == n
        && t.gamma_fb.len() == m
        && t.gamma_fb
            .iter()
            .all(|g| g.len() == n && g.iter().all(|r| r.len() == n))
        && t.alpha.len() == m
        && t.beta.len() == m
        && t.beta.iter().all(|r| r.len() == m);
    if !dims_ok {
        return Err(ModelError::Dimensions(
            "transformation blocks must match the system's n and m".into(),
        ));
    }
    for g in &t.gamma_fb {
        for j in 0..n {
            for k in (j + 1)..n {
                let d = Expr::sub(g[j][k].clone(), g[k][j].clone());
                if !is_zero(&d)?.is_zero() {
                    return Err(ModelError::Dimensions(
                        "feedback γ matrices must be symmetric".into(),
                    ));
                }
            }
        }
    }
    let (_, detb) = symmat::inverse(&t.beta);
    if !matches!(is_zero(&detb)?, ZeroVerdict::NonZero { .. }) {
        return Err(ModelError::SingularBeta);
    }
    Ok(())
}

/// The feedback part of the group action alone:
/// Γ' = Γ − Σ_r g_r γ^r, e' = e + Σ_r g_r α^r, g'_s = Σ_r β^r_s g_r.
pub fn feedback_action(
    s: &MechanicalSystem,
    t: &MechanicalTransformation,
) -> (Vec<Vec<Vec<Expr>>>, SymVector, Vec<SymVector>) {
    let (n, m) = (s.n, s.m);
    let mut gamma_fb = vec![vec![vec![Expr::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut terms = vec![s.gamma[i][j][k].clone()];
                for r in 0..m {
                    terms.push(Expr::neg(s.g[r][i].clone() * t.gamma_fb[r][j][k].clone()));
                }
                let val = simplify(&Expr::add(terms));
                gamma_fb[i][j][k] = val.clone();
                gamma_fb[i][k][j] = val;
            }
        }
    }
    let e_fb: SymVector = (0..n)
        .map(|i| {
            let mut terms = vec![s.e[i].clone()];
            for r in 0..m {
                terms.push(s.g[r][i].clone() * t.alpha[r].clone());
            }
            simplify(&Expr::add(terms))
        })
        .collect();
    let g_fb: Vec<SymVector> = (0..m)
        .map(|sdx| {
            (0..n)
                .map(|i| {
                    simplify(&Expr::add(
                        (0..m)
                            .map(|r| t.beta[r][sdx].clone() * s.g[r][i].clone())
                            .collect(),
                    ))
                })
                .collect()
        })
        .collect();
    (gamma_fb, e_fb, g_fb)
}

/// Feedback action on (Γ, e, g):
/// Γ̃^i_jk = Γ^i_jk − Σ_r g_r^i γ^r_jk, ẽ = e + Σ_r g_r α^r,
/// g̃_s = Σ_r β^r_s g_r — then, for non-identity φ, the connection/field
/// pushforward written through the original chart.
pub fn transform_in_original_chart(
    s: &MechanicalSystem,
    t: &MechanicalTransformation,
) -> Result<PullbackView, ModelError> {
    validate_transformation(s, t)?;
    let n = s.n;
    let (gamma_fb, e_fb, g_fb) = feedback_action(s, t);

    if t.is_identity_phi() {
        return Ok(PullbackView {
            gamma: gamma_fb,
            e: e_fb,
            g: g_fb,
            jac: symmat::identity(n),
        });
    }

    let jac = symmat::jacobian(&t.phi, n);
    let (jinv, detj) = symmat::inverse(&jac);
    if !matches!(is_zero(&detj)?, ZeroVerdict::NonZero { .. }) {
        return Err(ModelError::SingularJacobian);
    }
    // Connection-Hessian of each φ^c over the feedback-modified connection:
    // (∇dφ^c)_jk = ∂²φ^c/∂x^j∂x^k − Σ_i Γ̃^i_jk ∂φ^c/∂x^i, and then
    // Γ̃^c_ab ∘ φ = −Σ_jk (∇dφ^c)_jk (J⁻¹)^j_a (J⁻¹)^k_b
    // (the inverse-function identity for second derivatives of φ⁻¹).
    let mut gamma_view = vec![vec![vec![Expr::zero(); n]; n]; n];
    for c in 0..n {
        let dphi: Vec<Expr> = (1..=n).map(|j| diff(&t.phi[c], j)).collect();
        let mut nd = vec![vec![Expr::zero(); n]; n];
        for j in 0..n {
            for k in j..n {
                let mut terms = vec![diff(&dphi[j], k + 1)];
                for i in 0..n {
                    terms.push(Expr::neg(gamma_fb[i][j][k].clone() * dphi[i].clone()));
                }
                let val = simplify(&Expr::add(terms));
                nd[j][k] = val.clone();
                nd[k][j] = val;
            }
        }
        for a in 0..n {
            for b in a..n {
                let mut terms = Vec::new();
                for j in 0..n {
                    for k in 0..n {
                        if nd[j][k].is_const_zero() {
                            continue;
                        }
                        terms.push(Expr::neg(
                            nd[j][k].clone() * jinv[j][a].clone() * jinv[k][b].clone(),
                        ));
                    }
                }
                let val = simplify(&Expr::add(terms));
                gamma_view[c][a][b] = val.clone();
                gamma_view[c][b][a] = val;
            }
        }
    }
    let e_view = symmat::matvec(&jac, &e_fb);
    let g_view = g_fb.iter().map(|col| symmat::matvec(&jac, col)).collect();
    Ok(PullbackView {
        gamma: gamma_view,
        e: e_view,
        g: g_view,
        jac,
    })
}

/// Full transformation: feedback action, then the coordinate pushforward by
/// φ with x = φ⁻¹(x̃) substituted symbolically.  φ⁻¹ comes from the
/// transformation itself, or from the affine/triangular solver.
pub fn apply_transformation(
    s: &MechanicalSystem,
    t: &MechanicalTransformation,
) -> Result<MechanicalSystem, ModelError> {
    let view = transform_in_original_chart(s, t)?;
    let (n, m) = (s.n, s.m);
    if t.is_identity_phi() {
        return MechanicalSystem::new(
            n,
            m,
            s.var_names.clone(),
            s.params.clone(),
            view.gamma,
            view.e,
            view.g,
            s.h.iter().map(|h| simplify(h)).collect(),
        );
    }
    let phi_inv = match &t.phi_inverse {
        Some(inv) => {
            if inv.len() != n {
                return Err(ModelError::Dimensions("φ-inverse must have n components".into()));
            }
            inv.clone()
        }
        None => invert_phi(&t.phi, n)?,
    };
    // Round-trip check: φ(φ⁻¹(y)) = y.
    for (i, p) in t.phi.iter().enumerate() {
        let r = simplify(&Expr::sub(p.subst_vars(&phi_inv), Expr::Var(i + 1)));
        if !is_zero(&r)?.is_zero() {
            return Err(ModelError::BadInverse { component: i + 1 });
        }
    }
    let sub = |ex: &Expr| simplify(&ex.subst_vars(&phi_inv));
    let gamma = view
        .gamma
        .iter()
        .map(|gi| gi.iter().map(|row| row.iter().map(sub).collect()).collect())
        .collect();
    let e = view.e.iter().map(sub).collect();
    let g = view.g.iter().map(|col| col.iter().map(sub).collect()).collect();
    let h = s.h.iter().map(sub).collect();
    MechanicalSystem::new(n, m, s.var_names.clone(), s.params.clone(), gamma, e, g, h)
}

/// Symbolic inversion of φ: dense affine maps by linear solve, then a
/// greedy triangular pass (equations affine in one remaining unknown at a
/// time, coefficients free of unknowns).
pub fn invert_phi(phi: &[Expr], n: usize) -> Result<SymVector, ModelError> {
    if let Some(inv) = invert_affine(phi, n)? {
        return Ok(inv);
    }
    if let Some(inv) = invert_triangular(phi, n)? {
        return Ok(inv);
    }
    Err(ModelError::PhiNotInvertible)
}

fn x_free(e: &Expr, n: usize) -> bool {
    e.vars_used().iter().all(|&v| v > n)
}

fn invert_affine(phi: &[Expr], n: usize) -> Result<Option<SymVector>, ModelError> {
    let jac = symmat::jacobian(phi, n);
    if !jac.iter().flatten().all(|e| x_free(e, n)) {
        return Ok(None);
    }
    let offsets: SymVector = (0..n)
        .map(|i| {
            let linear = Expr::add(
                (0..n)
                    .map(|j| jac[i][j].clone() * Expr::Var(j + 1))
                    .collect(),
            );
            simplify(&Expr::sub(phi[i].clone(), linear))
        })
        .collect();
    if !offsets.iter().all(|e| x_free(e, n)) {
        return Ok(None);
    }
    let (jinv, detj) = symmat::inverse(&jac);
    if !matches!(is_zero(&detj)?, ZeroVerdict::NonZero { .. }) {
        return Err(ModelError::SingularJacobian);
    }
    let rhs: SymVector = (0..n)
        .map(|i| Expr::sub(Expr::Var(i + 1), offsets[i].clone()))
        .collect();
    Ok(Some(symmat::matvec(&jinv, &rhs)))
}

/// New coordinates are temporarily addressed as Var(n+1..2n) while solving,
/// then shifted down to Var(1..n).
fn invert_triangular(phi: &[Expr], n: usize) -> Result<Option<SymVector>, ModelError> {
    let mut solved: Vec<Option<Expr>> = vec![None; n];
    let mut used = vec![false; n];
    loop {
        let mut progress = false;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let table: Vec<Expr> = (1..=n)
                .map(|j| solved[j - 1].clone().unwrap_or(Expr::Var(j)))
                .collect();
            let cur = simplify(&phi[i].subst_vars(&table));
            let unknowns: Vec<usize> = cur
                .vars_used()
                .into_iter()
                .filter(|&v| v <= n)
                .collect();
            if unknowns.len() != 1 {
                continue;
            }
            let j = unknowns[0];
            let c = simplify(&diff(&cur, j));
            if !x_free(&c, n) {
                continue; // not affine in x^j (or coefficient couples unknowns)
            }
            if !matches!(is_zero(&c)?, ZeroVerdict::NonZero { .. }) {
                continue;
            }
            let rest = simplify(&Expr::sub(cur, c.clone() * Expr::Var(j)));
            debug_assert!(x_free(&rest, n));
            let y_i = Expr::Var(n + i + 1);
            solved[j - 1] = Some(simplify(&Expr::div(Expr::sub(y_i, rest), c)));
            used[i] = true;
            progress = true;
        }
        if !progress {
            break;
        }
    }
    if solved.iter().any(|s| s.is_none()) {
        return Ok(None);
    }
    // Shift Var(n+k) → Var(k).
    let shift: Vec<Expr> = (1..=n)
        .map(Expr::Var)
        .chain((1..=n).map(Expr::Var))
        .collect();
    Ok(Some(
        solved
            .into_iter()
            .map(|s| simplify(&s.unwrap().subst_vars(&shift)))
            .collect(),
    ))
}
