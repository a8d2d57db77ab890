//! Differential-geometric analysis: Lie derivatives, covariant derivatives
//! of one-forms, relative half-degrees with the decoupling matrix D on the
//! configuration space, the classical relative degrees with 𝔻 on the tangent
//! bundle, and the two solvability conditions for mechanical input–output
//! linearization and decoupling:
//!
//! - condition 1: the vector relative half-degree (ν₁,…,ν_m) is well defined,
//!   i.e. the m×m matrix D = (L_{g_r} L_e^{ν_ℓ−1} h_ℓ) has full rank m;
//! - condition 2: ∇(d L_e^q h_ℓ) = 0 for 0 ≤ q ≤ ν_ℓ − 2.
//!
//! Zero decisions are made by [`is_zero`] (structural proof with a seeded
//! numerical fallback); rank decisions are numerical at a user-supplied
//! analysis point with singular-value threshold 1e-8·σ_max.

use crate::expr::diff::diff;
use crate::expr::eval::EvalError;
use crate::expr::nf::simplify;
use crate::expr::{is_zero_seeded, Expr, Point, ZeroTestError, ZeroVerdict, DEFAULT_ZERO_SEED};
use crate::model::{MechanicalSystem, ModelError};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Escalation cap for the half-degree as a multiple of n.
const NU_CAP_FACTOR: usize = 2;
/// Number of extra random points used for the constant-rank warning.
const GENERIC_RANK_SAMPLES: usize = 16;
/// Relative singular-value threshold for numerical rank.
pub(crate) const RANK_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("analysis point mismatch: {0}")]
    Point(String),
    #[error("evaluation failed for {context}: {source}")]
    Eval {
        context: String,
        source: EvalError,
    },
    #[error("zero test failed: {0}")]
    ZeroTest(#[from] ZeroTestError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// L_f φ = Σ_i f^i ∂φ/∂x^i, simplified.  Works on Q (field length n) and on
/// TQ (field length 2n, velocity variables included).
pub fn lie_derivative(field: &[Expr], f: &Expr) -> Expr {
    let mut terms = Vec::new();
    for (i, fi) in field.iter().enumerate() {
        if fi.is_const_zero() {
            continue;
        }
        let d = diff(f, i + 1);
        if d.is_const_zero() {
            continue;
        }
        terms.push(fi.clone() * d);
    }
    simplify(&Expr::add(terms))
}

/// Iterated Lie derivative L_f^q φ.
pub fn iterated_lie(field: &[Expr], f: &Expr, q: usize) -> Expr {
    let mut cur = simplify(f);
    for _ in 0..q {
        cur = lie_derivative(field, &cur);
    }
    cur
}

/// Covariant derivative of a one-form: entry (j,k) is
/// ∇_k ω_j = ∂ω_j/∂x^k − Σ_i Γ^i_{jk} ω_i.
pub fn covariant_derivative_oneform(s: &MechanicalSystem, omega: &[Expr]) -> Vec<Vec<Expr>> {
    let n = s.n;
    let mut out = vec![vec![Expr::zero(); n]; n];
    for j in 0..n {
        for k in 0..n {
            let mut terms = vec![diff(&omega[j], k + 1)];
            for i in 0..n {
                if s.gamma[i][j][k].is_const_zero() || omega[i].is_const_zero() {
                    continue;
                }
                terms.push(Expr::neg(s.gamma[i][j][k].clone() * omega[i].clone()));
            }
            out[j][k] = simplify(&Expr::add(terms));
        }
    }
    out
}

/// Connection Hessian ∇dφ with entries
/// ∂²φ/∂x^j∂x^k − Σ_i Γ^i_{jk} ∂φ/∂x^i (symmetric).
pub fn nabla_d(s: &MechanicalSystem, f: &Expr) -> Vec<Vec<Expr>> {
    nabla_d_with_gamma(&s.gamma, f, s.n)
}

/// Connection Hessian against an explicit (symmetric) Christoffel tensor;
/// used with feedback-modified connections.
pub fn nabla_d_with_gamma(
    gamma: &[Vec<Vec<Expr>>],
    f: &Expr,
    n: usize,
) -> Vec<Vec<Expr>> {
    let df: Vec<Expr> = (1..=n).map(|j| diff(f, j)).collect();
    let mut out = vec![vec![Expr::zero(); n]; n];
    for j in 0..n {
        for k in j..n {
            let mut terms = vec![diff(&df[j], k + 1)];
            for i in 0..n {
                if gamma[i][j][k].is_const_zero() || df[i].is_const_zero() {
                    continue;
                }
                terms.push(Expr::neg(gamma[i][j][k].clone() * df[i].clone()));
            }
            let val = simplify(&Expr::add(terms));
            out[j][k] = val.clone();
            out[k][j] = val;
        }
    }
    out
}

/// One level of the escalation: the derivatives L_{g_r} L_e^q h_ℓ for all r
/// and their zero-test verdicts.
#[derive(Clone, Debug)]
pub struct EscalationEntry {
    /// 1-based output index ℓ.
    pub output: usize,
    pub q: usize,
    /// One expression per input channel r.
    pub derivatives: Vec<Expr>,
    pub verdicts: Vec<ZeroVerdict>,
}

/// One condition-2 residual: ∇(d L_e^q h_ℓ) with its verdict.
#[derive(Clone, Debug)]
pub struct Mr2Entry {
    /// 1-based output index ℓ.
    pub output: usize,
    pub q: usize,
    pub residual: Vec<Vec<Expr>>,
    pub holds: bool,
    /// Every zero entry proven structurally (not just numerically).
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct HalfDegreeReport {
    /// ν_ℓ per output; `None` when undefined up to the escalation cap 2n.
    pub nu: Vec<Option<usize>>,
    /// Per output ℓ the chain h_ℓ, L_e h_ℓ, …  (up to L_e^{ν_ℓ−1} h_ℓ, or up
    /// to the cap when ν_ℓ is undefined).
    pub chains: Vec<Vec<Expr>>,
    /// D[ℓ][r] = L_{g_r} L_e^{ν_ℓ−1} h_ℓ (zero row when ν_ℓ undefined).
    pub d_matrix: Vec<Vec<Expr>>,
    pub d_rank_at_point: usize,
    pub d_smallest_sv: f64,
    /// Rank of D equals m at the analysis point.
    pub mr1: bool,
    /// Exactly Σ_ℓ max(ν_ℓ−1, 0) entries.
    pub mr2_entries: Vec<Mr2Entry>,
    pub mr2: bool,
    /// True iff every zero claim along the way is a structural proof.
    pub certified: bool,
    pub escalation: Vec<EscalationEntry>,
    /// Ranks of D at extra random sample points.
    pub generic_ranks: Vec<usize>,
    /// Rank differs across sample points: non-constant-rank locus nearby.
    pub rank_varies: bool,
}

impl HalfDegreeReport {
    /// Both solvability conditions hold at the analysis point.
    pub fn solvable(&self) -> bool {
        self.mr1 && self.mr2
    }
}

#[derive(Clone, Debug)]
pub struct FullDegreeReport {
    /// ρ_ℓ per output; `None` when undefined up to the cap 4n+2.
    pub rho: Vec<Option<usize>>,
    /// 𝔻[ℓ][r] = L_{G_r} L_F^{ρ_ℓ−1} h_ℓ on TQ (zero row when undefined).
    pub dd_matrix: Vec<Vec<Expr>>,
    pub rank_at_point: usize,
    pub smallest_sv: f64,
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct LinearizabilityReport {
    pub half: HalfDegreeReport,
    /// Σ ν_ℓ when every ν_ℓ is defined.
    pub sum_nu: Option<usize>,
    pub n: usize,
    /// Conditions 1 and 2 hold and Σν_ℓ = n.
    pub linearizable: bool,
}

struct Escalator<'a> {
    drift: &'a [Expr],
    controls: &'a [Vec<Expr>],
    seed: u64,
    cap: usize,
    log: Vec<EscalationEntry>,
    all_proven: bool,
}

impl<'a> Escalator<'a> {
    /// Runs the escalation for output ℓ (1-based): returns (degree, chain,
    /// row of derivative expressions at the breaking level).
    fn run(
        &mut self,
        ell: usize,
        h: &Expr,
    ) -> Result<(Option<usize>, Vec<Expr>, Vec<Expr>), GeometryError> {
        let mut chain = vec![simplify(h)];
        for q in 0..=self.cap {
            let cur = chain.last().unwrap();
            let derivs: Vec<Expr> = self
                .controls
                .iter()
                .map(|g| lie_derivative(g, cur))
                .collect();
            let mut verdicts = Vec::with_capacity(derivs.len());
            let mut any_nonzero = false;
            for d in &derivs {
                let v = is_zero_seeded(d, self.seed)?;
                if matches!(v, ZeroVerdict::NonZero { .. }) {
                    any_nonzero = true;
                } else if !matches!(v, ZeroVerdict::ProvenZero) {
                    self.all_proven = false;
                }
                verdicts.push(v);
            }
            self.log.push(EscalationEntry {
                output: ell,
                q,
                derivatives: derivs.clone(),
                verdicts,
            });
            if any_nonzero {
                return Ok((Some(q + 1), chain, derivs));
            }
            if q < self.cap {
                chain.push(lie_derivative(self.drift, cur));
            }
        }
        Ok((None, chain, vec![Expr::zero(); self.controls.len()]))
    }
}

/// Numerical rank with threshold 1e-8·σ_max; also returns the smallest and
/// largest singular values.
pub(crate) fn numeric_rank(mat: &DMatrix<f64>) -> (usize, f64, f64) {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return (0, 0.0, 0.0);
    }
    let svs = mat.clone().singular_values();
    let smax = svs.iter().cloned().fold(0.0_f64, f64::max);
    let smin = svs.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || !smax.is_finite() {
        return (0, smin, smax);
    }
    let rank = svs.iter().filter(|s| **s > RANK_THRESHOLD * smax).count();
    (rank, smin, smax)
}

pub(crate) fn eval_matrix(
    entries: &[Vec<Expr>],
    at: &Point,
    context: &str,
) -> Result<DMatrix<f64>, GeometryError> {
    let rows = entries.len();
    let cols = entries.first().map(|r| r.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(rows * cols);
    for (i, row) in entries.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let v = e.eval(at).map_err(|source| GeometryError::Eval {
                context: format!("{context} entry ({},{})", i + 1, j + 1),
                source,
            })?;
            data.push(v);
        }
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Rank of the matrix at extra random configuration points (same parameter
/// values as `at`); evaluation failures are retried with fresh samples.
fn sample_generic_ranks(
    entries: &[Vec<Expr>],
    n: usize,
    at: &Point,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e6b_5f73_616d);
    let mut ranks = Vec::new();
    'samples: for _ in 0..GENERIC_RANK_SAMPLES {
        for _ in 0..10 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = Point {
                x,
                v: None,
                params: at.params.clone(),
            };
            if let Ok(m) = eval_matrix(entries, &p, "rank sample") {
                if m.iter().all(|v| v.is_finite()) {
                    ranks.push(numeric_rank(&m).0);
                    continue 'samples;
                }
            }
        }
        // Ten failed draws for this sample: skip it.
    }
    ranks
}

/// Vector relative half-degree, decoupling matrix D, and the two
/// solvability verdicts at `point`.
pub fn half_degree(
    s: &MechanicalSystem,
    point: &Point,
    seed: u64,
) -> Result<HalfDegreeReport, GeometryError> {
    if point.x.len() != s.n {
        return Err(GeometryError::Point(format!(
            "point has {} configuration entries for n = {}",
            point.x.len(),
            s.n
        )));
    }
    let (n, m) = (s.n, s.m);
    let mut esc = Escalator {
        drift: &s.e,
        controls: &s.g,
        seed,
        cap: NU_CAP_FACTOR * n,
        log: Vec::new(),
        all_proven: true,
    };
    let mut nu = Vec::with_capacity(m);
    let mut chains = Vec::with_capacity(m);
    let mut d_matrix = Vec::with_capacity(m);
    for ell in 0..m {
        let (deg, chain, row) = esc.run(ell + 1, &s.h[ell])?;
        nu.push(deg);
        chains.push(chain);
        d_matrix.push(row);
    }
    let mut certified = esc.all_proven;

    let d_numeric = eval_matrix(&d_matrix, point, "decoupling matrix")?;
    let (d_rank_at_point, d_smallest_sv, _) = numeric_rank(&d_numeric);
    let mr1 = nu.iter().all(|d| d.is_some()) && d_rank_at_point == m;

    let mut mr2_entries = Vec::new();
    for ell in 0..m {
        let Some(deg) = nu[ell] else { continue };
        for q in 0..deg.saturating_sub(1) {
            let residual = nabla_d(s, &chains[ell][q]);
            let mut holds = true;
            let mut entry_certified = true;
            for row in &residual {
                for e in row {
                    match is_zero_seeded(e, seed)? {
                        ZeroVerdict::ProvenZero => {}
                        ZeroVerdict::NumericallyZero { .. } => entry_certified = false,
                        ZeroVerdict::NonZero { .. } => holds = false,
                    }
                }
            }
            if !entry_certified {
                certified = false;
            }
            mr2_entries.push(Mr2Entry {
                output: ell + 1,
                q,
                residual,
                holds,
                certified: entry_certified,
            });
        }
    }
    let mr2 = mr2_entries.iter().all(|e| e.holds);

    let generic_ranks = sample_generic_ranks(&d_matrix, n, point, seed);
    let rank_varies = generic_ranks.windows(2).any(|w| w[0] != w[1])
        || generic_ranks
            .first()
            .is_some_and(|r| *r != d_rank_at_point);

    Ok(HalfDegreeReport {
        nu,
        chains,
        d_matrix,
        d_rank_at_point,
        d_smallest_sv,
        mr1,
        mr2_entries,
        mr2,
        certified,
        escalation: esc.log,
        generic_ranks,
        rank_varies,
    })
}

/// Classical vector relative degree of the tangent-bundle system
/// ż = F(z) + Σ G_r(z) u_r, y = h(x), with F = (v, −vᵀΓv+e), G_r = (0, g_r).
/// `point` must carry velocities.
pub fn full_relative_degree(
    s: &MechanicalSystem,
    point: &Point,
    seed: u64,
) -> Result<FullDegreeReport, GeometryError> {
    let n = s.n;
    if point.x.len() != n || point.v.as_ref().map(|v| v.len()) != Some(n) {
        return Err(GeometryError::Point(
            "tangent-bundle analysis point needs x and v of length n".into(),
        ));
    }
    let (f, gs) = s.tangent_lift();
    let mut esc = Escalator {
        drift: &f,
        controls: &gs,
        seed,
        cap: 4 * n + 1,
        log: Vec::new(),
        all_proven: true,
    };
    let mut rho = Vec::with_capacity(s.m);
    let mut dd_matrix = Vec::with_capacity(s.m);
    for ell in 0..s.m {
        let (deg, _chain, row) = esc.run(ell + 1, &s.h[ell])?;
        rho.push(deg); // ρ_ℓ = q+1 at the first level where some L_{G_r}L_F^q h_ℓ ≠ 0
        dd_matrix.push(row);
    }
    let dd_numeric = eval_matrix(&dd_matrix, point, "tangent-bundle decoupling matrix")?;
    let (rank_at_point, smallest_sv, _) = numeric_rank(&dd_numeric);
    Ok(FullDegreeReport {
        rho,
        dd_matrix,
        rank_at_point,
        smallest_sv,
        certified: esc.all_proven,
    })
}

/// Full-linearizability check for candidate outputs: replaces h by the
/// candidates, requires conditions 1 and 2 and Σ ν_ℓ = n.
pub fn check_mf_linearizable(
    s: &MechanicalSystem,
    candidates: &[Expr],
    point: &Point,
    seed: u64,
) -> Result<LinearizabilityReport, GeometryError> {
    let with_candidates = s.with_outputs(candidates.to_vec())?;
    let half = half_degree(&with_candidates, point, seed)?;
    let sum_nu = half
        .nu
        .iter()
        .try_fold(0usize, |acc, d| d.map(|v| acc + v));
    let linearizable = half.mr1 && half.mr2 && sum_nu == Some(s.n);
    Ok(LinearizabilityReport {
        half,
        sum_nu,
        n: s.n,
        linearizable,
    })
}

// ---------------------------------------------------------------------------
// Finite-difference oracles (independent numerical routes used by tests)

fn shifted(at: &Point, idx: usize, delta: f64) -> Point {
    let mut p = at.clone();
    if idx <= p.x.len() {
        p.x[idx - 1] += delta;
    } else if let Some(v) = p.v.as_mut() {
        v[idx - 1 - at.x.len()] += delta;
    }
    p
}

/// Central-difference Lie derivative: Σ_i f^i(z)·(φ(z+he_i) − φ(z−he_i))/2h.
pub fn lie_derivative_fd(
    field: &[Expr],
    f: &Expr,
    at: &Point,
    h: f64,
) -> Result<f64, EvalError> {
    let mut acc = 0.0;
    for (i, fi) in field.iter().enumerate() {
        let coef = fi.eval(at)?;
        if coef == 0.0 {
            continue;
        }
        let plus = f.eval(&shifted(at, i + 1, h))?;
        let minus = f.eval(&shifted(at, i + 1, -h))?;
        acc += coef * (plus - minus) / (2.0 * h);
    }
    Ok(acc)
}

/// Central-difference connection Hessian: second differences of φ minus the
/// symbolically evaluated Γ-contraction.
pub fn nabla_d_fd(
    s: &MechanicalSystem,
    f: &Expr,
    at: &Point,
    h: f64,
) -> Result<Vec<Vec<f64>>, EvalError> {
    let n = s.n;
    let f0 = f.eval(at)?;
    let mut grad = vec![0.0; n];
    for (i, gi) in grad.iter_mut().enumerate() {
        *gi = (f.eval(&shifted(at, i + 1, h))? - f.eval(&shifted(at, i + 1, -h))?) / (2.0 * h);
    }
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in j..n {
            let second = if j == k {
                (f.eval(&shifted(at, j + 1, h))? - 2.0 * f0
                    + f.eval(&shifted(at, j + 1, -h))?)
                    / (h * h)
            } else {
                let pp = f.eval(&shifted(&shifted(at, j + 1, h), k + 1, h))?;
                let pm = f.eval(&shifted(&shifted(at, j + 1, h), k + 1, -h))?;
                let mp = f.eval(&shifted(&shifted(at, j + 1, -h), k + 1, h))?;
                let mm = f.eval(&shifted(&shifted(at, j + 1, -h), k + 1, -h))?;
                (pp - pm - mp + mm) / (4.0 * h * h)
            };
            let mut val = second;
            for i in 0..n {
                if s.gamma[i][j][k].is_const_zero() {
                    continue;
                }
                val -= s.gamma[i][j][k].eval(at)? * grad[i];
            }
            out[j][k] = val;
            out[k][j] = val;
        }
    }
    Ok(out)
}

/// Independent Christoffel route for metric systems: finite differences of
/// the inertia matrix plus a numerical linear solve, bypassing all symbolic
/// differentiation.
pub fn christoffels_fd(
    mass: &[Vec<Expr>],
    at: &Point,
    h: f64,
) -> Result<Vec<Vec<Vec<f64>>>, EvalError> {
    let n = mass.len();
    let eval_mass = |p: &Point| -> Result<DMatrix<f64>, EvalError> {
        let mut data = Vec::with_capacity(n * n);
        for row in mass {
            for e in row {
                data.push(e.eval(p)?);
            }
        }
        Ok(DMatrix::from_row_slice(n, n, &data))
    };
    let mut dm = Vec::with_capacity(n); // dm[l] = ∂M/∂x^l
    for l in 0..n {
        let plus = eval_mass(&shifted(at, l + 1, h))?;
        let minus = eval_mass(&shifted(at, l + 1, -h))?;
        dm.push((plus - minus) / (2.0 * h));
    }
    let m0 = eval_mass(at)?;
    let lu = m0.lu();
    let mut out = vec![vec![vec![0.0; n]; n]; n];
    for j in 0..n {
        for k in 0..n {
            // First-kind symbols [jk, l] as a column, then solve M·Γ = col.
            let mut col = DMatrix::zeros(n, 1);
            for l in 0..n {
                col[(l, 0)] = 0.5 * (dm[j][(l, k)] + dm[k][(l, j)] - dm[l][(j, k)]);
            }
            let sol = lu
                .solve(&col)
                .ok_or(EvalError::Domain("singular inertia matrix in oracle"))?;
            for i in 0..n {
                out[i][j][k] = sol[(i, 0)];
            }
        }
    }
    Ok(out)
}

/// Convenience wrapper using the default zero-test seed.
pub fn half_degree_default(
    s: &MechanicalSystem,
    point: &Point,
) -> Result<HalfDegreeReport, GeometryError> {
    half_degree(s, point, DEFAULT_ZERO_SEED)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::is_zero;
    use crate::fixtures::{coupled_regime, iwp, iwp_combined_output, names, pe, tora3, tora3_flat_output};
    use crate::model::MechanicalSystem;
    use std::collections::BTreeMap;

    const SEED: u64 = DEFAULT_ZERO_SEED;

    fn assert_proven_zero(e: &Expr, label: &str) {
        let v = is_zero(e).unwrap();
        assert!(
            matches!(v, ZeroVerdict::ProvenZero),
            "{label}: expected structural zero, got {v:?} for {e}"
        );
    }

    #[test]
    fn lie_derivative_closed_forms() {
        let vars = ["x1", "x2"];
        let sys = iwp();
        // Direct control influence on the plain angle output.
        let lgh = lie_derivative(&sys.g[0], &sys.h[0]);
        assert_proven_zero(&Expr::sub(lgh, pe("-1/md", &vars)), "L_g h");
        // Constants are annihilated.
        assert!(lie_derivative(&sys.e, &Expr::param("c")).is_const_zero());
        // Cart-cart-pendulum system, fully-linearizing output: the shared
        // denominators cancel to a pure spring term.
        let t3 = tora3();
        let leh = lie_derivative(&t3.e, &tora3_flat_output());
        assert_proven_zero(
            &Expr::sub(leh, pe("-k1/(m2+m3)*x1", &["x1", "x2", "x3"])),
            "L_e h for the flat output",
        );
    }

    #[test]
    fn covariant_derivative_of_linear_output_on_flat_connection() {
        let sys = iwp();
        let nd = nabla_d(&sys, &iwp_combined_output());
        for row in &nd {
            for e in row {
                assert!(e.is_const_zero(), "entry {e} should be zero");
            }
        }
    }

    #[test]
    fn hessian_paths_agree_structurally() {
        // Random cubic scalar on a polynomial-Christoffel system.
        let vars = ["x1", "x2", "x3"];
        let mut gamma = vec![vec![vec![Expr::zero(); 3]; 3]; 3];
        gamma[0][0][1] = pe("x3", &vars);
        gamma[0][1][0] = pe("x3", &vars);
        gamma[1][2][2] = pe("x1*x2", &vars);
        gamma[2][0][0] = pe("sin(x2)", &vars);
        let sys = MechanicalSystem::new(
            3,
            1,
            names(&vars),
            BTreeMap::new(),
            gamma,
            vec![Expr::zero(); 3],
            vec![vec![Expr::one(), Expr::zero(), Expr::zero()]],
            vec![pe("x1", &vars)],
        )
        .unwrap();
        let f = pe("x1^2*x2 - x3^3/3 + x1*x2*x3", &vars);
        let direct = nabla_d(&sys, &f);
        let df: Vec<Expr> = (1..=3).map(|j| simplify(&diff(&f, j))).collect();
        let via_oneform = covariant_derivative_oneform(&sys, &df);
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(
                    direct[j][k], via_oneform[j][k],
                    "entry ({j},{k}) differs between computation paths"
                );
            }
        }
    }

    #[test]
    fn half_degree_wheel_pendulum_direct_output() {
        let sys = iwp();
        let report = half_degree(&sys, &sys.point(vec![0.3, 0.1], None), SEED).unwrap();
        assert_eq!(report.nu, vec![Some(1)]);
        assert_proven_zero(
            &Expr::sub(report.d_matrix[0][0].clone(), pe("-1/md", &["x1", "x2"])),
            "D entry",
        );
        assert!(report.mr1);
        assert!(report.mr2_entries.is_empty());
        assert!(report.mr2);
        assert!(report.certified);
        assert!(report.solvable());
        assert!(!report.rank_varies);
    }

    #[test]
    fn half_degree_wheel_pendulum_combined_output() {
        let vars = ["x1", "x2"];
        let sys = iwp().with_outputs(vec![iwp_combined_output()]).unwrap();
        let report = half_degree(&sys, &sys.point(vec![0.3, 0.1], None), SEED).unwrap();
        assert_eq!(report.nu, vec![Some(2)]);
        // The chain's second element is the once-differentiated output.
        assert_proven_zero(
            &Expr::sub(report.chains[0][1].clone(), pe("m0/J2*sin(x1)", &vars)),
            "L_e h",
        );
        assert_proven_zero(
            &Expr::sub(
                report.d_matrix[0][0].clone(),
                pe("-m0/(md*J2)*cos(x1)", &vars),
            ),
            "D entry",
        );
        assert!(report.mr1);
        assert_eq!(report.mr2_entries.len(), 1);
        assert!(report.mr2_entries[0].holds);
        assert!(report.mr2);
        assert!(report.certified);
    }

    #[test]
    fn half_degree_undefined_when_output_disconnected() {
        // No control influence at all: every escalation level vanishes.
        let sys = MechanicalSystem::new(
            1,
            1,
            names(&["x1"]),
            BTreeMap::new(),
            vec![vec![vec![Expr::zero()]]],
            vec![Expr::zero()],
            vec![vec![Expr::zero()]],
            vec![pe("x1", &["x1"])],
        )
        .unwrap();
        let report = half_degree(&sys, &sys.point(vec![0.5], None), SEED).unwrap();
        assert_eq!(report.nu, vec![None]);
        assert!(!report.mr1);
        assert!(!report.solvable());
    }

    #[test]
    fn half_degree_coupled_regimes() {
        // Regime 1: both outputs see a control directly.
        let sys = coupled_regime(1);
        let report = half_degree(&sys, &sys.point(vec![0.3, 0.2, 0.4], None), SEED).unwrap();
        assert_eq!(report.nu, vec![Some(1), Some(1)]);
        assert!(report.mr1);
        // Regimes 2 and 3: the second output needs one drift differentiation,
        // independently of the connection coefficients.
        for regime in [2, 3] {
            let sys = coupled_regime(regime);
            let report =
                half_degree(&sys, &sys.point(vec![0.3, 0.2, 0.4], None), SEED).unwrap();
            assert_eq!(report.nu, vec![Some(1), Some(2)], "regime {regime}");
            assert!(report.mr1, "regime {regime}");
        }
    }

    #[test]
    fn full_relative_degree_coupled_regimes() {
        let x = vec![0.3, 0.2, 0.4];
        let v = vec![0.1, 0.2, 0.5]; // v³ ≠ 0 keeps regime 2 generic
        let expected = [(1, vec![2, 2]), (2, vec![2, 3]), (3, vec![2, 4])];
        for (regime, rho) in expected {
            let sys = coupled_regime(regime);
            let report =
                full_relative_degree(&sys, &sys.point(x.clone(), Some(v.clone())), SEED)
                    .unwrap();
            let got: Vec<usize> = report.rho.iter().map(|r| r.unwrap()).collect();
            assert_eq!(got, rho, "regime {regime}");
            assert_eq!(report.rank_at_point, 2, "regime {regime}");
            // Comparison against the half-degree: ρ_ℓ ≥ ν_ℓ + 1.
            let half = half_degree(&sys, &sys.point(x.clone(), None), SEED).unwrap();
            for (r, nu) in report.rho.iter().zip(half.nu.iter()) {
                let (r, nu) = (r.unwrap(), nu.unwrap());
                assert!(r >= nu + 1, "regime {regime}: ρ = {r} < ν+1 = {}", nu + 1);
            }
        }
    }

    #[test]
    fn linearizability_verdicts_for_wheel_pendulum_candidates() {
        let sys = iwp();
        let point = sys.point(vec![0.3, 0.1], None);
        let good = check_mf_linearizable(&sys, &[iwp_combined_output()], &point, SEED).unwrap();
        assert!(good.linearizable);
        assert_eq!(good.sum_nu, Some(2));
        // Nonlinear reshaping of the same output: condition 1 survives but
        // the connection Hessian no longer vanishes.
        let squared = Expr::powi(iwp_combined_output(), 2);
        let bad = check_mf_linearizable(&sys, &[squared], &point, SEED).unwrap();
        assert!(!bad.linearizable);
        assert!(bad.half.mr1);
        assert!(!bad.half.mr2);
        assert!(bad.half.mr2_entries.iter().any(|e| !e.holds));
    }

    #[test]
    fn finite_difference_routes_match_symbolic_results() {
        let sys = iwp();
        let combined = iwp_combined_output();
        let leh = lie_derivative(&sys.e, &combined);
        let le2h = lie_derivative(&sys.e, &leh);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let at = sys.point(
                vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                None,
            );
            for (sym, base) in [(&leh, &combined), (&le2h, &leh)] {
                let fd = lie_derivative_fd(&sys.e, base, &at, 1e-5).unwrap();
                let exact = sym.eval(&at).unwrap();
                assert!(
                    (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                    "Lie derivative mismatch: fd {fd} vs {exact}"
                );
            }
        }
        // Connection Hessian against second differences on a curved system.
        let t3 = tora3();
        let f = tora3_flat_output();
        let sym = nabla_d(&t3, &f);
        for trial in 0..10 {
            let at = t3.point(
                vec![
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
                None,
            );
            let fd = nabla_d_fd(&t3, &f, &at, 1e-4).unwrap();
            for j in 0..3 {
                for k in 0..3 {
                    let exact = sym[j][k].eval(&at).unwrap();
                    assert!(
                        (fd[j][k] - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                        "trial {trial} entry ({j},{k}): fd {} vs {exact}",
                        fd[j][k]
                    );
                }
            }
        }
    }

    #[test]
    fn decoupling_matrix_is_feedback_covariant() {
        use crate::model::{apply_transformation, MechanicalTransformation};
        // Random-ish invertible feedback on the coupled testbed: the degrees
        // are unchanged and D transforms by right multiplication with β.
        let sys = coupled_regime(2);
        let vars = ["x1", "x2", "x3"];
        let mut gamma1 = vec![vec![Expr::zero(); 3]; 3];
        gamma1[0][2] = pe("x2/2", &vars);
        gamma1[2][0] = pe("x2/2", &vars);
        let t = MechanicalTransformation::feedback(
            3,
            vec![gamma1, vec![vec![Expr::zero(); 3]; 3]],
            vec![pe("cos(x1)", &vars), pe("x1*x3", &vars)],
            vec![
                vec![pe("1+x2^2", &vars), pe("x3", &vars)],
                vec![Expr::zero(), Expr::int(3)],
            ],
        );
        let transformed = apply_transformation(&sys, &t).unwrap();
        let point = sys.point(vec![0.4, -0.3, 0.7], None);
        let before = half_degree(&sys, &point, SEED).unwrap();
        let after = half_degree(&transformed, &point, SEED).unwrap();
        assert_eq!(before.nu, after.nu);
        // D̃(x) = D(x)·β(x) at the analysis point.
        let d = eval_matrix(&before.d_matrix, &point, "D").unwrap();
        let dt = eval_matrix(&after.d_matrix, &point, "D~").unwrap();
        let beta = eval_matrix(&t.beta, &point, "beta").unwrap();
        let prod = d * beta;
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (dt[(i, j)] - prod[(i, j)]).abs() < 1e-9,
                    "entry ({i},{j}): {} vs {}",
                    dt[(i, j)],
                    prod[(i, j)]
                );
            }
        }
    }
}
