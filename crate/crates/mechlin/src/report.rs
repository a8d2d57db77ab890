//! Rendered summaries of analysis and synthesis results: plain-text reports
//! for the terminal and mirrored `serde`-serializable structures for JSON
//! output.  Everything here is presentation; the underlying verdicts come
//! from [`crate::geometry`] and [`crate::synthesis`].

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::expr::{Expr, Point};
use crate::geometry::{FullDegreeReport, HalfDegreeReport};
use crate::model::MechanicalSystem;
use crate::synthesis::{controller_card, flatness_remark, FeedbackLaw, NormalFormDescription};

/// Name table covering both chart halves: configuration names from the
/// system, then `v1 … vn` for the velocity slots.
pub fn chart_names(s: &MechanicalSystem) -> Vec<String> {
    let mut t = s.var_names.clone();
    for j in 1..=s.n {
        t.push(format!("v{j}"));
    }
    t
}

fn render_vec(exprs: &[Expr], names: &[String]) -> Vec<String> {
    exprs.iter().map(|e| e.to_text(names)).collect()
}

fn render_matrix(rows: &[Vec<Expr>], names: &[String]) -> Vec<Vec<String>> {
    rows.iter().map(|r| render_vec(r, names)).collect()
}

/// `[a, b; c, d]`-style one-line matrix display.
fn matrix_line(rows: &[Vec<String>]) -> String {
    let body: Vec<String> = rows.iter().map(|r| r.join(", ")).collect();
    format!("[{}]", body.join("; "))
}

fn degree_list(ds: &[Option<usize>]) -> String {
    let body: Vec<String> = ds
        .iter()
        .map(|d| d.map_or_else(|| "undefined".to_string(), |v| v.to_string()))
        .collect();
    format!("({})", body.join(", "))
}

// ---------------------------------------------------------------------------
// Analysis report

/// A level at which the vanishing-Hessian condition fails, with the
/// offending covariant Hessian.
#[derive(Clone, Debug, Serialize)]
pub struct Mr2Failure {
    /// 1-based output index.
    pub output: usize,
    /// Derivative level q of the non-flat function L_e^q h.
    pub q: usize,
    pub residual: Vec<Vec<String>>,
}

/// Everything the `analyze` command prints, in structured form.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub m: usize,
    pub point_x: Vec<f64>,
    pub point_v: Vec<f64>,
    pub outputs: Vec<String>,
    /// Relative half-degree per output (`null` when undefined up to the cap).
    pub nu: Vec<Option<usize>>,
    pub d_matrix: Vec<Vec<String>>,
    pub d_rank_at_point: usize,
    pub d_smallest_sv: f64,
    /// Condition MR1: the decoupling matrix has full rank m at the point.
    pub mr1: bool,
    /// Condition MR2: the covariant Hessians of all lower-level derivatives
    /// vanish identically.
    pub mr2: bool,
    pub mr2_failures: Vec<Mr2Failure>,
    /// Both conditions hold, so the linearizing feedback exists.
    pub solvable: bool,
    /// Every zero claim behind the verdicts was proven structurally.
    pub certified: bool,
    /// Rank of D at extra random points differed from the rank at the
    /// analysis point (the point sits near a rank-drop locus).
    pub rank_varies: bool,
    pub sum_nu: Option<usize>,
    /// Σν = n and solvable: the whole configuration becomes output chains.
    pub fully_linearizing: bool,
    /// Tangent-bundle (classical) relative degree, when velocities were
    /// supplied for the state-space comparison.
    pub rho: Option<Vec<Option<usize>>>,
    pub rho_rank_at_point: Option<usize>,
    /// Every defined ρ equals 2ν.
    pub rho_equals_two_nu: Option<bool>,
}

/// Assemble the report from the geometric analyses.  `full` is the optional
/// tangent-bundle comparison (it needs a velocity at the point).
pub fn analysis_report(
    s: &MechanicalSystem,
    half: &HalfDegreeReport,
    full: Option<&FullDegreeReport>,
    point: &Point,
) -> AnalysisReport {
    let names = chart_names(s);
    let mr2_failures = half
        .mr2_entries
        .iter()
        .filter(|e| !e.holds)
        .map(|e| Mr2Failure {
            output: e.output,
            q: e.q,
            residual: render_matrix(&e.residual, &names),
        })
        .collect();
    let sum_nu = half
        .nu
        .iter()
        .try_fold(0usize, |acc, d| d.map(|v| acc + v));
    let rho_equals_two_nu = full.map(|f| {
        half.nu
            .iter()
            .zip(&f.rho)
            .all(|(nu, rho)| match (nu, rho) {
                (Some(nu), Some(rho)) => *rho == 2 * nu,
                _ => false,
            })
    });
    AnalysisReport {
        n: s.n,
        m: s.m,
        point_x: point.x.clone(),
        point_v: point.v.clone().unwrap_or_default(),
        outputs: render_vec(&s.h, &names),
        nu: half.nu.clone(),
        d_matrix: render_matrix(&half.d_matrix, &names),
        d_rank_at_point: half.d_rank_at_point,
        d_smallest_sv: half.d_smallest_sv,
        mr1: half.mr1,
        mr2: half.mr2,
        mr2_failures,
        solvable: half.solvable(),
        certified: half.certified,
        rank_varies: half.rank_varies,
        sum_nu,
        fully_linearizing: half.solvable() && sum_nu == Some(s.n),
        rho: full.map(|f| f.rho.clone()),
        rho_rank_at_point: full.map(|f| f.rank_at_point),
        rho_equals_two_nu,
    }
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mechanical system: {} degrees of freedom, {} input(s), {} output(s)",
            self.n,
            self.m,
            self.outputs.len()
        )?;
        writeln!(
            f,
            "analysis point: x = {:?}, v = {:?}",
            self.point_x, self.point_v
        )?;
        for (l, h) in self.outputs.iter().enumerate() {
            let nu = self.nu[l]
                .map_or_else(|| "undefined (cap reached)".to_string(), |v| v.to_string());
            writeln!(f, "output {}: y{} = {h}    half-degree nu = {nu}", l + 1, l + 1)?;
        }
        writeln!(f, "decoupling matrix D = {}", matrix_line(&self.d_matrix))?;
        writeln!(
            f,
            "rank D at the point: {} of {} (smallest singular value {:.3e}){}",
            self.d_rank_at_point,
            self.m,
            self.d_smallest_sv,
            if self.rank_varies {
                "  [rank differs at nearby random points]"
            } else {
                ""
            }
        )?;
        writeln!(
            f,
            "condition MR1 (decoupling matrix invertible): {}",
            if self.mr1 { "satisfied" } else { "MR1 violated" }
        )?;
        if self.mr2 {
            writeln!(f, "condition MR2 (lower-level Hessians vanish): satisfied")?;
        } else {
            writeln!(f, "condition MR2 (lower-level Hessians vanish): MR2 violated")?;
            for fail in &self.mr2_failures {
                writeln!(
                    f,
                    "  nonzero covariant Hessian of the level-{} derivative of output {}:",
                    fail.q, fail.output
                )?;
                writeln!(f, "    {}", matrix_line(&fail.residual))?;
            }
        }
        writeln!(
            f,
            "linearization and decoupling solvable here: {}",
            if self.solvable { "yes" } else { "no" }
        )?;
        match self.sum_nu {
            Some(s) if self.fully_linearizing => writeln!(
                f,
                "sum of half-degrees = {s} = n: outputs are fully linearizing"
            )?,
            Some(s) => writeln!(
                f,
                "sum of half-degrees = {s} (n = {}): {} unobserved configuration dimension(s)",
                self.n,
                self.n.saturating_sub(s)
            )?,
            None => writeln!(f, "sum of half-degrees undefined")?,
        }
        if let (Some(rho), Some(rank)) = (&self.rho, self.rho_rank_at_point) {
            writeln!(
                f,
                "tangent-bundle relative degree rho = {} (rank {rank} of {})",
                degree_list(rho),
                self.m
            )?;
            match self.rho_equals_two_nu {
                Some(true) => writeln!(
                    f,
                    "each rho equals 2*nu: state-space chains split into position/velocity pairs"
                )?,
                Some(false) => {
                    writeln!(f, "rho differs from 2*nu = {}", degree_list(
                        &self
                            .nu
                            .iter()
                            .map(|d| d.map(|v| 2 * v))
                            .collect::<Vec<_>>(),
                    ))?;
                }
                None => {}
            }
        }
        write!(
            f,
            "zero tests: {}",
            if self.certified {
                "all zero claims proven structurally (certified)"
            } else {
                "some zero claims only checked numerically"
            }
        )
    }
}

// ---------------------------------------------------------------------------
// Synthesized-law report

/// The synthesized feedback and chart, rendered for printing or JSON.
#[derive(Clone, Debug, Serialize)]
pub struct LawReport {
    pub n: usize,
    pub m: usize,
    pub nu: Vec<usize>,
    /// μ = Σν: observable configuration dimension.
    pub mu: usize,
    pub observable_dim: usize,
    pub unobserved_dim: usize,
    /// New configuration coordinates φ (chain coordinates first).
    pub phi: Vec<String>,
    /// Drift vector 𝒜 along the chains.
    pub drift_vector: Vec<String>,
    /// Decoupling matrix D at the synthesis data.
    pub decoupling: Vec<Vec<String>>,
    /// Quadratic velocity forms 𝒞_ℓ(v, v), one per output.
    pub velocity_forms: Vec<String>,
    /// Feedback parts of the group element: u = vᵀγ_r v + α + β ũ.
    pub alpha: Vec<String>,
    pub beta: Vec<Vec<String>>,
    pub gamma: Vec<Vec<Vec<String>>>,
    /// Normal-form verification: interior Christoffels of transformed chain
    /// coordinates vanish.
    pub interior_christoffels_vanish: bool,
    /// Normal-form verification: controls enter only at chain ends, with the
    /// identity pattern.
    pub control_pattern_ok: bool,
    pub certified: bool,
    /// Assessment of differential flatness of the closed loop.
    pub flatness: String,
    /// Ready-to-read controller implementation card.
    pub card: String,
}

pub fn law_report(
    s: &MechanicalSystem,
    law: &FeedbackLaw,
    nf: &NormalFormDescription,
) -> LawReport {
    let names = chart_names(s);
    let velocity_forms = (0..law.m)
        .map(|ell| law.c_expr(ell).to_text(&names))
        .collect();
    LawReport {
        n: law.n,
        m: law.m,
        nu: law.nu.clone(),
        mu: law.mu(),
        observable_dim: nf.observable_dim,
        unobserved_dim: nf.unobserved_dim,
        phi: render_vec(&law.phi, &names),
        drift_vector: render_vec(&law.a_vec, &names),
        decoupling: render_matrix(&law.d_mat, &names),
        velocity_forms,
        alpha: render_vec(&law.transformation.alpha, &names),
        beta: render_matrix(&law.transformation.beta, &names),
        gamma: law
            .transformation
            .gamma_fb
            .iter()
            .map(|m| render_matrix(m, &names))
            .collect(),
        interior_christoffels_vanish: nf.interior_christoffels_vanish,
        control_pattern_ok: nf.control_pattern_ok,
        certified: nf.certified,
        flatness: flatness_remark(law),
        card: controller_card(s, law),
    }
}

impl fmt::Display for LawReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "synthesized feedback for {} output(s), half-degrees {:?}, mu = {} of n = {}",
            self.m, self.nu, self.mu, self.n
        )?;
        writeln!(f, "new configuration chart phi:")?;
        for (i, p) in self.phi.iter().enumerate() {
            writeln!(f, "  phi{} = {p}", i + 1)?;
        }
        writeln!(f, "decoupling matrix D = {}", matrix_line(&self.decoupling))?;
        writeln!(f, "drift vector along chains A = [{}]", self.drift_vector.join(", "))?;
        for (l, c) in self.velocity_forms.iter().enumerate() {
            writeln!(f, "velocity form C_{}(v, v) = {c}", l + 1)?;
        }
        writeln!(f, "feedback u_r = v'gamma_r v + alpha_r + sum_s beta_rs u~_s:")?;
        writeln!(f, "  alpha = [{}]", self.alpha.join(", "))?;
        writeln!(f, "  beta  = {}", matrix_line(&self.beta))?;
        for (r, g) in self.gamma.iter().enumerate() {
            writeln!(f, "  gamma_{} = {}", r + 1, matrix_line(g))?;
        }
        writeln!(
            f,
            "normal-form checks: interior Christoffels vanish: {}; control pattern: {}; certified: {}",
            self.interior_christoffels_vanish, self.control_pattern_ok, self.certified
        )?;
        writeln!(f, "{}", self.flatness)?;
        write!(f, "{}", self.card)
    }
}

// ---------------------------------------------------------------------------
// Corpus table

/// One row of the corpus survey table.
#[derive(Clone, Debug, Serialize)]
pub struct CorpusRow {
    pub system: String,
    /// Which output set and regime the row describes.
    pub case: String,
    pub nu: String,
    pub rho: String,
    pub solvable: bool,
    pub fully_linearizing: bool,
    /// Closed-loop certificate outcome where synthesis applies.
    pub certificate: Option<bool>,
}

/// Fixed-width table over the survey rows.
pub fn render_corpus_table(rows: &[CorpusRow]) -> String {
    let header = [
        "system",
        "case",
        "nu",
        "rho",
        "solvable",
        "fully linearizing",
        "certificate",
    ];
    let mut cells: Vec<[String; 7]> = Vec::with_capacity(rows.len());
    for r in rows {
        cells.push([
            r.system.clone(),
            r.case.clone(),
            r.nu.clone(),
            r.rho.clone(),
            if r.solvable { "yes" } else { "no" }.into(),
            if r.fully_linearizing { "yes" } else { "no" }.into(),
            match r.certificate {
                Some(true) => "pass".into(),
                Some(false) => "FAIL".into(),
                None => "-".into(),
            },
        ]);
    }
    let mut width = [0usize; 7];
    for (i, h) in header.iter().enumerate() {
        width[i] = h.len();
    }
    for row in &cells {
        for (i, c) in row.iter().enumerate() {
            width[i] = width[i].max(c.len());
        }
    }
    let fmt_row = |row: &[String]| -> String {
        row.iter()
            .enumerate()
            .map(|(i, c)| format!("{:<w$}", c, w = width[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    let head: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    out.push_str(&fmt_row(&head));
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    out.push('\n');
    for row in &cells {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    out
}

/// Degree vector like `(1, 2)` from per-output options.
pub fn degrees(ds: &[Option<usize>]) -> String {
    degree_list(ds)
}

/// Helper shared by the CLI: parameter table rendered `name = value` per line.
pub fn render_params(params: &BTreeMap<String, f64>) -> String {
    params
        .iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{coupled_regime, iwp, iwp_combined_output};
    use crate::geometry::{full_relative_degree, half_degree_default};
    use crate::synthesis::synthesize;

    #[test]
    fn wheel_pendulum_report_mentions_the_violated_condition() {
        // Reshaping the linearizing combination through sin() keeps nu = 2
        // but bends the level-0 Hessian away from zero, so the report must
        // flag the violated condition.
        let s = iwp()
            .with_outputs(vec![Expr::sin(iwp_combined_output())])
            .unwrap();
        let point = s.point(vec![0.1, 0.05], Some(vec![0.3, -0.2]));
        let half = half_degree_default(&s, &point).unwrap();
        let full = full_relative_degree(&s, &point, crate::expr::DEFAULT_ZERO_SEED).unwrap();
        let report = analysis_report(&s, &half, Some(&full), &point);
        let text = report.to_string();
        assert!(text.contains("MR2 violated"), "{text}");
        assert!(text.contains("half-degree nu = 2"), "{text}");
        assert!(!report.solvable);
        assert!(!report.mr2_failures.is_empty());
        // and it serializes
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"mr2\":false"));
    }

    #[test]
    fn combined_output_report_is_solvable_and_fully_linearizing() {
        let s = iwp().with_outputs(vec![iwp_combined_output()]).unwrap();
        let point = s.point(vec![0.1, 0.05], Some(vec![0.3, -0.2]));
        let half = half_degree_default(&s, &point).unwrap();
        let full = full_relative_degree(&s, &point, crate::expr::DEFAULT_ZERO_SEED).unwrap();
        let report = analysis_report(&s, &half, Some(&full), &point);
        assert!(report.solvable && report.fully_linearizing);
        assert_eq!(report.rho_equals_two_nu, Some(true));
        let text = report.to_string();
        assert!(text.contains("satisfied"), "{text}");
        assert!(text.contains("fully linearizing"), "{text}");
    }

    #[test]
    fn law_report_prints_the_feedback_pieces() {
        let s = coupled_regime(1);
        let point = s.point(vec![0.25, -0.4, 0.6], Some(vec![0.3, -0.2, 0.5]));
        let half = half_degree_default(&s, &point).unwrap();
        let nu: Vec<usize> = half.nu.iter().map(|d| d.unwrap()).collect();
        let (law, nf) = synthesize(&s, &half, &point, None).unwrap();
        let report = law_report(&s, &law, &nf);
        assert_eq!(report.nu, nu);
        let text = report.to_string();
        assert!(text.contains("phi1 ="), "{text}");
        assert!(text.contains("beta"), "{text}");
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("\"decoupling\""));
    }

    #[test]
    fn corpus_table_renders_aligned_rows() {
        let rows = vec![
            CorpusRow {
                system: "iwp".into(),
                case: "default".into(),
                nu: "(1)".into(),
                rho: "(2)".into(),
                solvable: false,
                fully_linearizing: false,
                certificate: None,
            },
            CorpusRow {
                system: "iwp".into(),
                case: "combined".into(),
                nu: "(2)".into(),
                rho: "(4)".into(),
                solvable: true,
                fully_linearizing: true,
                certificate: Some(true),
            },
        ];
        let table = render_corpus_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("system"));
        assert!(lines[3].contains("pass"));
    }
}
