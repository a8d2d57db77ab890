//! Loading mechanical systems from TOML system files.
//!
//! A system file declares the dimensions, coordinate names, numeric
//! parameter values, and the dynamics through one of two routes:
//!
//! ```toml
//! n = 2
//! m = 1
//! vars = ["x1", "x2"]
//! outputs = ["x1"]
//! x0 = [0.2, 0.1]          # optional default analysis point
//! v0 = [0.0, 0.0]
//!
//! [params]
//! m0 = 29.43
//!
//! # Route 1: explicit geometry.  Unlisted Christoffel entries are zero;
//! # G.i.j.k is mirrored onto G.i.k.j automatically.
//! [christoffel]
//! G.1.2.2 = "-sin(x1)"
//! e = ["m0*sin(x1)", "0"]
//! g.1 = ["0", "1"]
//!
//! # Route 2: inertia matrix and potential (instead of [christoffel]).
//! # [lagrangian]
//! # M.1.1 = "m0"     # symmetric; give each entry once
//! # V = "..."
//! # tau0 = ["0", "0"]      # optional, default zero
//! # tau.1 = ["0", "1"]
//! ```
//!
//! Optional extras: `[output_choices]` names alternative output vectors for
//! the same dynamics, and `[[regime]]` blocks declare named variants that
//! may override parameter values, individual Christoffel entries, the drift
//! or control columns, and the default point.  Overriding an entry with
//! `"0"` removes the term structurally, which matters for the symbolic
//! analysis: a parameter that merely has the value zero is still treated as
//! generic by the zero tests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::expr::{parse, Expr, ParseError};
use crate::model::{from_lagrangian, LagrangianSpec, MechanicalSystem, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum SysFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Toml(#[from] Box<toml::de::Error>),
    #[error("{0}")]
    Structure(String),
    #[error("expression for {key}: {source}")]
    BadExpr {
        key: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<SysFileError>,
    },
}

/// A system file, fully parsed and validated.
#[derive(Debug)]
pub struct LoadedSystem {
    /// The system under the file's default parameters and outputs.
    pub system: MechanicalSystem,
    /// Default analysis/simulation point, when the file provides one.
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    /// Named alternative output vectors for the same dynamics.
    pub output_choices: Vec<(String, Vec<Expr>)>,
    /// Named variants bundled with the file, in file order.
    pub regimes: Vec<LoadedRegime>,
    /// When the file used the inertia-matrix route, the generating data
    /// (useful for energy accounting).
    pub lagrangian: Option<LagrangianSpec>,
}

/// One materialized `[[regime]]` variant.
#[derive(Debug)]
pub struct LoadedRegime {
    pub name: String,
    pub system: MechanicalSystem,
    /// Regime point, falling back to the file-level default.
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n: usize,
    m: usize,
    vars: Vec<String>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    outputs: Vec<String>,
    #[serde(default)]
    output_choices: BTreeMap<String, Vec<String>>,
    x0: Option<Vec<f64>>,
    v0: Option<Vec<f64>>,
    christoffel: Option<RawChristoffel>,
    lagrangian: Option<RawLagrangian>,
    #[serde(default, rename = "regime")]
    regimes: Vec<RawRegime>,
}

type GammaEntries = BTreeMap<String, BTreeMap<String, BTreeMap<String, String>>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChristoffel {
    #[serde(default, rename = "G")]
    gamma: GammaEntries,
    e: Vec<String>,
    g: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLagrangian {
    #[serde(rename = "M")]
    mass: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(rename = "V")]
    potential: String,
    tau0: Option<Vec<String>>,
    tau: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegime {
    name: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    x0: Option<Vec<f64>>,
    v0: Option<Vec<f64>>,
    christoffel: Option<RawChristoffelOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChristoffelOverride {
    #[serde(default, rename = "G")]
    gamma: GammaEntries,
    e: Option<Vec<String>>,
    #[serde(default)]
    g: BTreeMap<String, Vec<String>>,
}

/// Parse and validate a system file from disk.
pub fn load_system(path: &Path) -> Result<LoadedSystem, SysFileError> {
    let wrap = |source: SysFileError| SysFileError::InFile {
        path: path.display().to_string(),
        source: Box::new(source),
    };
    let text = std::fs::read_to_string(path).map_err(|e| wrap(e.into()))?;
    parse_system_str(&text).map_err(wrap)
}

/// Parse and validate a system file from its text.
pub fn parse_system_str(text: &str) -> Result<LoadedSystem, SysFileError> {
    let raw: RawSystem = toml::from_str(text).map_err(Box::new)?;
    let (n, m) = (raw.n, raw.m);
    if n == 0 || m == 0 {
        return Err(SysFileError::Structure(
            "n and m must be at least 1".into(),
        ));
    }
    if raw.vars.len() != n {
        return Err(SysFileError::Structure(format!(
            "vars lists {} names for n = {n}",
            raw.vars.len()
        )));
    }
    check_point_dims(n, &raw.x0, &raw.v0, "file")?;

    let parse_at = |key: &str, text: &str| -> Result<Expr, SysFileError> {
        let e = parse(text, &raw.vars).map_err(|source| SysFileError::BadExpr {
            key: key.to_string(),
            source,
        })?;
        if e.max_var_index() > n {
            return Err(SysFileError::Structure(format!(
                "expression for {key} uses more than the {n} configuration variables"
            )));
        }
        Ok(e)
    };
    let parse_vec = |key: &str, texts: &[String], len: usize| -> Result<Vec<Expr>, SysFileError> {
        if texts.len() != len {
            return Err(SysFileError::Structure(format!(
                "{key} must list {len} expressions, found {}",
                texts.len()
            )));
        }
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| parse_at(&format!("{key}[{}]", i + 1), t))
            .collect()
    };

    let outputs = parse_vec("outputs", &raw.outputs, m)?;
    let mut output_choices = Vec::new();
    for (name, texts) in &raw.output_choices {
        output_choices.push((
            name.clone(),
            parse_vec(&format!("output_choices.{name}"), texts, m)?,
        ));
    }

    let (system, lagrangian) = match (&raw.christoffel, &raw.lagrangian) {
        (Some(_), Some(_)) => {
            return Err(SysFileError::Structure(
                "give either [christoffel] or [lagrangian], not both".into(),
            ))
        }
        (None, None) => {
            return Err(SysFileError::Structure(
                "one of [christoffel] or [lagrangian] is required".into(),
            ))
        }
        (Some(chr), None) => {
            let system = build_christoffel(&raw, chr, &outputs, &raw.params, &parse_at, &parse_vec)?;
            (system, None)
        }
        (None, Some(lag)) => {
            let spec = build_lagrangian(&raw, lag, &outputs, &raw.params, &parse_at, &parse_vec)?;
            (from_lagrangian(&spec)?, Some(spec))
        }
    };

    let mut regimes = Vec::new();
    for rr in &raw.regimes {
        check_point_dims(n, &rr.x0, &rr.v0, &format!("regime '{}'", rr.name))?;
        let mut params = raw.params.clone();
        params.extend(rr.params.iter().map(|(k, v)| (k.clone(), *v)));
        let system = match (&raw.christoffel, &raw.lagrangian) {
            (Some(chr), None) => {
                let merged = merge_christoffel(chr, rr.christoffel.as_ref());
                build_christoffel(&raw, &merged, &outputs, &params, &parse_at, &parse_vec)?
            }
            (None, Some(lag)) => {
                if rr.christoffel.is_some() {
                    return Err(SysFileError::Structure(format!(
                        "regime '{}': structural overrides need the [christoffel] route",
                        rr.name
                    )));
                }
                let mut spec = build_lagrangian(&raw, lag, &outputs, &params, &parse_at, &parse_vec)?;
                spec.params = params;
                from_lagrangian(&spec)?
            }
            _ => unreachable!("validated above"),
        };
        regimes.push(LoadedRegime {
            name: rr.name.clone(),
            system,
            x0: rr.x0.clone().or_else(|| raw.x0.clone()),
            v0: rr.v0.clone().or_else(|| raw.v0.clone()),
        });
    }

    check_declared_symbols(&system)?;
    for (name, exprs) in &output_choices {
        for (l, e) in exprs.iter().enumerate() {
            check_expr_symbols(
                &format!("output_choices.{name}[{}]", l + 1),
                e,
                &system.params,
            )?;
        }
    }
    for regime in &regimes {
        check_declared_symbols(&regime.system)?;
    }

    Ok(LoadedSystem {
        system,
        x0: raw.x0,
        v0: raw.v0,
        output_choices,
        regimes,
        lagrangian,
    })
}

/// Parse override output expressions (CLI `--outputs` / `--candidates`)
/// against a system's variables and declared parameters.
pub fn parse_outputs(
    s: &MechanicalSystem,
    texts: &[&str],
) -> Result<Vec<Expr>, SysFileError> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let key = format!("outputs[{}]", i + 1);
            let e = parse(t, &s.var_names)
                .map_err(|source| SysFileError::BadExpr { key: key.clone(), source })?;
            if e.max_var_index() > s.n {
                return Err(SysFileError::Structure(format!(
                    "expression for {key} uses more than the {} configuration variables",
                    s.n
                )));
            }
            check_expr_symbols(&key, &e, &s.params)?;
            Ok(e)
        })
        .collect()
}

/// An undeclared name inside an expression parses as a free parameter; catch
/// it at load time instead of at the first evaluation.
fn check_expr_symbols(
    whence: &str,
    e: &Expr,
    params: &BTreeMap<String, f64>,
) -> Result<(), SysFileError> {
    for p in e.params_used() {
        if !params.contains_key(&p) {
            return Err(SysFileError::Structure(format!(
                "{whence} references '{p}', which is neither a configuration \
                 variable nor a declared parameter"
            )));
        }
    }
    Ok(())
}

fn check_declared_symbols(system: &MechanicalSystem) -> Result<(), SysFileError> {
    let n = system.n;
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                check_expr_symbols(
                    &format!("christoffel G.{}.{}.{}", i + 1, j + 1, k + 1),
                    &system.gamma[i][j][k],
                    &system.params,
                )?;
            }
        }
        check_expr_symbols(&format!("e[{}]", i + 1), &system.e[i], &system.params)?;
    }
    for r in 0..system.m {
        for i in 0..n {
            check_expr_symbols(
                &format!("g.{}[{}]", r + 1, i + 1),
                &system.g[r][i],
                &system.params,
            )?;
        }
    }
    for (l, h) in system.h.iter().enumerate() {
        check_expr_symbols(&format!("outputs[{}]", l + 1), h, &system.params)?;
    }
    Ok(())
}

fn check_point_dims(
    n: usize,
    x0: &Option<Vec<f64>>,
    v0: &Option<Vec<f64>>,
    what: &str,
) -> Result<(), SysFileError> {
    for (name, p) in [("x0", x0), ("v0", v0)] {
        if let Some(p) = p {
            if p.len() != n {
                return Err(SysFileError::Structure(format!(
                    "{what}: {name} has {} entries for n = {n}",
                    p.len()
                )));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(SysFileError::Structure(format!(
                    "{what}: {name} must be finite"
                )));
            }
        }
    }
    Ok(())
}

/// 1-based index key "i" within 1..=max.
fn index_key(key: &str, max: usize, what: &str) -> Result<usize, SysFileError> {
    match key.parse::<usize>() {
        Ok(i) if (1..=max).contains(&i) => Ok(i),
        _ => Err(SysFileError::Structure(format!(
            "{what} index '{key}' is not in 1..={max}"
        ))),
    }
}

fn build_christoffel(
    raw: &RawSystem,
    chr: &RawChristoffel,
    outputs: &[Expr],
    params: &BTreeMap<String, f64>,
    parse_at: &dyn Fn(&str, &str) -> Result<Expr, SysFileError>,
    parse_vec: &dyn Fn(&str, &[String], usize) -> Result<Vec<Expr>, SysFileError>,
) -> Result<MechanicalSystem, SysFileError> {
    let (n, m) = (raw.n, raw.m);
    let mut gamma = vec![vec![vec![Expr::zero(); n]; n]; n];
    let mut given = vec![vec![vec![false; n]; n]; n];
    for (ik, jt) in &chr.gamma {
        let i = index_key(ik, n, "christoffel G")?;
        for (jk, kt) in jt {
            let j = index_key(jk, n, "christoffel G")?;
            for (kk, text) in kt {
                let k = index_key(kk, n, "christoffel G")?;
                let expr = parse_at(&format!("christoffel.G.{i}.{j}.{k}"), text)?;
                for (a, b) in [(j - 1, k - 1), (k - 1, j - 1)] {
                    if given[i - 1][a][b] && gamma[i - 1][a][b] != expr {
                        return Err(SysFileError::Structure(format!(
                            "christoffel.G.{i}.{j}.{k} conflicts with its symmetric mirror"
                        )));
                    }
                    gamma[i - 1][a][b] = expr.clone();
                    given[i - 1][a][b] = true;
                }
            }
        }
    }
    let e = parse_vec("christoffel.e", &chr.e, n)?;
    let mut g = Vec::with_capacity(m);
    for r in 1..=m {
        let texts = chr.g.get(&r.to_string()).ok_or_else(|| {
            SysFileError::Structure(format!("christoffel.g.{r} is missing (m = {m})"))
        })?;
        g.push(parse_vec(&format!("christoffel.g.{r}"), texts, n)?);
    }
    for key in chr.g.keys() {
        index_key(key, m, "christoffel g")?;
    }
    Ok(MechanicalSystem::new(
        n,
        m,
        raw.vars.clone(),
        params.clone(),
        gamma,
        e,
        g,
        outputs.to_vec(),
    )?)
}

fn merge_christoffel(
    base: &RawChristoffel,
    over: Option<&RawChristoffelOverride>,
) -> RawChristoffel {
    let mut merged = base.clone();
    let Some(over) = over else {
        return merged;
    };
    for (ik, jt) in &over.gamma {
        let dst = merged.gamma.entry(ik.clone()).or_default();
        for (jk, kt) in jt {
            let dst = dst.entry(jk.clone()).or_default();
            for (kk, text) in kt {
                dst.insert(kk.clone(), text.clone());
            }
        }
    }
    if let Some(e) = &over.e {
        merged.e = e.clone();
    }
    for (rk, col) in &over.g {
        merged.g.insert(rk.clone(), col.clone());
    }
    merged
}

fn build_lagrangian(
    raw: &RawSystem,
    lag: &RawLagrangian,
    outputs: &[Expr],
    params: &BTreeMap<String, f64>,
    parse_at: &dyn Fn(&str, &str) -> Result<Expr, SysFileError>,
    parse_vec: &dyn Fn(&str, &[String], usize) -> Result<Vec<Expr>, SysFileError>,
) -> Result<LagrangianSpec, SysFileError> {
    let (n, m) = (raw.n, raw.m);
    let mut mass = vec![vec![None; n]; n];
    for (ik, jt) in &lag.mass {
        let i = index_key(ik, n, "lagrangian M")?;
        for (jk, text) in jt {
            let j = index_key(jk, n, "lagrangian M")?;
            let expr = parse_at(&format!("lagrangian.M.{i}.{j}"), text)?;
            for (a, b) in [(i - 1, j - 1), (j - 1, i - 1)] {
                if let Some(prev) = &mass[a][b] {
                    if *prev != expr {
                        return Err(SysFileError::Structure(format!(
                            "lagrangian.M.{i}.{j} conflicts with its symmetric mirror"
                        )));
                    }
                }
                mass[a][b] = Some(expr.clone());
            }
        }
    }
    let mass: Vec<Vec<Expr>> = mass
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, entry)| {
                    entry.ok_or_else(|| {
                        SysFileError::Structure(format!(
                            "lagrangian.M.{}.{} is missing",
                            i + 1,
                            j + 1
                        ))
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let potential = parse_at("lagrangian.V", &lag.potential)?;
    let tau0 = match &lag.tau0 {
        Some(texts) => parse_vec("lagrangian.tau0", texts, n)?,
        None => vec![Expr::zero(); n],
    };
    let mut tau = Vec::with_capacity(m);
    for r in 1..=m {
        let texts = lag.tau.get(&r.to_string()).ok_or_else(|| {
            SysFileError::Structure(format!("lagrangian.tau.{r} is missing (m = {m})"))
        })?;
        tau.push(parse_vec(&format!("lagrangian.tau.{r}"), texts, n)?);
    }
    for key in lag.tau.keys() {
        index_key(key, m, "lagrangian tau")?;
    }
    Ok(LagrangianSpec {
        n,
        m,
        mass,
        potential,
        tau0,
        tau,
        var_names: raw.vars.clone(),
        params: params.clone(),
        outputs: outputs.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::nf::simplify;
    use crate::expr::is_zero;
    use crate::fixtures::{coupled_regime, double_pendulum, iwp, tora3};
    use crate::model::{feedback_action, MechanicalTransformation};

    fn assert_same(a: &Expr, b: &Expr, what: &str) {
        let d = simplify(&Expr::add(vec![a.clone(), Expr::neg(b.clone())]));
        assert!(
            is_zero(&d).unwrap().is_zero(),
            "{what} differs: {a} vs {b}"
        );
    }

    /// Entry-wise equality of the geometric data (file params may carry
    /// extras the fixture dropped).
    fn assert_system_matches(file: &MechanicalSystem, fixture: &MechanicalSystem) {
        assert_eq!(file.n, fixture.n);
        assert_eq!(file.m, fixture.m);
        for (k, v) in &fixture.params {
            assert_eq!(file.params.get(k), Some(v), "param {k}");
        }
        let n = file.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    assert_same(
                        &file.gamma[i][j][k],
                        &fixture.gamma[i][j][k],
                        &format!("G.{}.{}.{}", i + 1, j + 1, k + 1),
                    );
                }
            }
            assert_same(&file.e[i], &fixture.e[i], &format!("e[{}]", i + 1));
        }
        for r in 0..file.m {
            for i in 0..n {
                assert_same(&file.g[r][i], &fixture.g[r][i], &format!("g.{}[{}]", r + 1, i + 1));
            }
            assert_same(&file.h[r], &fixture.h[r], &format!("outputs[{}]", r + 1));
        }
    }

    #[test]
    fn bundled_wheel_pendulum_matches_the_fixture() {
        let loaded = crate::corpus::load("iwp").unwrap().unwrap();
        assert_system_matches(&loaded.system, &iwp());
        assert_eq!(loaded.output_choices.len(), 2);
        assert_eq!(loaded.x0.as_deref(), Some(&[0.1, 0.05][..]));
        let combined = &loaded.output_choices[0];
        assert_eq!(combined.0, "combined");
        assert_same(
            &combined.1[0],
            &crate::fixtures::iwp_combined_output(),
            "combined output",
        );
    }

    #[test]
    fn bundled_cart_system_matches_the_fixture() {
        let loaded = crate::corpus::load("tora3").unwrap().unwrap();
        assert_system_matches(&loaded.system, &tora3());
        let flat = &loaded.output_choices[0];
        assert_eq!(flat.0, "flat");
        assert_same(&flat.1[0], &crate::fixtures::tora3_flat_output(), "flat output");
    }

    #[test]
    fn bundled_regimes_match_the_fixture_variants() {
        let loaded = crate::corpus::load("example1").unwrap().unwrap();
        assert_system_matches(&loaded.system, &coupled_regime(1));
        assert_eq!(loaded.regimes.len(), 2);
        assert_eq!(loaded.regimes[0].name, "direct-channel-lost");
        assert_system_matches(&loaded.regimes[0].system, &coupled_regime(2));
        assert_eq!(loaded.regimes[1].name, "coupling-dropped");
        assert_system_matches(&loaded.regimes[1].system, &coupled_regime(3));
        // regimes inherit the file-level point
        assert_eq!(loaded.regimes[0].v0.as_deref(), Some(&[0.3, -0.2, 0.5][..]));
    }

    #[test]
    fn bundled_double_pendulum_matches_the_lagrangian_fixture() {
        let loaded = crate::corpus::load("double_pendulum_base").unwrap().unwrap();
        assert!(loaded.lagrangian.is_some());
        assert_system_matches(&loaded.system, &double_pendulum());
    }

    /// The bundled feedback-transformed double pendulum must be exactly the
    /// base system acted on by the group element that renames acceleration
    /// rows 2 and 3 as the new inputs: ũ_r = −Γ^{r+1}(v,v) + e^{r+1} +
    /// Σ_s g_s^{r+1} u_s, i.e. the inverse of (γ̂ = −Ω, α̂ = ê, β̂ = B).
    #[test]
    fn bundled_feedback_system_is_the_transformed_base() {
        let base = double_pendulum();
        let n = base.n;
        let mut omega_neg = Vec::new();
        let mut alpha_hat = Vec::new();
        let mut beta_hat = vec![vec![Expr::zero(); 2]; 2];
        for r in 0..2 {
            let row = r + 1; // acceleration rows 2 and 3
            let mut mat = vec![vec![Expr::zero(); n]; n];
            for j in 0..n {
                for k in 0..n {
                    mat[j][k] = Expr::neg(base.gamma[row][j][k].clone());
                }
            }
            omega_neg.push(mat);
            alpha_hat.push(base.e[row].clone());
            for s in 0..2 {
                beta_hat[r][s] = base.g[s][row].clone();
            }
        }
        let element = MechanicalTransformation::feedback(n, omega_neg, alpha_hat, beta_hat);
        let inverse = element.feedback_inverse(n).unwrap();
        let (gamma_t, e_t, g_t) = feedback_action(&base, &inverse);

        let loaded = crate::corpus::load("double_pendulum_feedback").unwrap().unwrap();
        let file = &loaded.system;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    assert_same(
                        &file.gamma[i][j][k],
                        &gamma_t[i][j][k],
                        &format!("transformed G.{}.{}.{}", i + 1, j + 1, k + 1),
                    );
                }
            }
            assert_same(&file.e[i], &e_t[i], &format!("transformed e[{}]", i + 1));
        }
        for r in 0..2 {
            for i in 0..n {
                assert_same(
                    &file.g[r][i],
                    &g_t[r][i],
                    &format!("transformed g.{}[{}]", r + 1, i + 1),
                );
            }
        }
    }

    #[test]
    fn loader_rejects_malformed_files() {
        let ok = r#"
            n = 1
            m = 1
            vars = ["x1"]
            outputs = ["x1"]
            [christoffel]
            e = ["0"]
            g.1 = ["1"]
        "#;
        assert!(parse_system_str(ok).is_ok());

        let cases: &[(&str, &str)] = &[
            ("missing dynamics", r#"
                n = 1
                m = 1
                vars = ["x1"]
                outputs = ["x1"]
            "#),
            ("both routes", r#"
                n = 1
                m = 1
                vars = ["x1"]
                outputs = ["x1"]
                [christoffel]
                e = ["0"]
                g.1 = ["1"]
                [lagrangian]
                M.1.1 = "1"
                V = "0"
                tau.1 = ["1"]
            "#),
            ("var count", r#"
                n = 2
                m = 1
                vars = ["x1"]
                outputs = ["x1"]
                [christoffel]
                e = ["0", "0"]
                g.1 = ["1", "0"]
            "#),
            ("missing control column", r#"
                n = 1
                m = 2
                vars = ["x1"]
                outputs = ["x1", "x1"]
                [christoffel]
                e = ["0"]
                g.1 = ["1"]
            "#),
            ("index out of range", r#"
                n = 1
                m = 1
                vars = ["x1"]
                outputs = ["x1"]
                [christoffel]
                G.2.1.1 = "1"
                e = ["0"]
                g.1 = ["1"]
            "#),
            ("asymmetric mirror", r#"
                n = 2
                m = 1
                vars = ["x1", "x2"]
                outputs = ["x1"]
                [christoffel]
                G.1.1.2 = "x1"
                G.1.2.1 = "x2"
                e = ["0", "0"]
                g.1 = ["1", "0"]
            "#),
            ("point dimension", r#"
                n = 2
                m = 1
                vars = ["x1", "x2"]
                outputs = ["x1"]
                x0 = [0.1]
                [christoffel]
                e = ["0", "0"]
                g.1 = ["1", "0"]
            "#),
            ("velocity in configuration expression", r#"
                n = 1
                m = 1
                vars = ["x1"]
                outputs = ["x1"]
                [christoffel]
                e = ["x2"]
                g.1 = ["1"]
            "#),
            ("bad expression", r#"
                n = 1
                m = 1
                vars = ["x1"]
                outputs = ["x1"]
                [christoffel]
                e = ["sin("]
                g.1 = ["1"]
            "#),
            ("structural regime on lagrangian", r#"
                n = 1
                m = 1
                vars = ["x1"]
                outputs = ["x1"]
                [lagrangian]
                M.1.1 = "1"
                V = "0"
                tau.1 = ["1"]
                [[regime]]
                name = "broken"
                [regime.christoffel]
                e = ["1"]
            "#),
        ];
        for (what, text) in cases {
            let err = parse_system_str(text).unwrap_err();
            let msg = err.to_string();
            assert!(!msg.is_empty(), "{what} produced an empty error");
        }

        // expression errors carry the offending key
        let err = parse_system_str(r#"
            n = 1
            m = 1
            vars = ["x1"]
            outputs = ["x1"]
            [christoffel]
            e = ["sin("]
            g.1 = ["1"]
        "#)
        .unwrap_err();
        assert!(err.to_string().contains("christoffel.e[1]"), "{err}");
    }

    #[test]
    fn lagrangian_route_params_regime_rebuilds_the_drift() {
        let text = r#"
            n = 1
            m = 1
            vars = ["x1"]
            outputs = ["x1"]
            [params]
            w = 1.0
            [lagrangian]
            M.1.1 = "1"
            V = "1/2*w*x1^2"
            tau.1 = ["1"]
            [[regime]]
            name = "stiff"
            [regime.params]
            w = 4.0
        "#;
        let loaded = parse_system_str(text).unwrap();
        assert_eq!(loaded.regimes.len(), 1);
        assert_eq!(loaded.regimes[0].system.params["w"], 4.0);
        // drift is symbolic in w, identical in both variants
        assert_same(&loaded.regimes[0].system.e[0], &loaded.system.e[0], "drift");
    }
}
