//! Shared unit-test fixtures: small benchmark systems built inline.

use crate::expr::{parse, Expr};
use crate::model::MechanicalSystem;
use std::collections::BTreeMap;

pub fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn pe(text: &str, vars: &[&str]) -> Expr {
    parse(text, &names(vars)).unwrap_or_else(|e| panic!("parse {text:?}: {e}"))
}

/// Pendulum with a reaction wheel: flat connection,
/// e = ((m0/md)·sin x¹, −(m0/md)·sin x¹), g = (−1/md, (md+J2)/(J2·md)),
/// output h = x¹ by default.
pub fn iwp() -> MechanicalSystem {
    let vars = ["x1", "x2"];
    let mut params = BTreeMap::new();
    params.insert("m0".into(), 29.43);
    params.insert("md".into(), 6.0);
    params.insert("J2".into(), 1.0);
    MechanicalSystem::new(
        2,
        1,
        names(&vars),
        params,
        vec![vec![vec![Expr::zero(); 2]; 2]; 2],
        vec![
            pe("(m0/md)*sin(x1)", &vars),
            pe("-(m0/md)*sin(x1)", &vars),
        ],
        vec![vec![pe("-1/md", &vars), pe("(md+J2)/(J2*md)", &vars)]],
        vec![pe("x1", &vars)],
    )
    .unwrap()
}

/// The wheel-pendulum output combination that kills the direct control
/// influence: h = ((md+J2)/J2)·x¹ + x².
pub fn iwp_combined_output() -> Expr {
    pe("(md+J2)/J2*x1 + x2", &["x1", "x2"])
}

/// Three-dimensional two-input testbed with one coupled control direction:
/// e = x³ ∂₂, g₁ = ∂₁, g₂ = g²₂ ∂₂ + ∂₃, Γ²₂₂ and Γ²₃₃ constants.
/// Regimes: 1 = generic (g²₂ ≠ 0), 2 = g²₂ ≡ 0, 3 = g²₂ ≡ 0 ∧ Γ²₃₃ ≡ 0.
pub fn coupled_regime(regime: u8) -> MechanicalSystem {
    let vars = ["x1", "x2", "x3"];
    let mut gamma = vec![vec![vec![Expr::zero(); 3]; 3]; 3];
    gamma[1][1][1] = Expr::param("c22");
    if regime < 3 {
        gamma[1][2][2] = Expr::param("c33");
    }
    let g2_mid = if regime == 1 {
        Expr::param("g22")
    } else {
        Expr::zero()
    };
    let mut params = BTreeMap::new();
    params.insert("c22".into(), 0.7);
    if regime < 3 {
        params.insert("c33".into(), 1.3);
    }
    if regime == 1 {
        params.insert("g22".into(), 2.0);
    }
    MechanicalSystem::new(
        3,
        2,
        names(&vars),
        params,
        gamma,
        vec![Expr::zero(), pe("x3", &vars), Expr::zero()],
        vec![
            vec![Expr::one(), Expr::zero(), Expr::zero()],
            vec![Expr::zero(), g2_mid, Expr::one()],
        ],
        vec![pe("x1", &vars), pe("x2", &vars)],
    )
    .unwrap()
}

/// Spring-coupled two-cart system with an actuated pendulum on the second
/// cart.  Both the connection and the fields share the denominator
/// Δ = p1 + p2·sin²x³ where the p-constants are expanded into the base
/// parameters (m1, m2, m3, l3, J3, k1, k2, a).
pub fn tora3() -> MechanicalSystem {
    let vars = ["x1", "x2", "x3"];
    let d = "(m2*m3*l3^2 + J3*(m2+m3) + m3^2*l3^2*sin(x3)^2)";
    let mut gamma = vec![vec![vec![Expr::zero(); 3]; 3]; 3];
    gamma[1][2][2] = pe(&format!("-(m3*l3*(m3*l3^2+J3))*sin(x3)/{d}"), &vars);
    gamma[2][2][2] = pe(&format!("m3^2*l3^2*sin(x3)*cos(x3)/{d}"), &vars);
    let mut params = BTreeMap::new();
    for p in ["m1", "m2", "m3", "l3", "J3", "k1", "k2"] {
        params.insert(p.into(), 1.0);
    }
    params.insert("a".into(), 9.81);
    MechanicalSystem::new(
        3,
        1,
        names(&vars),
        params,
        gamma,
        vec![
            pe("-(k1/m1)*x1 + (k2/m1)*(x2-x1)", &vars),
            pe(
                &format!("(1/2*m3^2*l3^2*a*sin(2*x3) - k2*(m3*l3^2+J3)*(x2-x1))/{d}"),
                &vars,
            ),
            pe(
                &format!("(m3*l3*k2*(x2-x1)*cos(x3) - m3*l3*a*(m2+m3)*sin(x3))/{d}"),
                &vars,
            ),
        ],
        vec![vec![
            Expr::zero(),
            pe(&format!("-m3*l3*cos(x3)/{d}"), &vars),
            pe(&format!("(m2+m3)/{d}"), &vars),
        ]],
        vec![pe("x1", &vars)],
    )
    .unwrap()
}

/// The output making the two-cart/pendulum system fully linearizable:
/// h = (m1/(m2+m3))x¹ + x² + (m3·l3/(m2+m3))·sin x³.
pub fn tora3_flat_output() -> Expr {
    pe(
        "m1/(m2+m3)*x1 + x2 + m3*l3/(m2+m3)*sin(x3)",
        &["x1", "x2", "x3"],
    )
}

/// Actuated double pendulum (angles x¹, x², torques at both joints) riding
/// on a spring-loaded base that slides horizontally (displacement x³).
/// Supplied through the inertia-matrix route; the potential is oriented so
/// the upright configuration is the unstable one (gravity terms +a·sin x
/// in the resulting drift).  Unit masses/lengths/spring, a = 9.81.
pub fn double_pendulum_lagrangian() -> crate::model::LagrangianSpec {
    let vars = ["x1", "x2", "x3"];
    let mut params = BTreeMap::new();
    for p in ["m1", "m2", "m3", "l1", "l2", "k"] {
        params.insert(p.into(), 1.0);
    }
    params.insert("a".into(), 9.81);
    let mass = vec![
        vec![
            pe("l1^2*(m1+m2)", &vars),
            pe("m2*l1*l2*cos(x1-x2)", &vars),
            pe("l1*(m1+m2)*cos(x1)", &vars),
        ],
        vec![
            pe("m2*l1*l2*cos(x1-x2)", &vars),
            pe("m2*l2^2", &vars),
            pe("m2*l2*cos(x2)", &vars),
        ],
        vec![
            pe("l1*(m1+m2)*cos(x1)", &vars),
            pe("m2*l2*cos(x2)", &vars),
            pe("m1+m2+m3", &vars),
        ],
    ];
    crate::model::LagrangianSpec {
        n: 3,
        m: 2,
        mass,
        potential: pe("(m1+m2)*l1*a*cos(x1) + m2*l2*a*cos(x2) - 1/2*k*x3^2", &vars),
        tau0: vec![Expr::zero(); 3],
        tau: vec![
            vec![Expr::one(), Expr::zero(), Expr::zero()],
            vec![Expr::zero(), Expr::one(), Expr::zero()],
        ],
        var_names: names(&vars),
        params,
        outputs: vec![pe("x2", &vars), pe("x3", &vars)],
    }
}

/// The double pendulum as a mechanical system with outputs (x², x³).
pub fn double_pendulum() -> MechanicalSystem {
    crate::model::from_lagrangian(&double_pendulum_lagrangian()).unwrap()
}
