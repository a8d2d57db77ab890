use std::time::Instant;
use mechlin::expr::{is_zero, Expr};
use mechlin::expr::nf::simplify;
use mechlin::geometry::{half_degree_default, lie_derivative, nabla_d, nabla_d_with_gamma};
use mechlin::model::{feedback_action, MechanicalTransformation};
use mechlin::symmat;
use mechlin::corpus;

fn size(e: &Expr) -> usize {
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => 1,
        Expr::Add(ts) | Expr::Mul(ts) => 1 + ts.iter().map(|t| size(t.as_ref())).sum::<usize>(),
        Expr::Pow(b, _) => 1 + size(b.as_ref()),
        Expr::Apply(_, a) => 1 + size(a.as_ref()),
    }
}

#[test]
fn stages() {
    let loaded = corpus::load("tora3").unwrap().unwrap();
    let flat = loaded.output_choices[0].1.clone();
    let s = loaded.system.with_outputs(flat).unwrap();
    let point = s.point(loaded.x0.clone().unwrap(), Some(loaded.v0.clone().unwrap()));
    let half = half_degree_default(&s, &point).unwrap();
    let n = s.n;
    eprintln!("chain sizes: {:?}", half.chains[0].iter().map(|e| size(e)).collect::<Vec<_>>());

    let top = half.chains[0].last().unwrap();
    let t0 = Instant::now();
    let a1 = lie_derivative(&s.e, top);
    eprintln!("a_vec: {:.2}s size={}", t0.elapsed().as_secs_f64(), size(&a1));

    let t0 = Instant::now();
    let c1 = nabla_d(&s, top);
    let mut csz = vec![];
    for j in 0..n { for k in 0..n { csz.push(size(&c1[j][k])); } }
    eprintln!("c_coeffs: {:.2}s sizes={:?}", t0.elapsed().as_secs_f64(), csz);

    let t0 = Instant::now();
    let (dinv, _det) = symmat::inverse(&half.d_matrix);
    eprintln!("dinv: {:.2}s size={}", t0.elapsed().as_secs_f64(), size(&dinv[0][0]));

    let t0 = Instant::now();
    let mut gamma = vec![vec![vec![Expr::zero(); n]; n]; 1];
    for j in 0..n {
        for k in j..n {
            let val = simplify(&Expr::neg(dinv[0][0].clone() * c1[j][k].clone()));
            gamma[0][j][k] = val.clone();
            gamma[0][k][j] = val;
        }
    }
    let mut gsz = vec![];
    for j in 0..n { for k in 0..n { gsz.push(size(&gamma[0][j][k])); } }
    eprintln!("gamma: {:.2}s sizes={:?}", t0.elapsed().as_secs_f64(), gsz);

    let t0 = Instant::now();
    let alpha = vec![simplify(&Expr::neg(dinv[0][0].clone() * a1.clone()))];
    eprintln!("alpha: {:.2}s size={}", t0.elapsed().as_secs_f64(), size(&alpha[0]));

    let tr = MechanicalTransformation {
        phi: (1..=n).map(Expr::var).collect(),
        gamma_fb: gamma,
        alpha,
        beta: dinv.clone(),
        phi_inverse: None,
    };
    let t0 = Instant::now();
    let (gamma_fb, e_fb, g_fb) = feedback_action(&s, &tr);
    let mut gfsz = 0usize;
    for i in 0..n { for j in 0..n { for k in 0..n { gfsz = gfsz.max(size(&gamma_fb[i][j][k])); } } }
    eprintln!("feedback_action: {:.2}s max gamma' size={} e' sizes={:?} g' sizes={:?}",
        t0.elapsed().as_secs_f64(), gfsz,
        e_fb.iter().map(|e| size(e)).collect::<Vec<_>>(),
        g_fb[0].iter().map(|e| size(e)).collect::<Vec<_>>());

    for (ci, phi_c) in half.chains[0].iter().enumerate() {
        let t0 = Instant::now();
        let nd = nabla_d_with_gamma(&gamma_fb, phi_c, n);
        let mut ndsz = 0usize;
        for j in 0..n { for k in 0..n { ndsz = ndsz.max(size(&nd[j][k])); } }
        eprintln!("nabla'd phi{}: {:.2}s max size={}", ci + 1, t0.elapsed().as_secs_f64(), ndsz);
        let t0 = Instant::now();
        let mut worst = 0.0f64;
        for j in 0..n { for k in j..n {
            let ts = Instant::now();
            let v = is_zero(&nd[j][k]).unwrap();
            worst = worst.max(ts.elapsed().as_secs_f64());
            assert!(v.is_zero(), "phi{} entry ({},{}) nonzero", ci + 1, j + 1, k + 1);
        } }
        eprintln!("  is_zero over entries: {:.2}s (worst single {:.2}s)", t0.elapsed().as_secs_f64(), worst);

        let t0 = Instant::now();
        let le = lie_derivative(&e_fb, phi_c);
        eprintln!("  L_e' phi{}: {:.2}s size={}", ci + 1, t0.elapsed().as_secs_f64(), size(&le));
        let t0 = Instant::now();
        let lg = lie_derivative(&g_fb[0], phi_c);
        eprintln!("  L_g' phi{}: {:.2}s size={}", ci + 1, t0.elapsed().as_secs_f64(), size(&lg));
    }
}
