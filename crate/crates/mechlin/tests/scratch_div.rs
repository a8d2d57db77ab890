use mechlin::corpus;
use mechlin::expr::nf::simplify;
use mechlin::expr::parse;
use mechlin::geometry::lie_derivative;

fn t(src: &str) {
    let names: Vec<String> = vec!["x1".into(), "x2".into(), "x3".into()];
    let e = parse(src, &names).unwrap();
    let s = simplify(&e);
    eprintln!("{src}\n  -> {}", s.to_text(&names));
}

#[test]
fn probe() {
    t("((a+b+c*sin(x1)^2)*3*x2)/(a+b+c*sin(x1)^2)");
    t("(x1*(a+b) + x1*c)/(a+b+c)");
    t("(a*x1 + b*x1*sin(x3)^2)/(a + b*sin(x3)^2)");
    t("(a^2-b^2)/(a+b)");
    t("(a^2+2*a*b+b^2)/(a+b)^2");

    let loaded = corpus::load("tora3").unwrap().unwrap();
    let flat = loaded.output_choices[0].1.clone();
    let s = loaded.system.with_outputs(flat).unwrap();
    let names = s.var_names.clone();
    eprintln!("h = {}", s.h[0].to_text(&names));
    let lh = lie_derivative(&s.e, &s.h[0]);
    eprintln!("L_e h = {}", lh.to_text(&names));
}
