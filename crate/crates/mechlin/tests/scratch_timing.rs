use std::time::Instant;
use mechlin::geometry::half_degree_default;
use mechlin::synthesis::synthesize;
use mechlin::{corpus, decoupling_certificate};

#[test]
fn timing() {
    let loaded = corpus::load("tora3").unwrap().unwrap();
    let flat = loaded.output_choices[0].1.clone();
    let s = loaded.system.with_outputs(flat).unwrap();
    eprintln!("start");
    let point = s.point(loaded.x0.clone().unwrap(), Some(loaded.v0.clone().unwrap()));

    let t0 = Instant::now();
    let half = half_degree_default(&s, &point).unwrap();
    eprintln!("half_degree: {:.2}s nu={:?}", t0.elapsed().as_secs_f64(), half.nu);

    let t0 = Instant::now();
    let (law, nf) = synthesize(&s, &half, &point, None).unwrap();
    eprintln!("synthesize: {:.2}s certified={}", t0.elapsed().as_secs_f64(), nf.certified);

    let t0 = Instant::now();
    let cert = decoupling_certificate(&s, &law, loaded.x0.as_ref().unwrap(), loaded.v0.as_ref().unwrap(), 1.0, 1e-4).unwrap();
    eprintln!("certificate: {:.2}s passed={}", t0.elapsed().as_secs_f64(), cert.passed);
}
