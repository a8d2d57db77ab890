use mechlin::geometry::half_degree_default;
use mechlin::sim::{closed_loop_run, InputSignal};
use mechlin::synthesis::synthesize;
use mechlin::corpus;

#[test]
fn closed_loop_probe() {
    let loaded = corpus::load("tora3").unwrap().unwrap();
    let flat = loaded.output_choices[0].1.clone();
    let s = loaded.system.with_outputs(flat).unwrap();
    let x0 = loaded.x0.clone().unwrap();
    let v0 = loaded.v0.clone().unwrap();
    let point = s.point(x0.clone(), Some(v0.clone()));
    let half = half_degree_default(&s, &point).unwrap();
    let (law, _nf) = synthesize(&s, &half, &point, None).unwrap();

    let candidates: Vec<(&str, Vec<f64>, Vec<f64>)> = vec![
        ("bundled", x0.clone(), v0.clone()),
        ("origin", vec![0.0; 3], vec![0.0; 3]),
        ("small-x", vec![0.05, 0.02, 0.1], vec![0.0; 3]),
        ("small-xv", vec![0.05, 0.02, 0.1], vec![0.05, -0.05, 0.1]),
    ];
    for (name, cx0, cv0) in &candidates {
        for (label, sig) in [
            ("zero", InputSignal::Zero),
            (
                "step",
                InputSignal::Step {
                    amplitude: 1.0,
                    onset: 0.1,
                },
            ),
        ] {
            match closed_loop_run(&s, &law, cx0, cv0, &[sig], 1.0, 1e-4) {
                Ok((orig, _chart)) => {
                    let last = orig.times.len() - 1;
                    eprintln!(
                        "{name}/{label}: ok  x(1)={:?} max|u|={:.2}",
                        orig.states[last]
                            .iter()
                            .map(|v| (v * 1e3).round() / 1e3)
                            .collect::<Vec<_>>(),
                        orig.inputs
                            .iter()
                            .flat_map(|r| r.iter())
                            .fold(0.0f64, |a, b| a.max(b.abs())),
                    );
                }
                Err(err) => {
                    let short = format!("{err:?}");
                    eprintln!("{name}/{label}: ERR {}", &short[..short.len().min(60)]);
                }
            }
        }
    }
}
