use iceo_core::oracle::{solve_regularized, OracleConfig};
use iceo_core::simplex::sample_simplex_uniform;
use iceo_core::surrogate::{generate_surrogate_samples, MlpFitConfig, MlpSurrogate, SurrogateSampling};
use iceo_harness::config::ExperimentConfig;

fn main() {
    let prob = ExperimentConfig::default().problem.build().unwrap();
    let rho = 0.01;
    let oracle = OracleConfig::default();
    let test = sample_simplex_uniform(4, 300, 99).unwrap();
    let mut refs = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for p in &test {
        let sol = solve_regularized(&prob, p, rho, &oracle, warm.as_deref()).unwrap();
        refs.push(sol.w.clone());
        warm = Some(sol.w);
    }
    for (samples, hidden, epochs, lr) in [
        (4800usize, 128usize, 600usize, 1e-2),
        (4800, 128, 600, 5e-3),
        (8000, 128, 500, 1e-2),
    ] {
        let plan = generate_surrogate_samples(&prob, rho, SurrogateSampling::Uniform { count: samples }, 0.0, 7, &oracle).unwrap();
        let cfg = MlpFitConfig { hidden, epochs, learning_rate: lr, batch_size: 64, seed: 11 };
        let t = std::time::Instant::now();
        let m = MlpSurrogate::fit(&plan, &cfg).unwrap();
        let fit_s = t.elapsed().as_secs_f64();
        let mut sse = 0.0; let mut sup = 0.0f64; let mut n = 0;
        for (p, r) in test.iter().zip(&refs) {
            let w = m.eval(p).unwrap();
            for (a, b) in w.iter().zip(r) { sse += (a-b)*(a-b); sup = sup.max((a-b).abs()); n += 1; }
        }
        println!("samples={samples} hidden={hidden} epochs={epochs} lr={lr}: rmse={:.4} sup={:.4} fit {:.1}s", (sse/n as f64).sqrt(), sup, fit_s);
    }
}
