use cptensor::*;
fn main() {
    let mut config = SimConfig::new(vec![20, 20, 20], 3, 0.1, 0.0);
    config.gaussian_level = 0.0;
    config.replicates = 10;
    config.seed = 42;
    let t0 = std::time::Instant::now();
    let records = run_experiment(&config).unwrap();
    let good = records.iter().filter(|r| r.fms >= 0.99).count();
    for r in records.iter().filter(|r| r.fms < 0.99) {
        println!("BAD: rep {} {} fms {:.4} sweeps {}", r.replicate, r.method, r.fms, r.sweeps);
    }
    println!("good {good}/20 in {:.0}s", t0.elapsed().as_secs_f64());
}
