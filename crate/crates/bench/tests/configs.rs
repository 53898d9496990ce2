use std::path::Path;

use tolcone_bench::runner::load_grid_dir;
use tolcone_bench::{load_config, RunConfig};

fn dir(sub: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(sub)
}

#[test]
fn bundled_configs_load_and_round_trip() {
    let mut n = 0;
    for d in ["", "ablation"] {
        for c in load_grid_dir(&dir(d)).unwrap() {
            assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
            n += 1;
        }
    }
    assert_eq!(n, 10);
}

#[test]
fn ablation_configs_cover_every_solver() {
    let configs = load_grid_dir(&dir("ablation")).unwrap();
    let mut solvers: Vec<String> = configs.iter().map(|c| c.solver().to_string()).collect();
    solvers.sort();
    assert_eq!(
        solvers,
        ["explicit", "implicit", "linear(0.1)", "linear(10)", "mgda", "pcgrad"]
    );
    assert!(configs
        .iter()
        .all(|c| c.problem.to_string() == "toyflow-image" && c.max_steps == 1000));
}

#[test]
fn decaying_schedules_parse() {
    let c = load_config(&dir("quadratic-implicit.toml")).unwrap();
    let beta = c.surgery().beta;
    assert!((beta.at(0) - 0.2).abs() < 1e-15);
    assert!((beta.at(7) - 0.2 * 8f64.powf(-1.3433333333333333)).abs() < 1e-15);
}
