use cras_harness::config::HarnessConfig;
use cras_harness::population::demo_population;

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data".to_string());
    let dir = std::path::Path::new(&out_dir);
    std::fs::create_dir_all(dir).unwrap();
    HarnessConfig::default()
        .save(dir.join("config.json"))
        .unwrap();
    demo_population().save(dir.join("population.json")).unwrap();
    println!(
        "wrote {}/config.json and {}/population.json",
        out_dir, out_dir
    );
}
