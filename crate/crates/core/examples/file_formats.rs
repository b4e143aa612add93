//! Write and re-read the model, sample, distance and report formats.

use treespec::io::{self, RunConfig, RunReport};
use treespec::model::generate::{random_model, GeneratorConfig};
use treespec::topology::LogDetMetric;

fn main() -> treespec::Result<()> {
    let model = random_model(&GeneratorConfig { n: 4, ..GeneratorConfig::default() }, 1)?;
    let text = io::write_model(&model);
    print!("{text}");
    assert!(io::same_model(&io::parse_model(&text)?, &model));

    let samples = model.sample(5, 2);
    let stext = io::write_samples(&samples);
    print!("{stext}");
    assert_eq!(io::parse_samples(&stext)?, samples);

    let metric = LogDetMetric::from_samples(&model.sample(10_000, 3))?;
    print!("{}", io::write_dist(&metric));

    let config = RunConfig::from_toml("seed = 9\nm = 5000\nmode = \"exact-oracle\"\n")?;
    print!("{}", config.to_toml());

    let mut report = RunReport::new("demo");
    report.set_f64("eval.tv", 1.5e-3);
    let parsed = RunReport::parse(&report.to_text())?;
    println!("report round trip: {:?}", parsed.get("eval.tv"));
    Ok(())
}
