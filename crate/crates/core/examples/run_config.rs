//! Resolve a run configuration from a file plus command-line style
//! overrides, then print the canonical form.

use submatch::bench::{config_load, parse_override};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::temp_dir().join("submatch-example.cfg");
    std::fs::write(&path, "# desk-scale model\nK = 2\nD = 8\nlr = 0.001\ncurriculum = 8,16\n")?;
    let overrides = vec![parse_override("K=4")?, parse_override("seed=17")?];
    let cfg = config_load(Some(&path), &overrides)?;
    print!("{}", cfg.to_text());
    std::fs::remove_file(path)?;
    Ok(())
}
