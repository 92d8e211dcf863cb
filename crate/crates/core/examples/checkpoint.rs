//! Save a model to the text checkpoint format and load it back bit for bit.

use submatch::model::{EncoderConfig, PolicyModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = PolicyModel::new(EncoderConfig { layers: 2, dim: 8, ..EncoderConfig::default() }, 42)?;
    let text = model.save();
    println!("{} lines, first: {}", text.lines().count(), text.lines().next().unwrap_or(""));

    let path = std::env::temp_dir().join("submatch-example.ckpt");
    std::fs::write(&path, &text)?;
    let loaded = PolicyModel::load(&std::fs::read_to_string(&path)?)?;
    assert!(loaded.params().bitwise_eq(model.params()));
    println!("round trip exact, fingerprint {:016x}", loaded.fingerprint());
    std::fs::remove_file(path)?;
    Ok(())
}
