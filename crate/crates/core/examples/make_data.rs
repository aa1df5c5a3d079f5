//! Regenerates the bundled records under `data/`:
//! `cargo run -p mpk --example make_data -- data`.

use std::path::PathBuf;

use mpk::data::write_signals;
use mpk::experiments::silverbox::surrogate_data;
use mpk::volterra::cubic_example_record;

fn main() -> mpk::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(root.join("surrogate")).map_err(|e| mpk::Error::io(root.display().to_string(), e))?;
    write_signals(&root.join("tiny.csv"), &cubic_example_record(20, 0.01, 1)?)?;
    let s = surrogate_data(0);
    write_signals(&root.join("surrogate/train.csv"), &s.train)?;
    write_signals(&root.join("surrogate/test.csv"), &s.test)?;
    Ok(())
}
