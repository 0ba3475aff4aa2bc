//! Result files. Every CSV starts with `# config:` and `# seeds:` comment
//! lines; every JSON document embeds the config and seeds.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliResult, ErrorKind, StageExt};

/// Configuration and seeds stamped on every output file.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub config: Value,
    pub seeds: Vec<u64>,
}

impl Provenance {
    pub fn new(config: Value, seeds: Vec<u64>) -> Self {
        Self { config, seeds }
    }

    pub fn for_seed(&self, seed: u64) -> Self {
        Self { config: self.config.clone(), seeds: vec![seed] }
    }

    fn header<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# config: {}", self.config)?;
        writeln!(w, "# seeds: {}", json!(self.seeds))
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).stage("output", ErrorKind::Data)?;
    }
    Ok(BufWriter::new(File::create(path).stage("output", ErrorKind::Data)?))
}

/// CSV with provenance comments, then `body` writes the header row and data.
pub fn write_csv_with<F>(path: &Path, prov: &Provenance, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> bosonkernel::Result<()>,
{
    let mut w = create(path)?;
    prov.header(&mut w).stage("output", ErrorKind::Data)?;
    body(&mut w).stage("output", ErrorKind::Data)?;
    w.flush().stage("output", ErrorKind::Data)
}

pub fn write_table(path: &Path, prov: &Provenance, header: &str, rows: &[String]) -> CliResult<()> {
    write_csv_with(path, prov, |w| {
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })
}

/// `{"config": .., "seeds": [..], key: payload}`, pretty-printed.
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, key: &str, payload: &T) -> CliResult<()> {
    let payload = serde_json::to_value(payload).stage("output", ErrorKind::Data)?;
    let doc = json!({ "config": prov.config, "seeds": prov.seeds, key: payload });
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc).stage("output", ErrorKind::Data)?;
    writeln!(w).stage("output", ErrorKind::Data)?;
    w.flush().stage("output", ErrorKind::Data)
}

/// Empty cell for a missing value.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
