//! Result persistence: bit-exact CSV tick tables and structured JSON.

use std::io::Write;
use std::path::Path;

use crate::runner::ResultBundle;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
}

impl EmitFormat {
    pub fn extension(self) -> &'static str {
        match self {
            EmitFormat::Csv => "csv",
            EmitFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for EmitFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            other => Err(format!("unknown format {other:?}, expected csv or json")),
        }
    }
}

/// CSV tick table: header plus one row per tick, `\n` endings, 17
/// significant digits so masses round-trip bit-exactly.
pub fn csv_string(bundle: &ResultBundle) -> String {
    let mut out = String::from("tick_index,t_seconds,prob_mass,prob_density\n");
    if let Some(dist) = &bundle.distribution {
        for row in &dist.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e}\n",
                row.tick_index, row.t_seconds, row.prob_mass, row.prob_density
            ));
        }
    }
    out
}

/// Structured output mirroring the result bundle field names.
pub fn json_string(bundle: &ResultBundle) -> String {
    let mut s = serde_json::to_string_pretty(bundle).expect("bundle serializes");
    s.push('\n');
    s
}

/// Write the bundle in the requested format; the write is atomic (temp file
/// plus rename) so partial results never appear under the final name.
pub fn emit(bundle: &ResultBundle, format: EmitFormat, path: &Path) -> Result<(), HarnessError> {
    let payload = match format {
        EmitFormat::Csv => csv_string(bundle),
        EmitFormat::Json => json_string(bundle),
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    }
    let tmp = path.with_extension(format!("{}.tmp", format.extension()));
    {
        let mut f = std::fs::File::create(&tmp)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", tmp.display())))?;
        f.write_all(payload.as_bytes())
            .map_err(|e| HarnessError::Io(format!("{}: {e}", tmp.display())))?;
    }
    std::fs::rename(&tmp, path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}
