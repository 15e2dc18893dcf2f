//! Field snapshots: raw little-endian `f64` values plus a JSON sidecar.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lagns_core::{Grid, Rank, SpectralField};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub name: String,
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub rank: String,
    pub components: usize,
    pub time: f64,
    /// Values are stored component-major, row-major within a component.
    pub encoding: String,
    pub bytes: usize,
}

fn rank_name(r: Rank) -> &'static str {
    match r {
        Rank::Scalar => "scalar",
        Rank::Vector => "vector",
        Rank::Tensor => "tensor",
    }
}

fn rank_of(name: &str) -> anyhow::Result<Rank> {
    Ok(match name {
        "scalar" => Rank::Scalar,
        "vector" => Rank::Vector,
        "tensor" => Rank::Tensor,
        other => bail!("unknown rank `{other}`"),
    })
}

/// Writes `<dir>/<name>.bin` and `<dir>/<name>.json`; returns the data path.
pub fn write_snapshot(dir: &Path, name: &str, field: &SpectralField, time: f64) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let bytes: Vec<u8> = field.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let g = field.grid();
    let meta = SnapshotMeta {
        name: name.into(),
        dim: g.dim(),
        n: g.n(),
        length: g.length(),
        rank: rank_name(field.rank()).into(),
        components: field.components(),
        time,
        encoding: "f64-le".into(),
        bytes: bytes.len(),
    };
    let data = dir.join(format!("{name}.bin"));
    std::fs::write(&data, &bytes).with_context(|| format!("writing {}", data.display()))?;
    std::fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&meta)?)?;
    Ok(data)
}

pub fn read_snapshot(data: &Path) -> anyhow::Result<(SpectralField, SnapshotMeta)> {
    let meta: SnapshotMeta = serde_json::from_str(
        &std::fs::read_to_string(data.with_extension("json")).with_context(|| format!("sidecar of {}", data.display()))?,
    )?;
    if meta.encoding != "f64-le" {
        bail!("unsupported encoding `{}`", meta.encoding);
    }
    let bytes = std::fs::read(data)?;
    if bytes.len() != meta.bytes || bytes.len() % 8 != 0 {
        bail!("{}: {} bytes, sidecar says {}", data.display(), bytes.len(), meta.bytes);
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let grid = Grid::new(meta.dim, meta.n, meta.length)?;
    let field = SpectralField::from_values(grid, rank_of(&meta.rank)?, values)?;
    Ok((field, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::standard(2, 8).unwrap();
        let f = SpectralField::from_fn(g, Rank::Vector, |x, c| (x[0] + c as f64).sin() * x[1].cos());
        let path = write_snapshot(dir.path(), "u", &f, 0.25).unwrap();
        let (back, meta) = read_snapshot(&path).unwrap();
        assert_eq!(meta.time, 0.25);
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn truncated_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::standard(2, 8).unwrap();
        let path = write_snapshot(dir.path(), "r", &SpectralField::constant(g, 1.0), 0.0).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_snapshot(&path).is_err());
    }
}
