//! Curve CSV files and the training log.
//!
//! Curve schema (fixed): `snr_db,ms_ssim_mean,ms_ssim_std,ier,ber,
//! symbols_per_image`. Leading `# key=value` comment lines carry metadata
//! (channel kind, legend label) and are ignored by the schema check.
//! Ingested baseline files may omit every column except `snr_db` and
//! `ms_ssim_mean`; missing values read as 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::eval::CurvePoint;
use crate::{Error, Result};

pub const CURVE_COLUMNS: [&str; 6] = [
    "snr_db",
    "ms_ssim_mean",
    "ms_ssim_std",
    "ier",
    "ber",
    "symbols_per_image",
];

/// Serializes curve points with metadata comments. Fixed-precision floats
/// keep same-seed reruns byte-identical.
pub fn curves_to_csv(points: &[CurvePoint], meta: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    let _ = writeln!(out, "{}", CURVE_COLUMNS.join(","));
    for p in points {
        let _ = writeln!(
            out,
            "{:.4},{:.9},{:.9},{:.9},{:.9},{}",
            p.snr_db,
            p.ms_ssim_mean,
            p.ms_ssim_std,
            p.index_error_rate,
            p.post_decode_ber,
            p.symbols_per_image
        );
    }
    out
}

pub fn write_curves(
    path: &Path,
    points: &[CurvePoint],
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    std::fs::write(path, curves_to_csv(points, meta))?;
    Ok(())
}

/// A parsed curve file: points plus its metadata comments.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub points: Vec<CurvePoint>,
    pub meta: BTreeMap<String, String>,
}

pub fn parse_curves(text: &str) -> Result<CurveFile> {
    let mut meta = BTreeMap::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = rest.split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        lines.next();
    }
    let header = lines
        .next()
        .ok_or_else(|| Error::CsvSchema("empty curve file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col_idx = |name: &str| cols.iter().position(|c| *c == name);
    let snr_idx = col_idx("snr_db")
        .ok_or_else(|| Error::CsvSchema("missing required column snr_db".into()))?;
    let mean_idx = col_idx("ms_ssim_mean")
        .ok_or_else(|| Error::CsvSchema("missing required column ms_ssim_mean".into()))?;
    for c in &cols {
        if !CURVE_COLUMNS.contains(c) {
            return Err(Error::CsvSchema(format!("unknown column {c:?}")));
        }
    }

    let mut points = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::CsvSchema(format!(
                "row {}: {} fields for {} columns",
                lineno + 2,
                fields.len(),
                cols.len()
            )));
        }
        let num = |idx: Option<usize>| -> Result<f64> {
            match idx {
                Some(i) => fields[i].parse::<f64>().map_err(|_| {
                    Error::CsvSchema(format!("row {}: non-numeric field {:?}", lineno + 2, fields[i]))
                }),
                None => Ok(0.0),
            }
        };
        points.push(CurvePoint {
            snr_db: num(Some(snr_idx))?,
            ms_ssim_mean: num(Some(mean_idx))?,
            ms_ssim_std: num(col_idx("ms_ssim_std"))?,
            index_error_rate: num(col_idx("ier"))?,
            post_decode_ber: num(col_idx("ber"))?,
            symbols_per_image: num(col_idx("symbols_per_image"))? as usize,
        });
    }
    Ok(CurveFile { points, meta })
}

pub fn read_curves(path: &Path) -> Result<CurveFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::CsvSchema(format!("{}: {e}", path.display())))?;
    parse_curves(&text)
}

/// Per-step training log writer (CSV, one row per step).
pub struct TrainLog {
    file: std::fs::File,
    levels: Vec<usize>,
}

impl TrainLog {
    pub fn create(path: &Path, transmitted_levels: &[usize]) -> Result<Self> {
        use std::io::Write as _;
        let mut file = std::fs::File::create(path)?;
        let mut header = String::from(
            "step,epoch,lr_codec,lr_disc,loss_generator,loss_total,loss_mae,\
             loss_embedding,loss_commitment,loss_gan_disc,gan_generator",
        );
        for l in transmitted_levels {
            let _ = write!(header, ",entropy_l{l}");
        }
        writeln!(file, "{header}")?;
        Ok(Self {
            file,
            levels: transmitted_levels.to_vec(),
        })
    }

    pub fn append(&mut self, m: &crate::train::StepMetrics) -> Result<()> {
        use std::io::Write as _;
        let mut row = format!(
            "{},{},{:.6e},{:.6e},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            m.step,
            m.epoch,
            m.lr_codec,
            m.lr_disc,
            m.loss_generator,
            m.loss_total,
            m.loss_mae,
            m.loss_embedding,
            m.loss_commitment,
            m.loss_gan_disc,
            m.gan_generator
        );
        for l in &self.levels {
            let e = m
                .usage_entropy
                .iter()
                .find(|(lv, _)| lv == l)
                .map_or(0.0, |(_, e)| *e);
            let _ = write!(row, ",{e:.6}");
        }
        writeln!(self.file, "{row}")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(snr: f64) -> CurvePoint {
        CurvePoint {
            snr_db: snr,
            ms_ssim_mean: 0.5 + snr / 100.0,
            ms_ssim_std: 0.01,
            index_error_rate: 0.25,
            post_decode_ber: 0.125,
            symbols_per_image: 320,
        }
    }

    #[test]
    fn csv_roundtrip_preserves_points_and_meta() {
        let points = vec![point(0.0), point(5.0)];
        let mut meta = BTreeMap::new();
        meta.insert("channel".into(), "awgn".into());
        meta.insert("label".into(), "vq-deepsc3".into());
        let text = curves_to_csv(&points, &meta);
        let parsed = parse_curves(&text).unwrap();
        assert_eq!(parsed.meta["channel"], "awgn");
        assert_eq!(parsed.points.len(), 2);
        assert!((parsed.points[1].snr_db - 5.0).abs() < 1e-9);
        assert!((parsed.points[1].ms_ssim_mean - 0.55).abs() < 1e-6);
    }

    #[test]
    fn minimal_baseline_schema_accepted() {
        let text = "snr_db,ms_ssim_mean\n0,0.8\n5,0.9\n";
        let parsed = parse_curves(text).unwrap();
        assert_eq!(parsed.points.len(), 2);
        assert_eq!(parsed.points[0].symbols_per_image, 0);
    }

    #[test]
    fn schema_violations_are_rejected() {
        assert!(parse_curves("").is_err());
        assert!(parse_curves("wrong,cols\n1,2\n").is_err());
        assert!(parse_curves("snr_db,ms_ssim_mean\n1\n").is_err());
        assert!(parse_curves("snr_db,ms_ssim_mean\n1,abc\n").is_err());
        assert!(parse_curves("snr_db,ms_ssim_mean,bogus\n1,0.5,2\n").is_err());
    }

    #[test]
    fn same_points_serialize_identically() {
        let points = vec![point(2.0)];
        let meta = BTreeMap::new();
        assert_eq!(curves_to_csv(&points, &meta), curves_to_csv(&points, &meta));
    }

    #[test]
    fn train_log_writes_entropy_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let mut log = TrainLog::create(&path, &[2, 3]).unwrap();
        let m = crate::train::StepMetrics {
            step: 1,
            epoch: 0,
            lr_codec: 1e-4,
            lr_disc: 1e-5,
            loss_generator: 0.5,
            loss_total: 0.4,
            loss_mae: 0.3,
            loss_embedding: 0.05,
            loss_commitment: 0.2,
            loss_gan_disc: -1.3,
            gan_generator: -0.7,
            usage_entropy: vec![(2, 1.5), (3, 0.9)],
        };
        log.append(&m).unwrap();
        drop(log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,epoch"));
        assert!(text.contains("entropy_l2,entropy_l3"));
        assert!(text.lines().count() == 2);
    }
}
