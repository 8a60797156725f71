//! Debug traces: frame dumps (bits, symbols, LLRs) and channel realizations
//! (h, w, seed) as named-array archives with JSON metadata, for offline
//! inspection and exact replay.

use std::path::Path;

use num_complex::Complex64;
use serde_json::json;

use crate::io::checkpoint::{read_archive, write_archive};
use crate::nn::Tensor;
use crate::Result;

fn complex_arrays(name: &str, data: &[Complex64]) -> [(String, Tensor); 2] {
    [
        (
            format!("{name}_re"),
            Tensor::new(vec![data.len()], data.iter().map(|c| c.re).collect()),
        ),
        (
            format!("{name}_im"),
            Tensor::new(vec![data.len()], data.iter().map(|c| c.im).collect()),
        ),
    ]
}

fn read_complex(
    arrays: &[(String, Tensor)],
    name: &str,
) -> Result<Vec<Complex64>> {
    let find = |n: &str| -> Result<&Tensor> {
        arrays
            .iter()
            .find(|(an, _)| an == n)
            .map(|(_, t)| t)
            .ok_or_else(|| crate::Error::Checkpoint(format!("trace missing array {n}")))
    };
    let re = find(&format!("{name}_re"))?;
    let im = find(&format!("{name}_im"))?;
    Ok(re
        .data()
        .iter()
        .zip(im.data())
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect())
}

/// Dumps one frame of the digital chain: payload bits, transmitted symbols,
/// received symbols, and demapper LLRs.
pub fn write_frame_trace(
    path: &Path,
    label: &str,
    bits: &[u8],
    tx_symbols: &[Complex64],
    rx_symbols: &[Complex64],
    llrs: &[f64],
) -> Result<()> {
    let bits_t = Tensor::new(vec![bits.len()], bits.iter().map(|&b| f64::from(b)).collect());
    let llrs_t = Tensor::new(vec![llrs.len()], llrs.to_vec());
    let tx = complex_arrays("tx", tx_symbols);
    let rx = complex_arrays("rx", rx_symbols);
    let arrays: Vec<(String, &Tensor)> = vec![
        ("bits".to_string(), &bits_t),
        (tx[0].0.clone(), &tx[0].1),
        (tx[1].0.clone(), &tx[1].1),
        (rx[0].0.clone(), &rx[0].1),
        (rx[1].0.clone(), &rx[1].1),
        ("llrs".to_string(), &llrs_t),
    ];
    write_archive(path, &json!({ "kind": "frame_trace", "label": label }), &arrays)
}

/// A channel realization with enough metadata to replay it exactly.
pub fn write_channel_trace(
    path: &Path,
    seed: u64,
    kind: crate::channel::ChannelKind,
    rician_r: f64,
    noise_variance: f64,
    h: &[Complex64],
    w: &[Complex64],
) -> Result<()> {
    let ha = complex_arrays("h", h);
    let wa = complex_arrays("w", w);
    let arrays: Vec<(String, &Tensor)> = vec![
        (ha[0].0.clone(), &ha[0].1),
        (ha[1].0.clone(), &ha[1].1),
        (wa[0].0.clone(), &wa[0].1),
        (wa[1].0.clone(), &wa[1].1),
    ];
    write_archive(
        path,
        &json!({
            "kind": "channel_trace",
            "seed": seed,
            "channel": kind.as_str(),
            "rician_r": rician_r,
            "noise_variance": noise_variance,
        }),
        &arrays,
    )
}

/// Reads back a channel trace: `(meta, h, w)`.
pub fn read_channel_trace(
    path: &Path,
) -> Result<(serde_json::Value, Vec<Complex64>, Vec<Complex64>)> {
    let (meta, arrays) = read_archive(path)?;
    let h = read_complex(&arrays, "h")?;
    let w = read_complex(&arrays, "w")?;
    Ok((meta, h, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, ChannelKind};
    use crate::rng::rng_from_seed;

    #[test]
    fn channel_trace_replays_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chan.naa");
        let mut rng = rng_from_seed(11);
        let h = sample_channel(ChannelKind::Rician, 1.0, 64, &mut rng).unwrap();
        let w = sample_channel(ChannelKind::Rayleigh, 0.0, 64, &mut rng).unwrap();
        write_channel_trace(&path, 11, ChannelKind::Rician, 1.0, 0.5, &h, &w).unwrap();
        let (meta, h2, w2) = read_channel_trace(&path).unwrap();
        assert_eq!(meta["seed"], 11);
        assert_eq!(meta["channel"], "rician");
        assert_eq!(h, h2);
        assert_eq!(w, w2);
    }

    #[test]
    fn frame_trace_writes_all_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.naa");
        let bits = vec![1u8, 0, 1, 1];
        let tx = vec![Complex64::new(1.0, 0.0); 4];
        let rx = vec![Complex64::new(0.9, 0.1); 4];
        let llrs = vec![5.0, -4.0, 6.0, 3.0];
        write_frame_trace(&path, "test", &bits, &tx, &rx, &llrs).unwrap();
        let (meta, arrays) = read_archive(&path).unwrap();
        assert_eq!(meta["kind"], "frame_trace");
        let names: Vec<&str> = arrays.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["bits", "tx_re", "tx_im", "rx_re", "rx_im", "llrs"]);
        assert_eq!(arrays[0].1.data(), &[1.0, 0.0, 1.0, 1.0]);
    }
}
