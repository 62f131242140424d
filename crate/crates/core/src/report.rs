use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    let digest = Sha256::digest(&json);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Comment line leading every report file.
pub fn header_line(hash: &str) -> String {
    format!("# config_hash={hash} version={VERSION}")
}

/// CSV writer whose file starts with the header comment line.
pub fn csv_writer(path: &Path, hash: &str) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = File::create(path)?;
    writeln!(f, "{}", header_line(hash))?;
    Ok(csv::Writer::from_writer(f))
}

/// Reader that skips the header comment line.
pub fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?)
}

/// Mean and 95% confidence half-width `1.96 s / sqrt(n)` with the sample
/// standard deviation.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_half_width_matches_direct_formula() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 * 0.5).collect();
        let (m, h) = mean_ci95(&xs);
        let mean = xs.iter().sum::<f64>() / 100.0;
        let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 99.0).sqrt();
        assert!((m - mean).abs() < 1e-12);
        assert!((h - 1.96 * sd / 10.0).abs() < 1e-12);
        assert_eq!(mean_ci95(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&[1, 2, 3]).unwrap();
        assert_eq!(a, config_hash(&[1, 2, 3]).unwrap());
        assert_ne!(a, config_hash(&[1, 2, 4]).unwrap());
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn header_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let mut w = csv_writer(&p, "abc").unwrap();
        w.write_record(["a", "b"]).unwrap();
        w.write_record(["1", "2"]).unwrap();
        w.flush().unwrap();
        drop(w);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(&header_line("abc")));
        let mut r = csv_reader(&p).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["a", "b"]);
        assert_eq!(r.records().count(), 1);
    }
}
