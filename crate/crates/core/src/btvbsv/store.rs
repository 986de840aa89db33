//! Draw persistence: a JSON manifest plus a little-endian f64 columnar
//! record file, one record per stored draw. The manifest carries every
//! dimension, the run controls and the seed, so a file can be reloaded for
//! restart or external analysis without other context.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::PosteriorDraws;

#[derive(Debug, Serialize, Deserialize)]
struct DrawManifest {
    format: String,
    n_portfolios: usize,
    n_factors: usize,
    n_periods: usize,
    n_draws: usize,
    seed: u64,
    n_iter: usize,
    burn: usize,
    thin: usize,
    ridge_events: u64,
    aborted: Option<String>,
    /// Field order inside each record, with per-draw lengths.
    record_layout: Vec<(String, usize)>,
}

const FORMAT: &str = "btvbsv-draws-v1";

fn layout(d: &PosteriorDraws) -> Vec<(String, usize)> {
    let n = d.n_portfolios;
    let kp1 = d.n_factors + 1;
    let t = d.n_periods;
    vec![
        ("lambda".into(), kp1),
        ("tau2".into(), 1),
        ("pi_beta".into(), n * kp1),
        ("pi_v".into(), n),
        ("q2_beta".into(), n * kp1),
        ("q2_v".into(), n),
        ("beta".into(), n * kp1 * t),
        ("lnsig2".into(), n * t),
        ("k_beta".into(), n * kp1 * t),
        ("k_sigma".into(), n * t),
    ]
}

/// Write `manifest.json` and `draws.bin` under `dir`.
pub fn save_draws(dir: &Path, draws: &PosteriorDraws) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = DrawManifest {
        format: FORMAT.into(),
        n_portfolios: draws.n_portfolios,
        n_factors: draws.n_factors,
        n_periods: draws.n_periods,
        n_draws: draws.n_draws,
        seed: draws.seed,
        n_iter: draws.n_iter,
        burn: draws.burn,
        thin: draws.thin,
        ridge_events: draws.ridge_events,
        aborted: draws.aborted.clone(),
        record_layout: layout(draws),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(dir.join("manifest.json"), json)?;

    let mut w = BufWriter::new(fs::File::create(dir.join("draws.bin"))?);
    let n = draws.n_portfolios;
    let kp1 = draws.n_factors + 1;
    let t = draws.n_periods;
    for d in 0..draws.n_draws {
        let mut rec: Vec<f64> = Vec::new();
        rec.extend_from_slice(&draws.lambda[d * kp1..(d + 1) * kp1]);
        rec.push(draws.tau2[d]);
        rec.extend_from_slice(&draws.pi_beta[d * n * kp1..(d + 1) * n * kp1]);
        rec.extend_from_slice(&draws.pi_v[d * n..(d + 1) * n]);
        rec.extend_from_slice(&draws.q2_beta[d * n * kp1..(d + 1) * n * kp1]);
        rec.extend_from_slice(&draws.q2_v[d * n..(d + 1) * n]);
        rec.extend_from_slice(&draws.beta[d * n * kp1 * t..(d + 1) * n * kp1 * t]);
        rec.extend_from_slice(&draws.lnsig2[d * n * t..(d + 1) * n * t]);
        rec.extend(draws.k_beta[d * n * kp1 * t..(d + 1) * n * kp1 * t].iter().map(|v| *v as f64));
        rec.extend(draws.k_sigma[d * n * t..(d + 1) * n * t].iter().map(|v| *v as f64));
        for v in rec {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reload draws written by [`save_draws`].
pub fn load_draws(dir: &Path) -> Result<PosteriorDraws> {
    let json = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DrawManifest = serde_json::from_str(&json)
        .map_err(|e| Error::ParseError { line: 0, msg: format!("manifest: {e}") })?;
    if manifest.format != FORMAT {
        return Err(Error::ParseError {
            line: 0,
            msg: format!("unknown draw format {}", manifest.format),
        });
    }
    let n = manifest.n_portfolios;
    let kp1 = manifest.n_factors + 1;
    let t = manifest.n_periods;
    let rec_len: usize = manifest.record_layout.iter().map(|(_, l)| l).sum();

    let mut r = BufReader::new(fs::File::open(dir.join("draws.bin"))?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != manifest.n_draws * rec_len * 8 {
        return Err(Error::ParseError {
            line: 0,
            msg: format!(
                "draws.bin holds {} bytes, expected {}",
                bytes.len(),
                manifest.n_draws * rec_len * 8
            ),
        });
    }

    let mut draws = PosteriorDraws {
        n_portfolios: n,
        n_factors: manifest.n_factors,
        n_periods: t,
        n_draws: manifest.n_draws,
        lambda: Vec::new(),
        tau2: Vec::new(),
        pi_beta: Vec::new(),
        pi_v: Vec::new(),
        q2_beta: Vec::new(),
        q2_v: Vec::new(),
        beta: Vec::new(),
        lnsig2: Vec::new(),
        k_beta: Vec::new(),
        k_sigma: Vec::new(),
        seed: manifest.seed,
        n_iter: manifest.n_iter,
        burn: manifest.burn,
        thin: manifest.thin,
        ridge_events: manifest.ridge_events,
        aborted: manifest.aborted,
    };

    let mut offset = 0usize;
    let mut next = |len: usize| -> Vec<f64> {
        let out: Vec<f64> = bytes[offset..offset + len * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += len * 8;
        out
    };
    for _ in 0..manifest.n_draws {
        draws.lambda.extend(next(kp1));
        draws.tau2.extend(next(1));
        draws.pi_beta.extend(next(n * kp1));
        draws.pi_v.extend(next(n));
        draws.q2_beta.extend(next(n * kp1));
        draws.q2_v.extend(next(n));
        draws.beta.extend(next(n * kp1 * t));
        draws.lnsig2.extend(next(n * t));
        draws.k_beta.extend(next(n * kp1 * t).into_iter().map(|v| v as u8));
        draws.k_sigma.extend(next(n * t).into_iter().map(|v| v as u8));
    }
    Ok(draws)
}
