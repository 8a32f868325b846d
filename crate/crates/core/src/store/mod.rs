//! Run-directory persistence.
//!
//! `draws.bin` is a versioned binary record of stored draws: an 8-byte magic,
//! format version, a fixed-size integrity block (stored count, CRC-64 of the
//! payload, truncation flag) patched on completion, a JSON run header, then
//! one fixed-layout block of little-endian f64 values per stored draw. The
//! value order per draw is: phi (column-major N x k), gamma (m x r), lambda
//! (n x r), one T x r path per time-varying row, w, then sigma (constant
//! variance runs) or logvol + omega2 (stochastic volatility runs), q (when
//! time variation is on), nu (Student-t runs), spectral radius, mean dof
//! acceptance.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gibbs::{DrawSink, PosteriorDraws, RunMeta, StoredDraw};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"FSVARDRW";
const VERSION: u32 = 1;
/// Sentinel count meaning "writer never finalized".
const COUNT_UNFINISHED: u64 = u64::MAX;
const FLAG_TRUNCATED: u32 = 1;

// ---- CRC-64 (ECMA-182 polynomial, table-driven) ----------------------------

fn crc64_table() -> [u64; 256] {
    const POLY: u64 = 0x42F0_E1EB_A9EA_3693;
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u64) << 56;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000_0000_0000_0000 != 0 {
                (crc << 1) ^ POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

struct Crc64 {
    table: [u64; 256],
    state: u64,
}

impl Crc64 {
    fn new() -> Crc64 {
        Crc64 {
            table: crc64_table(),
            state: 0,
        }
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            let idx = ((self.state >> 56) as u8 ^ b) as usize;
            self.state = (self.state << 8) ^ self.table[idx];
        }
    }

    fn value(&self) -> u64 {
        self.state
    }
}

// ---- layout ----------------------------------------------------------------

fn draw_value_count(meta: &RunMeta) -> usize {
    let nv = meta.m + meta.n;
    let mut count = nv * meta.k + meta.m * meta.r + meta.n * meta.r;
    count += meta.tv_rows.len() * meta.t_eff * meta.r;
    count += meta.m;
    if meta.features.stoch_vol {
        count += meta.t_eff * meta.n + meta.n;
    } else {
        count += meta.n;
    }
    if !meta.tv_rows.is_empty() {
        count += meta.tv_rows.len() * meta.r;
    }
    if meta.features.student_t {
        count += meta.n;
    }
    count + 2 // spectral radius, dof acceptance
}

fn push_matrix<F: Scalar>(buf: &mut Vec<f64>, m: &DMatrix<F>) {
    buf.extend(m.iter().map(|v| v.to_f64_lossy()));
}

fn push_vector<F: Scalar>(buf: &mut Vec<f64>, v: &DVector<F>) {
    buf.extend(v.iter().map(|v| v.to_f64_lossy()));
}

fn draw_to_values<F: Scalar>(meta: &RunMeta, draw: &StoredDraw<F>) -> Vec<f64> {
    let mut buf = Vec::with_capacity(draw_value_count(meta));
    push_matrix(&mut buf, &draw.phi);
    push_matrix(&mut buf, &draw.gamma);
    push_matrix(&mut buf, &draw.lambda);
    for path in &draw.lambda_paths {
        push_matrix(&mut buf, path);
    }
    push_vector(&mut buf, &draw.w_diag);
    if meta.features.stoch_vol {
        push_matrix(&mut buf, draw.logvol.as_ref().expect("logvol stored"));
        push_vector(&mut buf, draw.omega2.as_ref().expect("omega2 stored"));
    } else {
        push_vector(&mut buf, draw.sigma_diag.as_ref().expect("sigma stored"));
    }
    if !meta.tv_rows.is_empty() {
        push_vector(&mut buf, draw.q_diag.as_ref().expect("q stored"));
    }
    if meta.features.student_t {
        push_vector(&mut buf, draw.nu.as_ref().expect("nu stored"));
    }
    buf.push(draw.spectral_radius);
    buf.push(draw.dof_acceptance);
    debug_assert_eq!(buf.len(), draw_value_count(meta));
    buf
}

fn values_to_draw(meta: &RunMeta, values: &[f64]) -> StoredDraw<f64> {
    let nv = meta.m + meta.n;
    let mut pos = 0usize;
    let take_matrix = |rows: usize, cols: usize, pos: &mut usize| {
        let m = DMatrix::from_column_slice(rows, cols, &values[*pos..*pos + rows * cols]);
        *pos += rows * cols;
        m
    };
    let phi = take_matrix(nv, meta.k, &mut pos);
    let gamma = take_matrix(meta.m, meta.r, &mut pos);
    let lambda = take_matrix(meta.n, meta.r, &mut pos);
    let lambda_paths: Vec<DMatrix<f64>> = (0..meta.tv_rows.len())
        .map(|_| take_matrix(meta.t_eff, meta.r, &mut pos))
        .collect();
    let w_diag = DVector::from_column_slice(&values[pos..pos + meta.m]);
    pos += meta.m;
    let (sigma_diag, logvol, omega2) = if meta.features.stoch_vol {
        let lv = take_matrix(meta.t_eff, meta.n, &mut pos);
        let om = DVector::from_column_slice(&values[pos..pos + meta.n]);
        pos += meta.n;
        (None, Some(lv), Some(om))
    } else {
        let sd = DVector::from_column_slice(&values[pos..pos + meta.n]);
        pos += meta.n;
        (Some(sd), None, None)
    };
    let q_diag = if !meta.tv_rows.is_empty() {
        let q = DVector::from_column_slice(&values[pos..pos + meta.tv_rows.len() * meta.r]);
        pos += meta.tv_rows.len() * meta.r;
        Some(q)
    } else {
        None
    };
    let nu = if meta.features.student_t {
        let nu = DVector::from_column_slice(&values[pos..pos + meta.n]);
        pos += meta.n;
        Some(nu)
    } else {
        None
    };
    let spectral_radius = values[pos];
    let dof_acceptance = values[pos + 1];
    StoredDraw {
        phi,
        gamma,
        lambda,
        lambda_paths,
        w_diag,
        sigma_diag,
        logvol,
        omega2,
        q_diag,
        nu,
        spectral_radius,
        dof_acceptance,
    }
}

// ---- writer -----------------------------------------------------------------

/// Streaming writer for `draws.bin` plus `diagnostics.csv`; implements
/// `DrawSink` so the engine can flush draws as they are stored.
pub struct RunWriter<F: Scalar> {
    dir: PathBuf,
    draws: Option<BufWriter<File>>,
    diagnostics: Option<BufWriter<File>>,
    meta: Option<RunMeta>,
    crc: Crc64,
    count: u64,
    integrity_offset: u64,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> RunWriter<F> {
    pub fn create(dir: &Path) -> Result<RunWriter<F>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            draws: None,
            diagnostics: None,
            meta: None,
            crc: Crc64::new(),
            count: 0,
            integrity_offset: 0,
            _marker: std::marker::PhantomData,
        })
    }

    pub fn draws_path(&self) -> PathBuf {
        self.dir.join("draws.bin")
    }

    fn io_err(&self, e: std::io::Error) -> Error {
        Error::io(self.dir.display().to_string(), e)
    }

    fn finalize(&mut self, flags: u32) -> Result<()> {
        let Some(mut w) = self.draws.take() else {
            return Ok(());
        };
        w.flush().map_err(|e| self.io_err(e))?;
        let mut file = w.into_inner().map_err(|e| self.io_err(e.into_error()))?;
        file.seek(SeekFrom::Start(self.integrity_offset))
            .map_err(|e| self.io_err(e))?;
        file.write_all(&self.count.to_le_bytes())
            .map_err(|e| self.io_err(e))?;
        file.write_all(&self.crc.value().to_le_bytes())
            .map_err(|e| self.io_err(e))?;
        file.write_all(&flags.to_le_bytes())
            .map_err(|e| self.io_err(e))?;
        file.sync_all().map_err(|e| self.io_err(e))?;
        if let Some(mut d) = self.diagnostics.take() {
            d.flush().map_err(|e| self.io_err(e))?;
        }
        Ok(())
    }
}

impl<F: Scalar> DrawSink<F> for RunWriter<F> {
    fn start(&mut self, meta: &RunMeta) -> Result<()> {
        let header = serde_json::to_vec(meta).map_err(|e| Error::Json {
            path: self.draws_path().display().to_string(),
            source: e,
        })?;
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(self.draws_path())
            .map_err(|e| self.io_err(e))?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC).map_err(|e| self.io_err(e))?;
        w.write_all(&VERSION.to_le_bytes()).map_err(|e| self.io_err(e))?;
        self.integrity_offset = (MAGIC.len() + 4) as u64;
        w.write_all(&COUNT_UNFINISHED.to_le_bytes())
            .map_err(|e| self.io_err(e))?;
        w.write_all(&0u64.to_le_bytes()).map_err(|e| self.io_err(e))?; // crc
        w.write_all(&0u32.to_le_bytes()).map_err(|e| self.io_err(e))?; // flags
        w.write_all(&(header.len() as u32).to_le_bytes())
            .map_err(|e| self.io_err(e))?;
        w.write_all(&header).map_err(|e| self.io_err(e))?;
        self.draws = Some(w);

        let diag = File::create(self.dir.join("diagnostics.csv")).map_err(|e| self.io_err(e))?;
        let mut diag = BufWriter::new(diag);
        diag.write_all(b"draw,spectral_radius,dof_acceptance\n")
            .map_err(|e| self.io_err(e))?;
        self.diagnostics = Some(diag);
        self.meta = Some(meta.clone());
        Ok(())
    }

    fn record(&mut self, draw: &StoredDraw<F>) -> Result<()> {
        let meta = self.meta.as_ref().expect("start() called");
        let values = draw_to_values(meta, draw);
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in &values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.crc.update(&bytes);
        let path = self.dir.display().to_string();
        let w = self.draws.as_mut().expect("start() called");
        w.write_all(&bytes)
            .map_err(|e| Error::io(path.clone(), e))?;
        if let Some(d) = self.diagnostics.as_mut() {
            writeln!(
                d,
                "{},{:.12e},{:.6}",
                self.count, draw.spectral_radius, draw.dof_acceptance
            )
            .map_err(|e| Error::io(path, e))?;
        }
        self.count += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.finalize(0)
    }

    fn abort(&mut self, _context: &str) -> Result<()> {
        self.finalize(FLAG_TRUNCATED)
    }
}

// ---- reader -----------------------------------------------------------------

fn read_exact_or(path: &Path, r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::integrity(format!("{}: {what} missing or short", path.display())))
}

/// Read a complete draws file; truncated or corrupt files are integrity
/// errors.
pub fn read_draws(path: &Path) -> Result<PosteriorDraws<f64>> {
    let (draws, truncated) = read_draws_inner(path)?;
    if truncated {
        return Err(Error::integrity(format!(
            "{} is marked truncated (aborted run)",
            path.display()
        )));
    }
    Ok(draws)
}

/// Read a draws file, tolerating the truncation flag (the flag is returned).
pub fn read_draws_allow_truncated(path: &Path) -> Result<(PosteriorDraws<f64>, bool)> {
    read_draws_inner(path)
}

fn read_draws_inner(path: &Path) -> Result<(PosteriorDraws<f64>, bool)> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    read_exact_or(path, &mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::integrity(format!(
            "{} is not a draws file (bad magic)",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    read_exact_or(path, &mut r, &mut u32buf, "version")?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::integrity(format!(
            "unsupported draws format version {version}"
        )));
    }
    let mut u64buf = [0u8; 8];
    read_exact_or(path, &mut r, &mut u64buf, "count")?;
    let count = u64::from_le_bytes(u64buf);
    read_exact_or(path, &mut r, &mut u64buf, "checksum")?;
    let crc_expected = u64::from_le_bytes(u64buf);
    read_exact_or(path, &mut r, &mut u32buf, "flags")?;
    let flags = u32::from_le_bytes(u32buf);
    read_exact_or(path, &mut r, &mut u32buf, "header length")?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header = vec![0u8; header_len];
    read_exact_or(path, &mut r, &mut header, "header")?;
    let meta: RunMeta = serde_json::from_slice(&header).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    if count == COUNT_UNFINISHED {
        return Err(Error::integrity(format!(
            "{} was never finalized (writer died mid-run)",
            path.display()
        )));
    }

    let per_draw = draw_value_count(&meta);
    let mut crc = Crc64::new();
    let mut draws = Vec::with_capacity(count as usize);
    let mut bytes = vec![0u8; per_draw * 8];
    for i in 0..count {
        r.read_exact(&mut bytes).map_err(|_| {
            Error::integrity(format!(
                "{}: draw {i} of {count} missing (file truncated)",
                path.display()
            ))
        })?;
        crc.update(&bytes);
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        draws.push(values_to_draw(&meta, &values));
    }
    if crc.value() != crc_expected {
        return Err(Error::integrity(format!(
            "{}: checksum mismatch (stored {crc_expected:#018x}, computed {:#018x})",
            path.display(),
            crc.value()
        )));
    }
    Ok((PosteriorDraws { meta, draws }, flags & FLAG_TRUNCATED != 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::standardize;
    use crate::dgp::{simulate, TruthSpec};
    use crate::gibbs::{run_chain, run_chain_collect, Features, ModelSpec, Shrinkage};

    fn small_run(features: Features, dir: &Path) -> PosteriorDraws<f64> {
        let mut truth = TruthSpec::default_desk();
        truth.t_len = 80;
        truth.student_dof = Some(6.0);
        let (ds, _) = simulate::<f64>(&truth, 5).unwrap();
        let ds = standardize(&ds).unwrap();
        let spec = ModelSpec {
            lags: truth.lags,
            factors: truth.r,
            features,
            scheme: truth.scheme.clone(),
            draws: 30,
            burn: 10,
            thin: 2,
            seed: 5,
            shrinkage: Shrinkage::Horseshoe,
        };
        let mut writer = RunWriter::<f64>::create(dir).unwrap();
        run_chain(&ds, &spec, 2, &mut writer).unwrap();
        run_chain_collect(&ds, &spec, 2).unwrap()
    }

    #[test]
    fn round_trip_bitwise_all_features() {
        let tmp = tempfile::tempdir().unwrap();
        let features = Features {
            tv_loadings: true,
            stoch_vol: true,
            student_t: true,
        };
        let expected = small_run(features, tmp.path());
        let loaded = read_draws(&tmp.path().join("draws.bin")).unwrap();
        assert_eq!(loaded.meta, expected.meta);
        assert_eq!(loaded.len(), expected.len());
        for (a, b) in loaded.draws.iter().zip(expected.draws.iter()) {
            assert!(a
                .phi
                .iter()
                .zip(b.phi.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(a.lambda_paths.len(), b.lambda_paths.len());
            for (pa, pb) in a.lambda_paths.iter().zip(b.lambda_paths.iter()) {
                assert!(pa
                    .iter()
                    .zip(pb.iter())
                    .all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            assert_eq!(a.logvol.is_some(), b.logvol.is_some());
            assert_eq!(a.nu.as_ref().unwrap(), b.nu.as_ref().unwrap());
            assert_eq!(a.spectral_radius.to_bits(), b.spectral_radius.to_bits());
        }
        // diagnostics.csv exists with one row per stored draw
        let diag = std::fs::read_to_string(tmp.path().join("diagnostics.csv")).unwrap();
        assert_eq!(diag.lines().count(), 1 + expected.len());
    }

    #[test]
    fn corrupted_payload_detected() {
        let tmp = tempfile::tempdir().unwrap();
        small_run(Features::default(), tmp.path());
        let path = tmp.path().join("draws.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        let idx = bytes.len() - 9;
        bytes[idx] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        let err = read_draws(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn physically_truncated_file_detected() {
        let tmp = tempfile::tempdir().unwrap();
        small_run(Features::default(), tmp.path());
        let path = tmp.path().join("draws.bin");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        let err = read_draws(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn aborted_run_flagged() {
        let tmp = tempfile::tempdir().unwrap();
        let mut truth = TruthSpec::default_desk();
        truth.t_len = 60;
        let (ds, _) = simulate::<f64>(&truth, 6).unwrap();
        let ds = standardize(&ds).unwrap();
        let meta_spec = ModelSpec {
            lags: truth.lags,
            factors: truth.r,
            features: Features::default(),
            scheme: truth.scheme.clone(),
            draws: 10,
            burn: 0,
            thin: 1,
            seed: 6,
            shrinkage: Shrinkage::Horseshoe,
        };
        // Drive the writer manually to simulate an abort after two draws.
        let out = run_chain_collect(&ds, &meta_spec, 1).unwrap();
        let mut writer = RunWriter::<f64>::create(tmp.path()).unwrap();
        writer.start(&out.meta).unwrap();
        writer.record(&out.draws[0]).unwrap();
        writer.record(&out.draws[1]).unwrap();
        writer.abort("numerical failure in phi at iteration 2").unwrap();

        let path = tmp.path().join("draws.bin");
        assert!(read_draws(&path).is_err());
        let (partial, truncated) = read_draws_allow_truncated(&path).unwrap();
        assert!(truncated);
        assert_eq!(partial.len(), 2);
    }
}
