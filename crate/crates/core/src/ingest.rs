//! Reading captured CSI into streams: the NIC capture log, the canonical
//! text format, rate-code filtering, time-grid regularization and
//! manifest-driven trial slicing. Layouts are pinned in `docs/FORMAT.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivityLabel, CsiFrame, CsiStream, Dims};
use crate::num::Real;

pub const BEAMFORMING_CODE: u8 = 0xBB;
pub const CAPTURE_SUBCARRIERS: usize = 30;
const BFEE_HEADER_LEN: usize = 20;
/// NIC timestamp counter rate.
pub const TIMESTAMP_TICK_HZ: f64 = 1e6;

/// One framed record of a capture log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub code: u8,
    pub payload: Vec<u8>,
}

/// Bytes of bit-packed CSI for the given antenna counts.
pub fn csi_payload_len(n_rx: usize, n_tx: usize) -> usize {
    (CAPTURE_SUBCARRIERS * (n_rx * n_tx * 8 * 2 + 3) + 7) / 8
}

/// Splits a capture log into records without interpreting payloads.
pub fn split_records(bytes: &[u8]) -> Result<Vec<CaptureRecord>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < 3 {
            return Err(Error::TruncatedRecord {
                offset: pos,
                declared: 3,
                available: bytes.len() - pos,
            });
        }
        let declared = u16::from_be_bytes([bytes[pos], bytes[pos + 1]]) as usize;
        let available = bytes.len() - pos - 2;
        if declared == 0 || declared > available {
            return Err(Error::TruncatedRecord {
                offset: pos,
                declared,
                available,
            });
        }
        let code = bytes[pos + 2];
        let payload = bytes[pos + 3..pos + 2 + declared].to_vec();
        out.push(CaptureRecord { code, payload });
        pos += 2 + declared;
    }
    Ok(out)
}

/// A decoded beamforming measurement, CSI in physical antenna order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BfeeRecord {
    pub timestamp_low: u32,
    pub bfee_count: u16,
    pub n_rx: u8,
    pub n_tx: u8,
    pub rssi: [u8; 3],
    pub noise: i8,
    pub agc: u8,
    pub antenna_sel: u8,
    pub rate: u16,
    /// `[rx][tx][subcarrier]` flattened rx-major, 30 subcarriers.
    pub csi: Vec<Complex<i8>>,
}

impl BfeeRecord {
    fn dims(&self) -> Dims {
        Dims::new(self.n_rx as usize, self.n_tx as usize, CAPTURE_SUBCARRIERS)
    }

    /// Slot-to-physical antenna map, or `None` when the selector is not a
    /// permutation of the first `n_rx` antennas.
    pub fn permutation(&self) -> Option<Vec<usize>> {
        let n = self.n_rx as usize;
        let perm: Vec<usize> = (0..n)
            .map(|k| ((self.antenna_sel >> (2 * k)) & 0x3) as usize)
            .collect();
        let mut seen = [false; 4];
        for &p in &perm {
            if p >= n || seen[p] {
                return None;
            }
            seen[p] = true;
        }
        Some(perm)
    }

    /// Decodes a `0xBB` payload. `offset` is only used for error reporting.
    pub fn decode(payload: &[u8], offset: usize) -> Result<Self> {
        if payload.len() < BFEE_HEADER_LEN {
            return Err(Error::TruncatedRecord {
                offset,
                declared: BFEE_HEADER_LEN,
                available: payload.len(),
            });
        }
        let n_rx = payload[8];
        let n_tx = payload[9];
        let (nr, nt) = (n_rx as usize, n_tx as usize);
        if nr == 0 || nt == 0 || nr * nt > 9 {
            return Err(Error::UnsupportedDimensions { n_rx: nr, n_tx: nt });
        }
        let declared = u16::from_le_bytes([payload[16], payload[17]]) as usize;
        let computed = csi_payload_len(nr, nt);
        if declared != computed {
            return Err(Error::PayloadSizeMismatch {
                offset,
                declared,
                computed,
            });
        }
        if payload.len() < BFEE_HEADER_LEN + declared {
            return Err(Error::PayloadSizeMismatch {
                offset,
                declared,
                computed: payload.len() - BFEE_HEADER_LEN,
            });
        }
        let mut rec = BfeeRecord {
            timestamp_low: u32::from_le_bytes(payload[0..4].try_into().expect("4 bytes")),
            bfee_count: u16::from_le_bytes([payload[4], payload[5]]),
            n_rx,
            n_tx,
            rssi: [payload[10], payload[11], payload[12]],
            noise: payload[13] as i8,
            agc: payload[14],
            antenna_sel: payload[15],
            rate: u16::from_le_bytes([payload[18], payload[19]]),
            csi: vec![Complex::new(0, 0); nr * nt * CAPTURE_SUBCARRIERS],
        };
        let csi = &payload[BFEE_HEADER_LEN..BFEE_HEADER_LEN + declared];
        let byte = |i: usize| csi.get(i).copied().unwrap_or(0) as u16;
        let read8 = |bit: usize| -> i8 {
            let (b, rem) = (bit / 8, bit % 8);
            (((byte(b) >> rem) | (byte(b + 1) << (8 - rem))) & 0xFF) as u8 as i8
        };
        let perm = rec.permutation();
        let dims = rec.dims();
        let mut bit = 0;
        for i in 0..CAPTURE_SUBCARRIERS {
            bit += 3;
            for j in 0..nr * nt {
                let (tx, slot) = (j % nt, j / nt);
                let rx = perm.as_ref().map_or(slot, |p| p[slot]);
                rec.csi[dims.column(rx, tx, i)] = Complex::new(read8(bit), read8(bit + 8));
                bit += 16;
            }
        }
        Ok(rec)
    }

    /// Inverse of [`BfeeRecord::decode`].
    pub fn encode(&self) -> Vec<u8> {
        let (nr, nt) = (self.n_rx as usize, self.n_tx as usize);
        let len = csi_payload_len(nr, nt);
        let mut out = Vec::with_capacity(BFEE_HEADER_LEN + len);
        out.extend_from_slice(&self.timestamp_low.to_le_bytes());
        out.extend_from_slice(&self.bfee_count.to_le_bytes());
        out.extend_from_slice(&[0, 0, self.n_rx, self.n_tx]);
        out.extend_from_slice(&self.rssi);
        out.extend_from_slice(&[self.noise as u8, self.agc, self.antenna_sel]);
        out.extend_from_slice(&(len as u16).to_le_bytes());
        out.extend_from_slice(&self.rate.to_le_bytes());
        let mut csi = vec![0u8; len];
        let mut put8 = |bit: usize, v: i8| {
            let v = v as u8 as u16;
            let (b, rem) = (bit / 8, bit % 8);
            let spread = v << rem;
            csi[b] |= (spread & 0xFF) as u8;
            if rem > 0 {
                csi[b + 1] |= (spread >> 8) as u8;
            }
        };
        let perm = self.permutation();
        let dims = self.dims();
        let mut bit = 0;
        for i in 0..CAPTURE_SUBCARRIERS {
            bit += 3;
            for j in 0..nr * nt {
                let (tx, slot) = (j % nt, j / nt);
                let rx = perm.as_ref().map_or(slot, |p| p[slot]);
                let g = self.csi[dims.column(rx, tx, i)];
                put8(bit, g.re);
                put8(bit + 8, g.im);
                bit += 16;
            }
        }
        out.extend_from_slice(&csi);
        out
    }

    pub fn to_frame<T: Real>(&self, timestamp: T) -> Result<CsiFrame<T>> {
        let flat = self
            .csi
            .iter()
            .map(|g| Complex::new(T::lit(g.re as f64), T::lit(g.im as f64)))
            .collect();
        let rssi = self.rssi[..(self.n_rx as usize).min(3)]
            .iter()
            .map(|&r| T::lit(r as f64))
            .collect();
        Ok(CsiFrame::from_flat(timestamp, self.dims(), flat)?
            .with_rssi(rssi)
            .with_rate_code(self.rate as u32))
    }
}

/// Frames a list of records into a capture log.
pub fn write_capture_file(records: &[CaptureRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        let len = (r.payload.len() + 1) as u16;
        out.extend_from_slice(&len.to_be_bytes());
        out.push(r.code);
        out.extend_from_slice(&r.payload);
    }
    out
}

/// Decodes every beamforming record of a capture log into frames, in file order.
pub fn parse_capture_file<T: Real>(bytes: &[u8]) -> Result<Vec<CsiFrame<T>>> {
    let mut frames = Vec::new();
    let mut pos = 0;
    let mut wraps: u64 = 0;
    let mut last_low: Option<u32> = None;
    for rec in split_records(bytes)? {
        let offset = pos;
        pos += 3 + rec.payload.len();
        if rec.code != BEAMFORMING_CODE {
            continue;
        }
        let bfee = BfeeRecord::decode(&rec.payload, offset)?;
        if let Some(prev) = last_low {
            if bfee.timestamp_low < prev {
                wraps += 1;
            }
        }
        last_low = Some(bfee.timestamp_low);
        let ticks = (wraps << 32) + bfee.timestamp_low as u64;
        frames.push(bfee.to_frame(T::lit(ticks as f64 / TIMESTAMP_TICK_HZ))?);
    }
    Ok(frames)
}

/// Builds a stream from captured frames, estimating the nominal rate from the
/// median inter-frame gap. Frames with repeated timestamps are dropped.
pub fn stream_from_frames<T: Real>(frames: Vec<CsiFrame<T>>, center_frequency: T) -> Result<CsiStream<T>> {
    let mut kept: Vec<CsiFrame<T>> = Vec::with_capacity(frames.len());
    for f in frames {
        match kept.last() {
            Some(prev) if !(f.timestamp > prev.timestamp) => continue,
            _ => kept.push(f),
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            got: kept.len(),
        });
    }
    let mut gaps: Vec<T> = kept.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).expect("finite timestamps"));
    let rate = T::one() / gaps[gaps.len() / 2];
    CsiStream::new(kept, rate, center_frequency)
}

// canonical CSV

fn header_value<'a>(pairs: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    pairs
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::HeaderMissing(format!("key `{key}`")))
}

fn parse_num<V: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<V> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} {s:?}"),
    })
}

/// Parses the canonical text format into a stream.
pub fn parse_canonical_csv<T: Real>(text: &str) -> Result<CsiStream<T>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::HeaderMissing("empty file".into()))?;
    let header = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::HeaderMissing("first line must start with `#`".into()))?;
    let pairs: BTreeMap<String, String> = header
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let sample_rate: T = parse_num(header_value(&pairs, "sample_rate")?, 1, "sample_rate")?;
    let center: T = parse_num(header_value(&pairs, "center_freq")?, 1, "center_freq")?;
    let dims = Dims::new(
        parse_num(header_value(&pairs, "mr")?, 1, "mr")?,
        parse_num(header_value(&pairs, "mt")?, 1, "mt")?,
        parse_num(header_value(&pairs, "s")?, 1, "s")?,
    );
    if dims.columns() == 0 {
        return Err(Error::HeaderMissing("antenna and subcarrier counts must be positive".into()));
    }
    let expected = 1 + 2 * dims.columns();
    let mut frames: Vec<CsiFrame<T>> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0].trim() == "t" {
            continue;
        }
        if fields.len() != expected {
            return Err(Error::RowArityMismatch {
                line: lineno,
                expected,
                found: fields.len(),
            });
        }
        let t: T = parse_num(fields[0], lineno, "timestamp")?;
        if let Some(prev) = frames.last() {
            if !(t > prev.timestamp) {
                return Err(Error::NonMonotoneTimestamps { line: lineno });
            }
        }
        let mut flat = Vec::with_capacity(dims.columns());
        for pair in fields[1..].chunks(2) {
            flat.push(Complex::new(
                parse_num(pair[0], lineno, "real part")?,
                parse_num(pair[1], lineno, "imaginary part")?,
            ));
        }
        frames.push(CsiFrame::from_flat(t, dims, flat).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?);
    }
    let mut stream = CsiStream::new(frames, sample_rate, center)?;
    if let Some(v) = pairs.get("spacing") {
        stream.subcarrier_spacing = parse_num(v, 1, "spacing")?;
    }
    if let Some(v) = pairs.get("label") {
        stream.label = Some(v.parse()?);
    }
    if let Some(v) = pairs.get("subject") {
        stream.subject_id = Some(parse_num(v, 1, "subject")?);
    }
    if let Some(v) = pairs.get("trial") {
        stream.trial_id = Some(parse_num(v, 1, "trial")?);
    }
    Ok(stream)
}

/// Writes a stream in the canonical text format.
pub fn write_canonical_csv<T: Real>(stream: &CsiStream<T>) -> Result<String> {
    let dims = stream.dims().ok_or(Error::EmptyInput("stream"))?;
    let mut out = String::new();
    write!(
        out,
        "# sample_rate={} center_freq={} mr={} mt={} s={} spacing={}",
        stream.sample_rate, stream.center_frequency, dims.rx, dims.tx, dims.subcarriers, stream.subcarrier_spacing
    )
    .expect("write to string");
    if let Some(l) = stream.label {
        write!(out, " label={l}").expect("write to string");
    }
    if let Some(s) = stream.subject_id {
        write!(out, " subject={s}").expect("write to string");
    }
    if let Some(t) = stream.trial_id {
        write!(out, " trial={t}").expect("write to string");
    }
    out.push_str("\nt");
    for c in 0..dims.columns() {
        write!(out, ",re_{c},im_{c}").expect("write to string");
    }
    out.push('\n');
    for f in stream.frames() {
        write!(out, "{}", f.timestamp).expect("write to string");
        for g in f.flat() {
            write!(out, ",{},{}", g.re, g.im).expect("write to string");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Keeps frames whose rate code is in `keep`; an empty set keeps the modal
/// code (smallest code on ties).
pub fn rate_filter<T: Real>(frames: Vec<CsiFrame<T>>, keep: &[u32]) -> Vec<CsiFrame<T>> {
    if keep.is_empty() {
        let mut counts: BTreeMap<Option<u32>, usize> = BTreeMap::new();
        for f in &frames {
            *counts.entry(f.rate_code).or_default() += 1;
        }
        let Some(modal) = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&code, _)| code)
        else {
            return frames;
        };
        frames.into_iter().filter(|f| f.rate_code == modal).collect()
    } else {
        frames
            .into_iter()
            .filter(|f| f.rate_code.is_some_and(|c| keep.contains(&c)))
            .collect()
    }
}

/// Gaps longer than this many output periods are filled by holding.
pub const MAX_INTERPOLATED_GAP_PERIODS: f64 = 5.0;

/// Resamples onto the grid `t_k = t_0 + k / target_rate` by nearest neighbour
/// in time. Grid points inside a source gap longer than five output periods
/// hold the frame before the gap and are listed in `held_gaps`.
pub fn regularize<T: Real>(stream: &CsiStream<T>, target_rate: T) -> Result<CsiStream<T>> {
    let frames = stream.frames();
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            got: frames.len(),
        });
    }
    if !(target_rate > T::zero()) {
        return Err(Error::InvalidConfig(format!("target rate must be positive, got {target_rate}")));
    }
    let t0 = frames[0].timestamp;
    let span = frames[frames.len() - 1].timestamp - t0;
    let n = (span * target_rate + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
    let max_gap = T::lit(MAX_INTERPOLATED_GAP_PERIODS) / target_rate;
    let mut out = Vec::with_capacity(n);
    let mut held = Vec::new();
    let mut cursor = 0usize;
    for k in 0..n {
        let t = t0 + T::from_usize_lossy(k) / target_rate;
        while cursor + 1 < frames.len() && frames[cursor + 1].timestamp <= t {
            cursor += 1;
        }
        let prev = &frames[cursor];
        let chosen = match frames.get(cursor + 1) {
            Some(next) => {
                if next.timestamp - prev.timestamp > max_gap && t > prev.timestamp {
                    held.push(k);
                    prev
                } else if next.timestamp - t < t - prev.timestamp {
                    next
                } else {
                    prev
                }
            }
            None => prev,
        };
        out.push(chosen.retimed(t));
    }
    let mut result = stream.with_frames(out)?;
    result.sample_rate = target_rate;
    result.held_gaps = runs(&held);
    Ok(result)
}

fn runs(indices: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some(r) if r.end == i => r.end += 1,
            _ => out.push(i..i + 1),
        }
    }
    out
}

/// One labeled window of a capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub label: ActivityLabel,
    pub subject: u32,
    pub trial: u32,
    pub start_s: f64,
    pub stop_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    file: String,
    label: String,
    subject: u32,
    trial: u32,
    start_s: f64,
    stop_s: f64,
}

impl DatasetManifest {
    /// Parses manifest CSV. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (k, row) in reader.deserialize::<RawEntry>().enumerate() {
            let row = row?;
            let line = k + 2;
            if !(row.start_s < row.stop_s) {
                return Err(Error::Parse {
                    line,
                    message: format!("start {} must be before stop {}", row.start_s, row.stop_s),
                });
            }
            let label = row.label.parse().map_err(|_| Error::Parse {
                line,
                message: format!("unknown label {:?}", row.label),
            })?;
            entries.push(ManifestEntry {
                file: base_dir.join(&row.file),
                label,
                subject: row.subject,
                trial: row.trial,
                start_s: row.start_s,
                stop_s: row.stop_s,
            });
        }
        Ok(DatasetManifest { entries })
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = Self::parse(&text, path.parent().unwrap_or(Path::new(".")))?;
        for e in &m.entries {
            if !e.file.exists() {
                return Err(Error::io(
                    &e.file,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "manifest file missing"),
                ));
            }
        }
        Ok(m)
    }

    pub fn entries_for<'a>(&'a self, file: &'a Path) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries.iter().filter(move |e| e.file == file)
    }
}

/// Labeled trials, one stream each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset<T> {
    pub trials: Vec<CsiStream<T>>,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(trials: Vec<CsiStream<T>>) -> Self {
        LabeledDataset { trials }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Distinct labels present, in label order.
    pub fn labels(&self) -> Vec<ActivityLabel> {
        let mut v: Vec<_> = self.trials.iter().filter_map(|t| t.label).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Cuts one labeled trial per entry. Windows are inclusive and may overlap.
pub fn slice_by_manifest<T: Real>(stream: &CsiStream<T>, entries: &[ManifestEntry]) -> Result<LabeledDataset<T>> {
    let frames = stream.frames();
    let (first, last) = match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => (a.timestamp.as_f64(), b.timestamp.as_f64()),
        _ => return Err(Error::EmptyInput("stream")),
    };
    let tol = 1e-9 + 0.5 / stream.sample_rate.as_f64();
    let mut trials = Vec::with_capacity(entries.len());
    for e in entries {
        let out_of_range = Error::WindowOutOfRange {
            start: e.start_s,
            stop: e.stop_s,
            first,
            last,
        };
        if e.start_s < first - tol || e.stop_s > last + tol || !(e.start_s < e.stop_s) {
            return Err(out_of_range);
        }
        let window: Vec<CsiFrame<T>> = frames
            .iter()
            .filter(|f| {
                let t = f.timestamp.as_f64();
                t >= e.start_s - 1e-9 && t <= e.stop_s + 1e-9
            })
            .cloned()
            .collect();
        if window.is_empty() {
            return Err(out_of_range);
        }
        let trial = stream
            .with_frames(window)?
            .with_label(e.label)
            .with_ids(e.subject, e.trial);
        trials.push(trial);
    }
    Ok(LabeledDataset { trials })
}
