//! `SNKD1` k-space containers: magic, u32 little-endian header length,
//! canonical JSON header (sorted keys), then per frame, per coil, per shot
//! interleaved little-endian f32 `(re, im)` samples.

use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trajectories::{parse_trajectory, serialize_trajectory, PlanKind, SamplingPlan};
use crate::volume::Dims;

use super::signal::SignalModel;

pub const DATASET_MAGIC: &[u8; 5] = b"SNKD1";
pub const DATASET_VERSION: u32 = 1;

/// Fixed-width status values so the header can be patched in place.
pub const STATUS_WRITING: &str = "writing";
pub const STATUS_SUCCESS: &str = "success";
pub const STATUS_ABORTED: &str = "aborted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEmbed {
    pub kind: PlanKind,
    pub dynamic: bool,
    pub seed: u64,
    pub shots_per_frame: usize,
    /// Hex SHA-256 of the decoded trajectory bytes.
    pub sha256: String,
    /// Base64 `SNKT1` trajectory file.
    pub snkt1: String,
}

impl TrajectoryEmbed {
    pub fn from_plan(plan: &SamplingPlan) -> Result<Self> {
        let bytes = serialize_trajectory(plan)?;
        Ok(Self {
            kind: plan.kind,
            dynamic: plan.dynamic,
            seed: plan.seed,
            shots_per_frame: plan.shots_per_frame,
            sha256: sha256_hex(&bytes),
            snkt1: B64.encode(&bytes),
        })
    }

    pub fn to_plan(&self, dims: Dims) -> Result<SamplingPlan> {
        let bad = |reason: String| Error::Format { kind: "SNKD1", reason };
        let bytes = B64
            .decode(&self.snkt1)
            .map_err(|e| bad(format!("trajectory payload: {e}")))?;
        if sha256_hex(&bytes) != self.sha256 {
            return Err(bad("trajectory checksum mismatch".into()));
        }
        let mut plan = parse_trajectory(&bytes, dims)?;
        plan.shots_per_frame = self.shots_per_frame;
        plan.kind = self.kind;
        plan.dynamic = self.dynamic;
        plan.seed = self.seed;
        plan.validate()?;
        Ok(plan)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub dims: Dims,
    /// Millimetres.
    pub voxel_size: [f64; 3],
    pub n_coils: usize,
    pub n_frames: usize,
    pub shots_per_frame: usize,
    pub samples_per_shot: usize,
    /// Seconds.
    pub tr_shot: f64,
    pub te: f64,
    pub model: SignalModel,
    pub seed: u64,
    /// `None` for noise-free data.
    pub snr: Option<f64>,
    /// Phantom energy used to scale the noise.
    pub energy: f64,
    pub trajectory: TrajectoryEmbed,
    pub status: String,
}

impl DatasetHeader {
    pub fn plan(&self) -> Result<SamplingPlan> {
        self.trajectory.to_plan(self.dims)
    }

    pub fn tr_vol(&self) -> f64 {
        self.shots_per_frame as f64 * self.tr_shot
    }

    pub fn is_complete(&self) -> bool {
        self.status == STATUS_SUCCESS
    }

    fn frame_bytes(&self) -> usize {
        self.n_coils * self.shots_per_frame * self.samples_per_shot * 8
    }

    /// Canonical JSON text: keys sorted, no whitespace.
    pub fn to_canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string(&value)?)
    }
}

/// `[coil][shot][sample]` data of one frame.
pub type FrameSamples = Vec<Vec<Vec<Complex<f32>>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceDataset {
    pub header: DatasetHeader,
    pub frames: Vec<FrameSamples>,
}

/// Destination for streamed acquisition output.
pub trait DatasetSink {
    fn begin(&mut self, header: &DatasetHeader) -> Result<()>;
    fn frame(&mut self, index: usize, data: &FrameSamples) -> Result<()>;
    /// Called once, with `ok = false` after a failure.
    fn finish(&mut self, ok: bool) -> Result<()>;
}

/// Keeps the whole dataset in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub dataset: Option<KSpaceDataset>,
}

impl DatasetSink for MemorySink {
    fn begin(&mut self, header: &DatasetHeader) -> Result<()> {
        self.dataset = Some(KSpaceDataset {
            header: header.clone(),
            frames: Vec::new(),
        });
        Ok(())
    }

    fn frame(&mut self, _index: usize, data: &FrameSamples) -> Result<()> {
        self.dataset.as_mut().expect("begin called").frames.push(data.clone());
        Ok(())
    }

    fn finish(&mut self, ok: bool) -> Result<()> {
        if let Some(d) = &mut self.dataset {
            d.header.status = if ok { STATUS_SUCCESS } else { STATUS_ABORTED }.into();
        }
        Ok(())
    }
}

/// Streams a dataset to any seekable writer, patching the status at the end.
pub struct DatasetWriter<W: Write + Seek> {
    inner: W,
    status_offset: u64,
    shape: (usize, usize, usize),
}

impl<W: Write + Seek> DatasetWriter<W> {
    pub fn new(mut inner: W, header: &DatasetHeader) -> Result<Self> {
        let mut h = header.clone();
        h.status = STATUS_WRITING.into();
        let json = h.to_canonical_json()?;
        let needle = format!("\"status\":\"{STATUS_WRITING}\"");
        let pos = json.find(&needle).expect("status key present") + needle.len() - STATUS_WRITING.len() - 1;
        let start = inner.stream_position()?;
        inner.write_all(DATASET_MAGIC)?;
        inner.write_all(&(json.len() as u32).to_le_bytes())?;
        inner.write_all(json.as_bytes())?;
        Ok(Self {
            inner,
            status_offset: start + 9 + pos as u64,
            shape: (h.n_coils, h.shots_per_frame, h.samples_per_shot),
        })
    }

    pub fn write_frame(&mut self, data: &FrameSamples) -> Result<()> {
        let (l, s, n) = self.shape;
        if data.len() != l || data.iter().any(|c| c.len() != s || c.iter().any(|v| v.len() != n)) {
            return Err(Error::Shape(format!("frame must be {l} coils x {s} shots x {n} samples")));
        }
        let mut buf = Vec::with_capacity(l * s * n * 8);
        for v in data.iter().flatten().flatten() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        Ok(())
    }

    pub fn finish(mut self, ok: bool) -> Result<W> {
        let end = self.inner.stream_position()?;
        self.inner.seek(SeekFrom::Start(self.status_offset))?;
        let status = if ok { STATUS_SUCCESS } else { STATUS_ABORTED };
        self.inner.write_all(status.as_bytes())?;
        self.inner.seek(SeekFrom::Start(end))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// File-backed sink.
pub struct FileSink {
    writer: Option<DatasetWriter<BufWriter<File>>>,
    file: Option<BufWriter<File>>,
}

impl FileSink {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            writer: None,
            file: Some(BufWriter::new(File::create(path)?)),
        })
    }
}

impl DatasetSink for FileSink {
    fn begin(&mut self, header: &DatasetHeader) -> Result<()> {
        let file = self.file.take().expect("sink started once");
        self.writer = Some(DatasetWriter::new(file, header)?);
        Ok(())
    }

    fn frame(&mut self, _index: usize, data: &FrameSamples) -> Result<()> {
        self.writer.as_mut().expect("begin called").write_frame(data)
    }

    fn finish(&mut self, ok: bool) -> Result<()> {
        if let Some(w) = self.writer.take() {
            w.finish(ok)?;
        }
        Ok(())
    }
}

pub fn write_dataset(path: &Path, ds: &KSpaceDataset) -> Result<()> {
    let mut w = DatasetWriter::new(BufWriter::new(File::create(path)?), &ds.header)?;
    for f in &ds.frames {
        w.write_frame(f)?;
    }
    w.finish(ds.header.is_complete())?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<KSpaceDataset> {
    parse_dataset(&std::fs::read(path)?)
}

/// Parses a container. Aborted files yield only their complete frames.
pub fn parse_dataset(bytes: &[u8]) -> Result<KSpaceDataset> {
    let bad = |reason: String| Error::Format { kind: "SNKD1", reason };
    if bytes.len() < 9 || &bytes[..5] != DATASET_MAGIC {
        return Err(bad("missing magic or truncated header".into()));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = bytes
        .get(9..9 + len)
        .ok_or_else(|| bad("header length exceeds file".into()))?;
    let header: DatasetHeader = serde_json::from_slice(body)?;
    if header.version != DATASET_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let payload = &bytes[9 + len..];
    let fb = header.frame_bytes();
    let complete = if fb == 0 { 0 } else { payload.len() / fb };
    if header.is_complete() && (complete != header.n_frames || payload.len() % fb.max(1) != 0) {
        return Err(bad(format!(
            "expected {} frames of {fb} bytes, payload holds {} bytes",
            header.n_frames,
            payload.len()
        )));
    }
    let (l, s, n) = (header.n_coils, header.shots_per_frame, header.samples_per_shot);
    let frames = payload
        .chunks_exact(fb.max(1))
        .take(complete.min(header.n_frames))
        .map(|chunk| {
            let mut vals = chunk.chunks_exact(8).map(|c| {
                Complex::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..].try_into().unwrap()),
                )
            });
            (0..l)
                .map(|_| (0..s).map(|_| vals.by_ref().take(n).collect()).collect())
                .collect()
        })
        .collect();
    Ok(KSpaceDataset { header, frames })
}
