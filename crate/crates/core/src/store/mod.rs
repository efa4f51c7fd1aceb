//! Append-only, one-file-per-session waveform storage.
//!
//! Each append is written and `fsync`ed before returning, so a caller that
//! acknowledges only after [`WaveformStore::append`] succeeds never acks a
//! batch that a crash could lose. Readers see only records whose bytes were
//! fully flushed.

mod segment;

pub use segment::{
    decode_header, encode_header, sample_ts_us, scan_bytes, Corruption, RecordFault, SegmentMeta,
    SegmentRecord, SegmentScan, FILE_EXTENSION, MAGIC, VERSION,
};

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;
use tracing::{debug, warn};

use crate::exec::{map_slice, Execution};
use crate::wire::{SampleBatch, StoredSample};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad segment header: {0}")]
    BadHeader(String),
    #[error("segment for session {0} already exists")]
    Exists(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} is closed")]
    Closed(String),
    #[error("seq {got} does not follow stored seq (expected {expected})")]
    SeqRegression { expected: u32, got: u32 },
    #[error("malformed batch: {0}")]
    MalformedBatch(String),
    #[error("session id {0:?} is not usable as a file name")]
    BadSessionId(String),
    #[error("segment {0} is unavailable: {1}")]
    Unavailable(String, String),
}

pub fn segment_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.{FILE_EXTENSION}"))
}

/// Validate an entire segment file without modifying it.
pub fn scan_file(path: &Path) -> Result<SegmentScan, StoreError> {
    let buf = fs::read(path)?;
    scan_bytes(&buf)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredSegment {
    pub last_seq: Option<u32>,
    pub records: usize,
    pub samples: usize,
    /// Bytes cut from the end of the file.
    pub truncated_bytes: u64,
    pub corruption: Option<Corruption>,
}

#[derive(Debug, Default)]
pub struct RecoveryReport {
    pub sessions: BTreeMap<String, RecoveredSegment>,
    /// File name to reason, for segments that could not be opened.
    pub unavailable: BTreeMap<String, String>,
}

impl RecoveryReport {
    /// Resume points: session id to last valid seq (None when empty).
    pub fn resume_points(&self) -> BTreeMap<String, Option<u32>> {
        self.sessions
            .iter()
            .map(|(k, v)| (k.clone(), v.last_seq))
            .collect()
    }
}

/// Scan every segment under `data_dir`, truncating damaged tails so each
/// file is again a valid prefix of what was written. Files are processed
/// independently (in parallel when enabled); one unreadable file does not
/// affect the others.
pub fn recover(data_dir: &Path) -> Result<RecoveryReport, StoreError> {
    recover_with(data_dir, Execution::default())
}

pub fn recover_with(data_dir: &Path, exec: Execution) -> Result<RecoveryReport, StoreError> {
    Ok(recover_segments(data_dir, exec)?.0)
}

type Recovered = (String, Result<(SegmentScan, u64), StoreError>);

fn recover_segments(
    data_dir: &Path,
    exec: Execution,
) -> Result<(RecoveryReport, Vec<SegmentScan>), StoreError> {
    let mut paths = Vec::new();
    match fs::read_dir(data_dir) {
        Ok(entries) => {
            for entry in entries {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == FILE_EXTENSION) && path.is_file() {
                    paths.push(path);
                }
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(e.into()),
    }
    paths.sort();

    let results: Vec<Recovered> = map_slice(exec, &paths, |path| {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        (name, recover_one(path))
    });

    let mut report = RecoveryReport::default();
    let mut scans = Vec::new();
    for (name, result) in results {
        match result {
            Ok((scan, truncated_bytes)) if scan.meta.session_id == name => {
                report.sessions.insert(
                    name,
                    RecoveredSegment {
                        last_seq: scan.last_seq(),
                        records: scan.records.len(),
                        samples: scan.sample_count(),
                        truncated_bytes,
                        corruption: scan.corruption.clone(),
                    },
                );
                scans.push(scan);
            }
            Ok((scan, _)) => {
                report.unavailable.insert(
                    name,
                    format!("header names session {}", scan.meta.session_id),
                );
            }
            Err(e) => {
                warn!(segment = %name, error = %e, "segment unavailable");
                report.unavailable.insert(name, e.to_string());
            }
        }
    }
    Ok((report, scans))
}

fn recover_one(path: &Path) -> Result<(SegmentScan, u64), StoreError> {
    let scan = scan_file(path)?;
    let mut truncated = 0;
    if let Some(c) = &scan.corruption {
        truncated = scan.total_len - scan.valid_len;
        warn!(path = %path.display(), corruption = %c, truncated, "truncating segment");
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(scan.valid_len)?;
        f.sync_all()?;
    }
    Ok((scan, truncated))
}

/// Samples from a range read plus any damage found while reading.
#[derive(Debug, Clone, Default)]
pub struct RangeRead {
    pub samples: Vec<StoredSample>,
    pub corruption: Option<Corruption>,
}

struct Writer {
    file: File,
    last_seq: Option<u32>,
    closed: bool,
}

struct Segment {
    path: PathBuf,
    meta: SegmentMeta,
    writer: Mutex<Writer>,
    /// Bytes known to be durable and well-formed.
    committed: AtomicU64,
}

impl Segment {
    fn snapshot(&self) -> Result<SegmentScan, StoreError> {
        let len = self.committed.load(Ordering::Acquire);
        let mut file = File::open(&self.path)?;
        let mut buf = Vec::with_capacity(len as usize);
        (&mut file).take(len).read_to_end(&mut buf)?;
        scan_bytes(&buf)
    }
}

/// All segments under one data directory.
pub struct WaveformStore {
    dir: PathBuf,
    segments: RwLock<HashMap<String, Arc<Segment>>>,
}

impl WaveformStore {
    /// Open `dir` (creating it if needed), recover every segment found and
    /// make them available for appends and reads.
    pub fn open(dir: impl Into<PathBuf>) -> Result<(Self, RecoveryReport), StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let (report, scans) = recover_segments(&dir, Execution::default())?;
        let mut segments = HashMap::new();
        for scan in scans {
            let path = segment_path(&dir, &scan.meta.session_id);
            let mut file = OpenOptions::new().write(true).open(&path)?;
            file.seek(SeekFrom::Start(scan.valid_len))?;
            let seg = Segment {
                path,
                writer: Mutex::new(Writer {
                    file,
                    last_seq: scan.last_seq(),
                    closed: false,
                }),
                committed: AtomicU64::new(scan.valid_len),
                meta: scan.meta,
            };
            segments.insert(seg.meta.session_id.clone(), Arc::new(seg));
        }
        Ok((
            Self {
                dir,
                segments: RwLock::new(segments),
            },
            report,
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, session_id: &str) -> PathBuf {
        segment_path(&self.dir, session_id)
    }

    fn get(&self, session_id: &str) -> Result<Arc<Segment>, StoreError> {
        self.segments
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(session_id.to_string()))
    }

    pub fn contains(&self, session_id: &str) -> bool {
        self.segments.read().unwrap().contains_key(session_id)
    }

    pub fn meta(&self, session_id: &str) -> Result<SegmentMeta, StoreError> {
        Ok(self.get(session_id)?.meta.clone())
    }

    /// Create an empty segment (header only) for a new session.
    pub fn create(&self, meta: SegmentMeta) -> Result<(), StoreError> {
        let id = meta.session_id.clone();
        if id.is_empty()
            || !id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(StoreError::BadSessionId(id));
        }
        let mut segments = self.segments.write().unwrap();
        if segments.contains_key(&id) {
            return Err(StoreError::Exists(id));
        }
        let path = self.path(&id);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                io::ErrorKind::AlreadyExists => StoreError::Exists(id.clone()),
                _ => e.into(),
            })?;
        let header = encode_header(&meta);
        file.write_all(&header)?;
        file.sync_all()?;
        sync_dir(&self.dir);
        debug!(session = %id, "segment created");
        segments.insert(
            id,
            Arc::new(Segment {
                path,
                meta,
                writer: Mutex::new(Writer {
                    file,
                    last_seq: None,
                    closed: false,
                }),
                committed: AtomicU64::new(header.len() as u64),
            }),
        );
        Ok(())
    }

    pub fn last_seq(&self, session_id: &str) -> Result<Option<u32>, StoreError> {
        Ok(self.get(session_id)?.writer.lock().unwrap().last_seq)
    }

    /// Durably append one batch. The seq must directly follow the last
    /// stored one (or be 0 for an empty segment). On failure the file is
    /// restored to its previous length.
    pub fn append(&self, session_id: &str, batch: &SampleBatch) -> Result<(), StoreError> {
        let record = SegmentRecord::from_batch(batch)?;
        let seg = self.get(session_id)?;
        let mut w = seg.writer.lock().unwrap();
        if w.closed {
            return Err(StoreError::Closed(session_id.to_string()));
        }
        let expected = w.last_seq.map_or(0, |s| s.wrapping_add(1));
        if record.seq != expected {
            return Err(StoreError::SeqRegression {
                expected,
                got: record.seq,
            });
        }
        let bytes = record.encode();
        let before = seg.committed.load(Ordering::Acquire);
        let written = w.file.write_all(&bytes).and_then(|_| w.file.sync_data());
        if let Err(e) = written {
            // leave the file exactly as it was
            let _ = w.file.set_len(before);
            let _ = w.file.seek(SeekFrom::Start(before));
            return Err(e.into());
        }
        w.last_seq = Some(record.seq);
        seg.committed
            .store(before + bytes.len() as u64, Ordering::Release);
        Ok(())
    }

    /// Refuse further appends. Idempotent.
    pub fn close(&self, session_id: &str) -> Result<(), StoreError> {
        let seg = self.get(session_id)?;
        let mut w = seg.writer.lock().unwrap();
        if !w.closed {
            w.file.sync_all()?;
            w.closed = true;
        }
        Ok(())
    }

    pub fn is_closed(&self, session_id: &str) -> Result<bool, StoreError> {
        Ok(self.get(session_id)?.writer.lock().unwrap().closed)
    }

    /// Everything durably stored for a session.
    pub fn scan(&self, session_id: &str) -> Result<SegmentScan, StoreError> {
        self.get(session_id)?.snapshot()
    }

    pub fn read_range(
        &self,
        session_id: &str,
        from_us: u64,
        to_us: u64,
    ) -> Result<RangeRead, StoreError> {
        let scan = self.scan(session_id)?;
        Ok(RangeRead {
            samples: scan.range(from_us, to_us),
            corruption: scan.corruption,
        })
    }

    /// Stored records with `seq >= from_seq`, in order.
    pub fn records_from(
        &self,
        session_id: &str,
        from_seq: u32,
    ) -> Result<Vec<SegmentRecord>, StoreError> {
        let scan = self.scan(session_id)?;
        Ok(scan
            .records
            .into_iter()
            .filter(|r| r.seq >= from_seq)
            .collect())
    }
}

fn sync_dir(dir: &Path) {
    // directory fsync makes the new entry durable; unsupported on some platforms
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}
