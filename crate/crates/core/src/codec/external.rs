//! Adapter for codecs that live in another program.
//!
//! Encoding writes one raw frame to the child's standard input and takes
//! everything the child writes to standard output as the payload. Decoding
//! runs the configured decoder the other way round: payload in, frame out.
//!
//! Frame layout (little-endian): `"MRF1"`, `u16 width`, `u16 height`,
//! `u8 bit_depth`, then `width * height` row-major samples in the source
//! type.
//!
//! Configuration comes from the environment:
//!
//! * `MEDROI_CODEC_<ID>`: encoder command line (program and arguments)
//! * `MEDROI_DECODE_<ID>`: decoder command line
//! * `MEDROI_TIMEOUT_<ID>`: per-frame timeout in seconds (default 60)
//! * `MEDROI_TEMPFILE_<ID>=1`: pass the input as a temporary file path
//!   appended to the arguments instead of on standard input
//!
//! The child also sees `MEDROI_QUALITY` and `MEDROI_DTYPE`.

use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::{Block, Codec, ModeSupport};
use crate::error::CodecError;
use crate::volume::{Dims, Dtype};

pub const FRAME_MAGIC: &[u8; 4] = b"MRF1";
const FRAME_HEADER_LEN: usize = 9;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

const ENV_ENCODER: &str = "MEDROI_CODEC_";
const ENV_DECODER: &str = "MEDROI_DECODE_";
const ENV_TIMEOUT: &str = "MEDROI_TIMEOUT_";
const ENV_TEMPFILE: &str = "MEDROI_TEMPFILE_";

/// One uncompressed 2D frame as exchanged with external programs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u16,
    pub height: u16,
    pub bit_depth: u8,
    pub samples: Vec<u8>,
}

impl Frame {
    pub fn from_block(block: Block<'_>) -> Result<Self, String> {
        let w = u16::try_from(block.dims.nx).map_err(|_| "frame width exceeds u16")?;
        let h = u16::try_from(block.dims.ny * block.dims.nz)
            .map_err(|_| "frame height exceeds u16")?;
        Ok(Self {
            width: w,
            height: h,
            bit_depth: block.dtype.bits(),
            samples: block.dtype.encode_le(block.samples),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.samples.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.bit_depth);
        out.extend_from_slice(&self.samples);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(format!("frame is {} bytes, shorter than its header", bytes.len()));
        }
        if &bytes[..4] != FRAME_MAGIC {
            return Err("frame magic is not MRF1".into());
        }
        let width = u16::from_le_bytes([bytes[4], bytes[5]]);
        let height = u16::from_le_bytes([bytes[6], bytes[7]]);
        let bit_depth = bytes[8];
        if !matches!(bit_depth, 8 | 16 | 32) {
            return Err(format!("unsupported bit depth {bit_depth}"));
        }
        let need = width as usize * height as usize * (bit_depth as usize / 8);
        let samples = &bytes[FRAME_HEADER_LEN..];
        if samples.len() != need {
            return Err(format!("frame holds {} sample bytes, expected {need}", samples.len()));
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            samples: samples.to_vec(),
        })
    }
}

/// Program plus arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalCommand {
    /// Splits a command line on whitespace.
    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace();
        let program = parts.next()?;
        Some(Self {
            program: PathBuf::from(program),
            args: parts.map(str::to_string).collect(),
        })
    }
}

/// Counting semaphore bounding concurrent child processes.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct ExternalCodec {
    id: String,
    encoder: ExternalCommand,
    decoder: Option<ExternalCommand>,
    pub timeout: Duration,
    pub use_temp_file: bool,
    slots: Arc<Slots>,
}

fn logical_cores() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn env_key(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect()
}

impl ExternalCodec {
    pub fn new(id: impl Into<String>, encoder: ExternalCommand) -> Self {
        Self {
            id: id.into(),
            encoder,
            decoder: None,
            timeout: DEFAULT_TIMEOUT,
            use_temp_file: false,
            slots: Arc::new(Slots::new(logical_cores())),
        }
    }

    pub fn with_decoder(mut self, decoder: ExternalCommand) -> Self {
        self.decoder = Some(decoder);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_children(mut self, n: usize) -> Self {
        self.slots = Arc::new(Slots::new(n));
        self
    }

    pub fn with_temp_file(mut self, on: bool) -> Self {
        self.use_temp_file = on;
        self
    }

    /// Configuration for `id` from the environment, if an encoder is set.
    pub fn from_env(id: &str) -> Option<Self> {
        let key = env_key(id);
        let encoder = ExternalCommand::parse(&std::env::var(format!("{ENV_ENCODER}{key}")).ok()?)?;
        let mut codec = Self::new(id, encoder);
        if let Some(dec) = std::env::var(format!("{ENV_DECODER}{key}"))
            .ok()
            .and_then(|s| ExternalCommand::parse(&s))
        {
            codec = codec.with_decoder(dec);
        }
        if let Some(secs) = std::env::var(format!("{ENV_TIMEOUT}{key}"))
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|s| *s > 0.0)
        {
            codec = codec.with_timeout(Duration::from_secs_f64(secs));
        }
        if let Ok(v) = std::env::var(format!("{ENV_TEMPFILE}{key}")) {
            codec = codec.with_temp_file(matches!(v.trim(), "1" | "true" | "yes"));
        }
        Some(codec)
    }

    /// Every codec with an encoder variable set; ids are the lowercased
    /// variable suffixes.
    pub fn all_from_env() -> Vec<Self> {
        let mut ids: Vec<String> = std::env::vars()
            .filter_map(|(k, _)| k.strip_prefix(ENV_ENCODER).map(|s| s.to_ascii_lowercase()))
            .filter(|s| !s.is_empty())
            .collect();
        ids.sort();
        ids.into_iter().filter_map(|id| Self::from_env(&id)).collect()
    }

    fn err(&self, msg: impl Into<String>) -> CodecError {
        CodecError::External {
            id: self.id.clone(),
            msg: msg.into(),
        }
    }

    /// Runs `cmd` with `input` and returns its standard output.
    fn run(&self, cmd: &ExternalCommand, input: &[u8], quality: i16, dtype: Dtype) -> Result<Vec<u8>, CodecError> {
        let _slot = self.slots.acquire();
        let temp = if self.use_temp_file {
            Some(TempInput::write(input).map_err(|e| self.err(format!("temp file: {e}")))?)
        } else {
            None
        };
        let mut command = Command::new(&cmd.program);
        command
            .args(&cmd.args)
            .env("MEDROI_QUALITY", quality.to_string())
            .env("MEDROI_DTYPE", dtype.name())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        match &temp {
            Some(t) => {
                command.arg(&t.path).stdin(Stdio::null());
            }
            None => {
                command.stdin(Stdio::piped());
            }
        }
        let mut child = command.spawn().map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                self.err(format!("not found: {}", cmd.program.display()))
            } else {
                self.err(format!("spawn {}: {e}", cmd.program.display()))
            }
        })?;

        let writer = child.stdin.take().map(|mut stdin| {
            let data = input.to_vec();
            thread::spawn(move || {
                // a child that exits early closes the pipe; its exit status
                // reports the failure
                let _ = stdin.write_all(&data);
            })
        });
        let stdout = read_in_background(child.stdout.take());
        let stderr = read_in_background(child.stderr.take());

        let status = wait_with_timeout(&mut child, self.timeout)
            .map_err(|e| self.err(format!("wait: {e}")))?;
        if let Some(w) = writer {
            let _ = w.join();
        }
        let out = stdout.join().unwrap_or_default();
        let err = stderr.join().unwrap_or_default();
        let Some(status) = status else {
            return Err(self.err(format!(
                "timed out after {:.1} s",
                self.timeout.as_secs_f64()
            )));
        };
        if !status.success() {
            return Err(self.err(format!(
                "exited with {status}: {}",
                String::from_utf8_lossy(&err).trim()
            )));
        }
        Ok(out)
    }
}

fn read_in_background<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        buf
    })
}

/// `Ok(None)` on timeout, after killing the child.
fn wait_with_timeout(child: &mut Child, timeout: Duration) -> io::Result<Option<ExitStatus>> {
    let start = Instant::now();
    let mut pause = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(None);
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(20));
    }
}

struct TempInput {
    path: PathBuf,
}

impl TempInput {
    fn write(data: &[u8]) -> io::Result<Self> {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = std::env::temp_dir().join(format!("medroi-{}-{n}.bin", std::process::id()));
        std::fs::write(&path, data)?;
        Ok(Self { path })
    }
}

impl Drop for TempInput {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Codec for ExternalCodec {
    fn id(&self) -> &str {
        &self.id
    }

    fn quality_range(&self) -> (i16, i16) {
        (i16::MIN, i16::MAX)
    }

    fn default_quality(&self) -> i16 {
        0
    }

    fn modes(&self) -> ModeSupport {
        ModeSupport::SLICE_ONLY
    }

    fn is_lossless(&self, _quality: i16) -> bool {
        false
    }

    fn encode(&self, quality: i16, block: Block<'_>) -> Result<Vec<u8>, CodecError> {
        let frame = Frame::from_block(block).map_err(|m| self.err(m))?;
        self.run(&self.encoder, &frame.to_bytes(), quality, block.dtype)
    }

    fn decode(
        &self,
        quality: i16,
        bytes: &[u8],
        dims: Dims,
        dtype: Dtype,
    ) -> Result<Vec<f32>, CodecError> {
        let decoder = self
            .decoder
            .as_ref()
            .ok_or_else(|| self.err(format!("no decoder configured (set {ENV_DECODER}{})", env_key(&self.id))))?;
        let out = self.run(decoder, bytes, quality, dtype)?;
        let frame = Frame::parse(&out).map_err(|m| CodecError::Decode {
            id: self.id.clone(),
            msg: m,
        })?;
        if frame.width as usize != dims.nx
            || frame.height as usize != dims.ny * dims.nz
            || frame.bit_depth != dtype.bits()
        {
            return Err(CodecError::Decode {
                id: self.id.clone(),
                msg: format!(
                    "decoder returned {}x{}@{} bits, expected {}x{}@{}",
                    frame.width,
                    frame.height,
                    frame.bit_depth,
                    dims.nx,
                    dims.ny * dims.nz,
                    dtype.bits()
                ),
            });
        }
        Ok(dtype.decode_le(&frame.samples))
    }
}
