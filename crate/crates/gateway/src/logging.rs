//! Process-wide log capture, so the demo and tests can scan emitted log
//! lines for PHI.

use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use tracing_subscriber::fmt::MakeWriter;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Clone, Default)]
pub struct LogCapture {
    buf: Arc<Mutex<Vec<u8>>>,
    tee_stderr: bool,
}

impl LogCapture {
    pub fn snapshot(&self) -> Vec<u8> {
        self.buf.lock().expect("log buffer lock").clone()
    }

    pub fn len(&self) -> usize {
        self.buf.lock().expect("log buffer lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct CaptureWriter(LogCapture);

impl Write for CaptureWriter {
    fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
        self.0
            .buf
            .lock()
            .expect("log buffer lock")
            .extend_from_slice(data);
        if self.0.tee_stderr {
            std::io::stderr().write_all(data)?;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl<'a> MakeWriter<'a> for LogCapture {
    type Writer = CaptureWriter;

    fn make_writer(&'a self) -> Self::Writer {
        CaptureWriter(self.clone())
    }
}

static GLOBAL: OnceLock<Option<LogCapture>> = OnceLock::new();

/// Installs a global subscriber that records every line into a buffer,
/// optionally echoing to stderr. Returns `None` when another global
/// subscriber was installed first.
pub fn install_capture(tee_stderr: bool) -> Option<LogCapture> {
    GLOBAL
        .get_or_init(|| {
            let capture = LogCapture {
                buf: Arc::default(),
                tee_stderr,
            };
            let filter = EnvFilter::try_from_env("CAREBRIDGE_LOG")
                .unwrap_or_else(|_| EnvFilter::new("info"));
            tracing_subscriber::fmt()
                .with_env_filter(filter)
                .with_ansi(false)
                .with_writer(capture.clone())
                .try_init()
                .ok()
                .map(|_| capture)
        })
        .clone()
}
