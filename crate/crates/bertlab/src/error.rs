use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] bertlab_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{path}: checksum mismatch, file is corrupt or truncated")]
    Checksum { path: PathBuf },
    #[error("{path}: unsupported checkpoint version {found} (this build reads {supported})")]
    Version { path: PathBuf, found: u32, supported: u32 },
    #[error("{path}: checkpoint does not fit the configuration: {detail}")]
    Layout { path: PathBuf, detail: String },
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
