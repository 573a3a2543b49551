use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("decode error at {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("unpaired files: {0}")]
    Unpaired(String),

    #[error("dimension mismatch for {id}: image {image_w}x{image_h}, mask {mask_w}x{mask_h}")]
    DimensionMismatch {
        id: String,
        image_w: u32,
        image_h: u32,
        mask_w: u32,
        mask_h: u32,
    },

    #[error("label value {value} outside class scheme (count {class_count}) at pixel index {index}")]
    OutOfScheme {
        value: u8,
        class_count: usize,
        index: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("patch bank is empty")]
    EmptyBank,

    #[error("transform collapsed the mask to zero pixels")]
    TransformCollapsed,
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 i/o, 4 data mismatch.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Io { .. } | Error::Decode { .. } | Error::Unpaired(_) => 3,
            Error::DimensionMismatch { .. } | Error::OutOfScheme { .. } => 4,
            Error::EmptyBank | Error::TransformCollapsed => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
