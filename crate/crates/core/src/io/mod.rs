//! File formats: CSV panels and bundles, synthetic data, and result documents.

pub mod results;
pub mod synth;
pub mod tables;

use std::fs::File;
use std::path::Path;

use crate::error::Result;

pub use results::{
    load_json, read_header, read_matrix_csv, save_backtest, save_json, save_result,
    write_matrix_csv, DocumentHeader, FitRecord, ResultDocument, SaveFormat, SCHEMA_VERSION,
};
pub use synth::{
    generate_bundle, generate_synthetic, synthetic_caps, DiagonalRule, Generator, SyntheticSpec,
    SyntheticTruth,
};
pub use tables::{
    load_bundle, load_caps, load_factors, load_returns, load_riskfree, resolve_data_path,
    save_bundle, save_panel, LoadWarning, PanelFormat, DATA_DIR_ENV,
};

/// Creates `path` for writing, creating missing parent directories first.
pub(crate) fn create_file(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(File::create(path)?)
}
