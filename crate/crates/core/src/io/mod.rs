//! File formats: line-delimited JSON event logs, CSV ingestion, parameter
//! and badge documents, reports, and the temporal train/test split.

mod events;
mod params;
mod reports;
mod split;

pub use events::{
    load_csv_events, load_events, read_csv_events, read_events, save_events, to_action, write_events, CsvMapping,
    EventLogRecord, LoadOptions, LogHeader, RecordKind,
};
pub use params::{
    from_json_reader, from_json_value, load_badges, load_params, read_badges, read_params, save_params, example_badges, to_json_writer,
    BadgeFile, ParamsDocument, EXAMPLE_BADGES,
};
pub use reports::{read_report, write_qq_csv, write_ranking_csv, write_report};
pub use split::{split_train_test, Split};

/// Version written into every structured document this crate produces.
pub const FORMAT_VERSION: u64 = 1;

/// Open a file for reading, naming it in the error.
pub fn open(path: &std::path::Path) -> crate::Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| crate::Error::File { path: path.display().to_string(), source })
}

/// Create a file for writing, naming it in the error.
pub fn create(path: &std::path::Path) -> crate::Result<std::fs::File> {
    std::fs::File::create(path).map_err(|source| crate::Error::File { path: path.display().to_string(), source })
}
