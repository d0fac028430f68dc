//! Data ingestion (OWID-style CSV) and seeded synthetic generators.

pub mod owid;
pub mod synth;

pub use owid::{extract_waves, parse_owid_csv, parse_owid_reader, OwidRow, WaveExtractionConfig};
pub use synth::{gen_domain_blobs, gen_gaussian_scenario, gen_synthetic_waves, BlobConfig, SyntheticWaveConfig, SyntheticWaves};
