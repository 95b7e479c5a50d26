//! Benchmark harness: suite manifests, model adapters, synthetic data,
//! suite execution and report emission.

pub mod adapter;
pub mod demo;
pub mod generator;
pub mod manifest;
pub mod report;
pub mod runner;

pub use adapter::{Adapter, AdapterSpec, OfflineAdapter, Prediction, Reply, SubprocessAdapter};
pub use generator::{generate_synthetic, interfering_tasks, GeneratorConfig, SyntheticData};
pub use manifest::{load_manifest, read_items, SuiteManifest, TaskItem, TaskSpec};
pub use report::{emit_report, ReportFormat};
pub use runner::{exact_match, normalize_answer, run_suite, SuiteRun};
