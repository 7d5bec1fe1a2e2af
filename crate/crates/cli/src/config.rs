//! Resolved run configuration.
//!
//! Precedence: command-line flags override the config file, which overrides
//! the `ASR_AUDIT_OUT` environment default for the output root. The config
//! file is flat `key = value` text with `#` comments, using the same keys
//! as the long flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use asr_audit_core::error::{AuditError, Result};
use asr_audit_core::features::SnrSource;
use asr_audit_core::ingest::ManifestFormat;

/// Whether difficulty deciles are assigned over the pooled corpus or within
/// each dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecileScope {
    Pooled,
    PerDataset,
}

impl FromStr for DecileScope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pooled" => Ok(DecileScope::Pooled),
            "per-dataset" | "per_dataset" => Ok(DecileScope::PerDataset),
            other => Err(format!("unrecognized decile scope {other:?}")),
        }
    }
}

impl DecileScope {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecileScope::Pooled => "pooled",
            DecileScope::PerDataset => "per-dataset",
        }
    }
}

/// Fully resolved audit configuration.
#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub manifest: Option<PathBuf>,
    pub manifest_format: Option<ManifestFormat>,
    pub embeddings: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub out: PathBuf,
    pub tau: f64,
    pub lambda: f64,
    pub snr_source: SnrSource,
    pub decile_scope: DecileScope,
    pub seed: u64,
    pub age_bins: Option<PathBuf>,
    pub wada_table: Option<PathBuf>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            manifest: None,
            manifest_format: None,
            embeddings: None,
            sidecar: None,
            out: PathBuf::from("audit-run"),
            tau: 0.4,
            lambda: 0.1,
            snr_source: SnrSource::ManifestThenWada,
            decile_scope: DecileScope::Pooled,
            seed: 42,
            age_bins: None,
            wada_table: None,
        }
    }
}

/// Unresolved values coming from flags or a config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverlay {
    pub manifest: Option<PathBuf>,
    pub manifest_format: Option<ManifestFormat>,
    pub embeddings: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub snr_source: Option<SnrSource>,
    pub decile_scope: Option<DecileScope>,
    pub seed: Option<u64>,
    pub age_bins: Option<PathBuf>,
    pub wada_table: Option<PathBuf>,
}

impl ConfigOverlay {
    fn apply(self, config: &mut AuditConfig) {
        if let Some(v) = self.manifest {
            config.manifest = Some(v);
        }
        if let Some(v) = self.manifest_format {
            config.manifest_format = Some(v);
        }
        if let Some(v) = self.embeddings {
            config.embeddings = Some(v);
        }
        if let Some(v) = self.sidecar {
            config.sidecar = Some(v);
        }
        if let Some(v) = self.out {
            config.out = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(v) = self.snr_source {
            config.snr_source = v;
        }
        if let Some(v) = self.decile_scope {
            config.decile_scope = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.age_bins {
            config.age_bins = Some(v);
        }
        if let Some(v) = self.wada_table {
            config.wada_table = Some(v);
        }
    }
}

/// Parse a flat `key = value` config file.
pub fn parse_config_file(path: &Path) -> Result<ConfigOverlay> {
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    let mut overlay = ConfigOverlay::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            AuditError::parse(path, idx + 1, "expected `key = value`")
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |msg: String| AuditError::parse(path, idx + 1, msg);
        match key {
            "manifest" => overlay.manifest = Some(PathBuf::from(value)),
            "manifest-format" => {
                overlay.manifest_format = Some(value.parse().map_err(bad)?);
            }
            "embeddings" => overlay.embeddings = Some(PathBuf::from(value)),
            "sidecar" => overlay.sidecar = Some(PathBuf::from(value)),
            "out" => overlay.out = Some(PathBuf::from(value)),
            "tau" => overlay.tau = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "lambda" => overlay.lambda = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "snr-source" => overlay.snr_source = Some(value.parse().map_err(bad)?),
            "decile-scope" => overlay.decile_scope = Some(value.parse().map_err(bad)?),
            "seed" => overlay.seed = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            "age-bins" => overlay.age_bins = Some(PathBuf::from(value)),
            "wada-table" => overlay.wada_table = Some(PathBuf::from(value)),
            other => return Err(bad(format!("unrecognized config key {other:?}"))),
        }
    }
    Ok(overlay)
}

/// Resolve defaults < env < config file < flags.
pub fn resolve(config_file: Option<&Path>, flags: ConfigOverlay) -> Result<AuditConfig> {
    let mut config = AuditConfig::default();
    if let Ok(root) = std::env::var("ASR_AUDIT_OUT") {
        if !root.is_empty() {
            config.out = PathBuf::from(root);
        }
    }
    if let Some(path) = config_file {
        parse_config_file(path)?.apply(&mut config);
    }
    flags.apply(&mut config);
    Ok(config)
}

impl AuditConfig {
    pub fn require_manifest(&self) -> Result<&PathBuf> {
        self.manifest
            .as_ref()
            .ok_or_else(|| AuditError::input("no manifest given (flag --manifest or config key `manifest`)"))
    }

    pub fn require_embeddings(&self) -> Result<&PathBuf> {
        self.embeddings
            .as_ref()
            .ok_or_else(|| AuditError::input("no embedding file given (flag --embeddings or config key `embeddings`)"))
    }

    pub fn manifest_format(&self) -> ManifestFormat {
        match self.manifest_format {
            Some(format) => format,
            None => self
                .manifest
                .as_deref()
                .map(ManifestFormat::from_path)
                .unwrap_or(ManifestFormat::Jsonl),
        }
    }

    /// Canonical text form; hashed into the run manifest.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        };
        let _ = writeln!(s, "manifest = {}", path(&self.manifest));
        let _ = writeln!(
            s,
            "manifest-format = {}",
            match self.manifest_format {
                Some(ManifestFormat::Jsonl) => "jsonl",
                Some(ManifestFormat::Csv) => "csv",
                None => "auto",
            }
        );
        let _ = writeln!(s, "embeddings = {}", path(&self.embeddings));
        let _ = writeln!(s, "sidecar = {}", path(&self.sidecar));
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "snr-source = {}", self.snr_source.as_str());
        let _ = writeln!(s, "decile-scope = {}", self.decile_scope.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "age-bins = {}", path(&self.age_bins));
        let _ = writeln!(s, "wada-table = {}", path(&self.wada_table));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.conf");
        fs::write(&path, "# comment\ntau = 0.5\nseed = 7\nout = from-file\n").unwrap();
        let flags = ConfigOverlay { seed: Some(9), ..Default::default() };
        let config = resolve(Some(&path), flags).unwrap();
        assert_eq!(config.tau, 0.5, "from file");
        assert_eq!(config.seed, 9, "flag wins");
        assert_eq!(config.out, PathBuf::from("from-file"));
        assert_eq!(config.lambda, 0.1, "default");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.conf");
        fs::write(&path, "bogus = 1\n").unwrap();
        let err = resolve(Some(&path), ConfigOverlay::default()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }
}
