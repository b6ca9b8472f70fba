//! Flat `key = value` run configuration shared by all subcommands.
//!
//! ```text
//! # comments and blank lines are ignored
//! method = shrinkage
//! window = 15
//! span_min = 3
//! span_max = 63
//! k_max = 10
//! taper_max = 42
//! bands = alpha:8:12, beta:18:30
//! q = 0.05
//! seed = 0
//! out_dir = results
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use spectral_shrinkage::connectivity::Band;
use spectral_shrinkage::multitaper::default_taper_grid;
use spectral_shrinkage::shrinkage::DEFAULT_WINDOW;
use spectral_shrinkage::smoothing::default_span_grid;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Raw,
    Smoothed,
    Var,
    Multitaper,
    Shrinkage,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Smoothed => "smoothed",
            Method::Var => "var",
            Method::Multitaper => "multitaper",
            Method::Shrinkage => "shrinkage",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub window: usize,
    pub span_min: Option<usize>,
    pub span_max: Option<usize>,
    pub k_max: usize,
    pub taper_max: Option<usize>,
    pub bands: Vec<Band>,
    pub q: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Shrinkage,
            window: DEFAULT_WINDOW,
            span_min: None,
            span_max: None,
            k_max: 10,
            taper_max: None,
            bands: vec![Band::alpha(), Band::beta()],
            q: 0.05,
            seed: 0,
            out_dir: PathBuf::from("."),
        }
    }
}

pub fn parse_band(text: &str) -> Result<Band, String> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let [name, lo, hi] = parts[..] else {
        return Err(format!("band {text:?} is not name:lo_hz:hi_hz"));
    };
    let lo: f64 = lo.parse().map_err(|_| format!("band {name}: bad lower edge {lo:?}"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("band {name}: bad upper edge {hi:?}"))?;
    if name.is_empty() || !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
        return Err(format!("band {text:?} needs a name and 0 <= lo <= hi"));
    }
    Ok(Band::new(name, lo, hi))
}

fn parse_bands(text: &str) -> Result<Vec<Band>, String> {
    text.split(',').filter(|s| !s.trim().is_empty()).map(parse_band).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: {v:?} is not a nonnegative integer")));
            match key {
                "method" => {
                    cfg.method = Method::from_str(value, true).map_err(|_| err(format!("unknown method {value:?}")))?
                }
                "window" => cfg.window = int(value)?,
                "span_min" => cfg.span_min = Some(int(value)?),
                "span_max" => cfg.span_max = Some(int(value)?),
                "k_max" => cfg.k_max = int(value)?,
                "taper_max" => cfg.taper_max = Some(int(value)?),
                "bands" => cfg.bands = parse_bands(value).map_err(err)?,
                "q" => {
                    cfg.q = value
                        .parse()
                        .ok()
                        .filter(|q: &f64| *q > 0.0 && *q < 1.0)
                        .ok_or_else(|| err(format!("q must lie in (0, 1), got {value:?}")))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| err(format!("seed {value:?} is not a u64")))?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.method.name());
        let _ = writeln!(s, "window = {}", self.window);
        if let Some(v) = self.span_min {
            let _ = writeln!(s, "span_min = {v}");
        }
        if let Some(v) = self.span_max {
            let _ = writeln!(s, "span_max = {v}");
        }
        let _ = writeln!(s, "k_max = {}", self.k_max);
        if let Some(v) = self.taper_max {
            let _ = writeln!(s, "taper_max = {v}");
        }
        let bands: Vec<String> = self.bands.iter().map(|b| format!("{}:{}:{}", b.name, b.lo_hz, b.hi_hz)).collect();
        let _ = writeln!(s, "bands = {}", bands.join(", "));
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }

    /// Candidate spans for series of length `n_samples`: odd values within
    /// the configured bounds, or the library default when unbounded.
    pub fn span_grid(&self, n_samples: usize) -> anyhow::Result<Vec<usize>> {
        if self.span_min.is_none() && self.span_max.is_none() {
            return Ok(default_span_grid(n_samples));
        }
        let lo = self.span_min.unwrap_or(3).max(1);
        let hi = self
            .span_max
            .unwrap_or_else(|| *default_span_grid(n_samples).last().expect("nonempty"));
        let grid: Vec<usize> = (lo..=hi).filter(|h| h % 2 == 1 && *h < n_samples).collect();
        anyhow::ensure!(!grid.is_empty(), "no odd span in [{lo}, {hi}] below T = {n_samples}");
        Ok(grid)
    }

    pub fn taper_grid(&self, n_samples: usize) -> anyhow::Result<Vec<usize>> {
        match self.taper_max {
            None => Ok(default_taper_grid(n_samples)),
            Some(m) => {
                anyhow::ensure!(m >= 1 && m < n_samples, "taper_max must satisfy 1 <= m < T = {n_samples}");
                Ok((1..=m).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys_and_round_trips() {
        let text = "# run\nmethod = VAR\nwindow = 7\nspan_min = 5\nspan_max = 21\nk_max = 4\ntaper_max = 9\n\
                    bands = theta:4:7, gamma:30:45 # two bands\nq = 0.1\nseed = 77\nout_dir = out/x\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.method, Method::Var);
        assert_eq!((cfg.window, cfg.span_min, cfg.span_max, cfg.k_max), (7, Some(5), Some(21), 4));
        assert_eq!(cfg.bands, vec![Band::new("theta", 4.0, 7.0), Band::new("gamma", 30.0, 45.0)]);
        assert_eq!((cfg.q, cfg.seed), (0.1, 77));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.span_grid(256).unwrap(), vec![5, 7, 9, 11, 13, 15, 17, 19, 21]);
        assert_eq!(cfg.taper_grid(256).unwrap().len(), 9);
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert_eq!(
            RunConfig::parse("window = 3\nwidnow = 5").unwrap_err(),
            ConfigError {
                line: 2,
                message: "unknown key \"widnow\"".into()
            }
        );
        assert!(RunConfig::parse("q = 1.5").is_err());
        assert!(RunConfig::parse("method = ridge").is_err());
        assert!(RunConfig::parse("bands = alpha:12").is_err());
        assert!(RunConfig::parse("just text").is_err());
    }
}
