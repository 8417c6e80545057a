//! Effective settings for one invocation: built-in defaults, then an optional
//! `key = value` file, then command-line flags.
//!
//! | key          | default        | meaning                                        |
//! |--------------|----------------|------------------------------------------------|
//! | `seed`       | 0              | root seed for every random draw                |
//! | `workers`    | 1              | threads for per-sample gradients               |
//! | `size`       | 256            | side of a synthetic scene                      |
//! | `change`     | 0.1            | changed share of a synthetic scene             |
//! | `content`    | 128            | content code channels                          |
//! | `style`      | 256            | style code length                              |
//! | `ffb`        | 128            | fusion block width (equals `content`)          |
//! | `mlp-hidden` | 1024           | hidden width of the style MLP                  |
//! | `patch`      | 64             | training patch side                            |
//! | `stride`     | 56             | training patch stride                          |
//! | `lr`         | 1e-4           | Adam learning rate                             |
//! | `beta1`      | 0.5            | Adam first-moment decay                        |
//! | `beta2`      | 0.9            | Adam second-moment decay                       |
//! | `adam-eps`   | 1e-8           | Adam denominator offset                        |
//! | `batch`      | 32             | patches per step                               |
//! | `epochs`     | 10             | epochs per mask iteration                      |
//! | `iterations` | 2              | mask iterations                                |
//! | `augment`    | true           | random rotations and flips                     |
//! | `filter`     | true           | Gaussian smoothing of the difference image     |
//! | `sigma`      | 1.5            | smoothing standard deviation                   |
//! | `kernel`     | 7              | smoothing window side                          |
//! | `normalize`  | true           | per-channel min–max scaling on load            |
//! | `resample`   | none           | `HxW` target applied to both inputs on load    |
//! | `disable`    | none           | comma-separated loss terms to switch off       |
//! | `extractor`  | `window-stats` | feature extractor for FID/KID                  |
//!
//! Keys may use `-` or `_`. Lines starting with `#` are comments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cstn::detector::FilterConfig;
use cstn::losses::LossToggles;
use cstn::metrics::WINDOW_STATS;
use cstn::trainer::TrainConfig;
use cstn::ArchConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub size: usize,
    pub change: f64,
    pub content: usize,
    pub style: usize,
    pub ffb: usize,
    pub mlp_hidden: usize,
    pub patch: usize,
    pub stride: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub epochs: usize,
    pub iterations: usize,
    pub augment: bool,
    pub filter: bool,
    pub sigma: f64,
    pub kernel: usize,
    pub normalize: bool,
    pub resample: Option<(usize, usize)>,
    pub disable: Vec<String>,
    pub extractor: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let arch = ArchConfig::new(1, 1);
        let filter = FilterConfig::default();
        Self {
            seed: train.seed,
            workers: train.workers,
            size: 256,
            change: 0.1,
            content: arch.content_channels(),
            style: arch.style_dim(),
            ffb: arch.ffb_width,
            mlp_hidden: arch.mlp_hidden,
            patch: train.patch_size,
            stride: train.stride,
            lr: train.learning_rate,
            beta1: train.beta1,
            beta2: train.beta2,
            adam_eps: train.adam_epsilon,
            batch: train.batch_size,
            epochs: train.epochs_per_iteration,
            iterations: train.iterations,
            augment: train.augment,
            filter: filter.enabled,
            sigma: filter.sigma,
            kernel: filter.kernel_size,
            normalize: true,
            resample: None,
            disable: Vec::new(),
            extractor: WINDOW_STATS.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("invalid value '{value}' for '{key}'")))
}

/// `HxW`, e.g. `875x500`.
pub fn parse_dims(value: &str) -> Result<(usize, usize), String> {
    let (h, w) = value
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got '{value}'"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in '{value}'"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in '{value}'"))?;
    Ok((h, w))
}

impl RunConfig {
    /// Applies one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim().replace('_', "-").as_str() {
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "size" => self.size = parse(key, value)?,
            "change" => self.change = parse(key, value)?,
            "content" => self.content = parse(key, value)?,
            "style" => self.style = parse(key, value)?,
            "ffb" => self.ffb = parse(key, value)?,
            "mlp-hidden" => self.mlp_hidden = parse(key, value)?,
            "patch" => self.patch = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "adam-eps" => self.adam_eps = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "augment" => self.augment = parse(key, value)?,
            "filter" => self.filter = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "kernel" => self.kernel = parse(key, value)?,
            "normalize" => self.normalize = parse(key, value)?,
            "resample" => {
                self.resample = match value {
                    "" | "none" => None,
                    v => Some(parse_dims(v).map_err(ConfigError)?),
                }
            }
            "disable" => {
                self.disable = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
                self.toggles()?;
            }
            "extractor" => self.extractor = value.to_string(),
            _ => return Err(ConfigError(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| ConfigError(format!("line {}: {}", n + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_str(&text)
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn toggles(&self) -> Result<LossToggles, ConfigError> {
        let mut t = LossToggles::default();
        for name in &self.disable {
            t.disable(name).map_err(|e| ConfigError(e.to_string()))?;
        }
        Ok(t)
    }

    pub fn arch(&self, channels_x: usize, channels_y: usize) -> ArchConfig {
        ArchConfig::scaled(channels_x, channels_y, self.content, self.style, self.ffb, self.mlp_hidden)
    }

    pub fn train(&self) -> Result<TrainConfig, ConfigError> {
        Ok(TrainConfig {
            patch_size: self.patch,
            stride: self.stride,
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_eps,
            batch_size: self.batch,
            epochs_per_iteration: self.epochs,
            iterations: self.iterations,
            seed: self.seed,
            augment: self.augment,
            toggles: self.toggles()?,
            workers: self.workers,
        })
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            enabled: self.filter,
            sigma: self.sigma,
            kernel_size: self.kernel,
        }
    }

    /// The settings as a config file that reproduces them.
    pub fn to_config_string(&self) -> String {
        let resample = self.resample.map_or("none".to_string(), |(h, w)| format!("{h}x{w}"));
        [
            format!("seed = {}", self.seed),
            format!("workers = {}", self.workers),
            format!("size = {}", self.size),
            format!("change = {}", self.change),
            format!("content = {}", self.content),
            format!("style = {}", self.style),
            format!("ffb = {}", self.ffb),
            format!("mlp-hidden = {}", self.mlp_hidden),
            format!("patch = {}", self.patch),
            format!("stride = {}", self.stride),
            format!("lr = {}", self.lr),
            format!("beta1 = {}", self.beta1),
            format!("beta2 = {}", self.beta2),
            format!("adam-eps = {}", self.adam_eps),
            format!("batch = {}", self.batch),
            format!("epochs = {}", self.epochs),
            format!("iterations = {}", self.iterations),
            format!("augment = {}", self.augment),
            format!("filter = {}", self.filter),
            format!("sigma = {}", self.sigma),
            format!("kernel = {}", self.kernel),
            format!("normalize = {}", self.normalize),
            format!("resample = {resample}"),
            format!("disable = {}", self.disable.join(",")),
            format!("extractor = {}", self.extractor),
        ]
        .join("\n")
            + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply_str("# reduced run\nlr = 0.001\nmlp_hidden=64\n\nresample = 875x500\ndisable = align, cyc\n")
            .unwrap();
        assert_eq!(c.lr, 1e-3);
        assert_eq!(c.mlp_hidden, 64);
        assert_eq!(c.resample, Some((875, 500)));
        let t = c.toggles().unwrap();
        assert!(!t.align && !t.cyc && t.recon && t.trans);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.apply_str("learning_rate = 0.1").unwrap_err().0.contains("learning_rate"));
        assert!(c.apply_str("epochs = ten").is_err());
        assert!(c.apply_str("just words").is_err());
        assert!(c.apply_str("disable = style").is_err());
        assert!(c.apply_str("resample = 12").is_err());
    }

    #[test]
    fn dump_reproduces_settings() {
        let mut c = RunConfig::default();
        c.apply_str("seed = 9\nresample = 10x20\ndisable = recon\naugment = false").unwrap();
        let mut d = RunConfig::default();
        d.apply_str(&c.to_config_string()).unwrap();
        assert_eq!(c, d);
        assert_eq!(RunConfig::default().train().unwrap(), TrainConfig::default());
    }
}
