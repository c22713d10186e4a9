//! Run configuration: flat `key = value` files plus command-line overrides.

use std::path::PathBuf;

use dynhyper::dyngraph::SbmParams;
use dynhyper::hyperbuild::TauScales;
use dynhyper::trainer::TrainConfig;
use dynhyper::{Error, Result};

/// One `key = value` line of a config file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits a config file into settings. Blank lines and `#` comments are
/// skipped; keys are lower-cased with `-` folded to `_`. A key may appear
/// only once.
pub fn parse_config(text: &str, file: &str) -> Result<Vec<Setting>> {
    let mut out: Vec<Setting> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::parse(file, line, format!("expected key = value, got `{content}`")));
        };
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::parse(file, line, "empty key"));
        }
        if value.is_empty() {
            return Err(Error::parse(file, line, format!("`{key}` has no value")));
        }
        if let Some(prev) = out.iter().find(|s| s.key == key) {
            return Err(Error::parse(file, line, format!("`{key}` already set on line {}", prev.line)));
        }
        out.push(Setting {
            key,
            value: value.to_string(),
            line,
        });
    }
    Ok(out)
}

/// The six `--sbm` numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SbmSpec {
    pub n: usize,
    pub slices: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub drift: f64,
}

impl std::str::FromStr for SbmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::param("sbm", format!("expected n,T,C,p_in,p_out,drift, got `{s}`"));
        if parts.len() != 6 {
            return Err(bad());
        }
        let int = |i: usize| parts[i].parse::<usize>().map_err(|_| bad());
        let real = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
        Ok(SbmSpec {
            n: int(0)?,
            slices: int(1)?,
            classes: int(2)?,
            p_in: real(3)?,
            p_out: real(4)?,
            drift: real(5)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Dir(PathBuf),
    Sbm(SbmSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub source: Option<DataSource>,
    /// Last training slice; required by every command that trains or evaluates.
    pub split_t: Option<usize>,
    pub out: PathBuf,
    /// Parameter blob for `eval`; defaults to `<out>/params.bin`.
    pub params: Option<PathBuf>,
    pub sbm_feature_noise: f64,
    pub sbm_feature_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            source: None,
            split_t: None,
            out: PathBuf::from("out"),
            params: None,
            sbm_feature_noise: SbmParams::DEFAULT_FEATURE_NOISE,
            sbm_feature_dim: SbmParams::DEFAULT_FEATURE_DIM,
        }
    }
}

fn num<T: std::str::FromStr>(name: &'static str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::param(name, format!("cannot parse `{value}`")))
}

fn taus(value: &str) -> Result<TauScales> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::param("tau", format!("expected short,mid,long, got `{value}`")));
    }
    TauScales::new(num("tau", parts[0])?, num("tau", parts[1])?, num("tau", parts[2])?)
}

impl RunConfig {
    /// Builds a config from an optional file followed by overrides; later
    /// settings win. Setting `data` or `sbm` replaces any earlier source.
    pub fn from_settings(file: Option<(&str, &[Setting])>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some((name, settings)) = file {
            if settings.iter().any(|s| s.key == "data") && settings.iter().any(|s| s.key == "sbm") {
                return Err(Error::parse(name, 0, "both `data` and `sbm` are set"));
            }
            for s in settings {
                cfg.apply(&s.key, &s.value).map_err(|e| Error::parse(name, s.line, e.to_string()))?;
            }
        }
        for (key, value) in overrides {
            cfg.apply(key, value)?;
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "seed" => t.seed = num("seed", value)?,
            "data" => self.source = Some(DataSource::Dir(PathBuf::from(value))),
            "sbm" => self.source = Some(DataSource::Sbm(value.parse()?)),
            "split_t" => self.split_t = Some(num("split-t", value)?),
            "k" => t.k = num("k", value)?,
            "tau" => t.taus = Some(taus(value)?),
            "m_clusters" => t.m_clusters = num("m-clusters", value)?,
            "agg" => t.agg = value.parse()?,
            "metric" => t.metric = value.parse()?,
            "alpha" => t.alpha = num("alpha", value)?,
            "beta" => t.beta = num("beta", value)?,
            "lr" => t.lr = num("lr", value)?,
            "epochs" => t.epochs = num("epochs", value)?,
            "prop" => t.prop = value.parse()?,
            "ablation" => t.ablation = value.parse()?,
            "backbone" => t.backbone = value.parse()?,
            "hidden" => t.hidden = num("hidden", value)?,
            "layers" => t.layers = num("layers", value)?,
            "rebuild_every" => t.rebuild_every = num("rebuild-every", value)?,
            "out" => self.out = PathBuf::from(value),
            "params" => self.params = Some(PathBuf::from(value)),
            "sbm_feature_noise" => self.sbm_feature_noise = num("sbm-feature-noise", value)?,
            "sbm_feature_dim" => self.sbm_feature_dim = num("sbm-feature-dim", value)?,
            other => return Err(Error::param("config", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        match &self.source {
            None => return Err(Error::param("data", "one of `data` or `sbm` is required")),
            Some(DataSource::Sbm(_)) => self.sbm_params()?.expect("sbm source").validate()?,
            Some(DataSource::Dir(_)) => {}
        }
        self.train.validate()
    }

    pub fn sbm_params(&self) -> Result<Option<SbmParams>> {
        let Some(DataSource::Sbm(s)) = &self.source else {
            return Ok(None);
        };
        let mut p = SbmParams::new(s.n, s.slices, s.classes, s.p_in, s.p_out, s.drift).with_seed(self.train.seed);
        p.feature_noise = self.sbm_feature_noise;
        p.feature_dim = self.sbm_feature_dim;
        Ok(Some(p))
    }

    /// The last training slice. There is no default: a sensible boundary
    /// depends on the data.
    pub fn split_t(&self) -> Result<usize> {
        self.split_t
            .ok_or_else(|| Error::param("split-t", "the last training slice must be given"))
    }

    pub fn params_path(&self) -> PathBuf {
        self.params.clone().unwrap_or_else(|| self.out.join("params.bin"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dynhyper::trainer::Ablation;

    #[test]
    fn parses_comments_and_folds_keys() {
        let s = parse_config("# run\nM-Clusters = 3\n\nlr=0.05 # faster\n", "run.cfg").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].key.as_str(), s[0].value.as_str(), s[0].line), ("m_clusters", "3", 2));
        assert_eq!((s[1].key.as_str(), s[1].value.as_str()), ("lr", "0.05"));
    }

    #[test]
    fn malformed_lines_report_their_line() {
        for (text, line) in [("k=2\nnonsense\n", 2), ("k=1\nk=2\n", 2), ("=4\n", 1), ("k=\n", 1)] {
            match parse_config(text, "c") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let file = parse_config("epochs = 7\nablation = group_only\nsbm = 20,4,2,0.5,0.1,0\n", "f").unwrap();
        let cfg = RunConfig::from_settings(Some(("f", &file)), &[("epochs".into(), "3".into())]).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.ablation, Ablation::GroupOnly);
        cfg.validate().unwrap();

        let bad = parse_config("epocs = 7\n", "f").unwrap();
        assert!(matches!(
            RunConfig::from_settings(Some(("f", &bad)), &[]),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn source_is_required_and_exclusive() {
        let cfg = RunConfig::default();
        assert!(matches!(cfg.validate(), Err(Error::Parameter { name: "data", .. })));
        assert!(matches!(cfg.split_t(), Err(Error::Parameter { name: "split-t", .. })));
        let both = parse_config("data = x\nsbm = 20,4,2,0.5,0.1,0\n", "f").unwrap();
        assert!(RunConfig::from_settings(Some(("f", &both)), &[]).is_err());
    }

    #[test]
    fn sbm_and_tau_values() {
        assert!("20,4,2,0.5,0.1".parse::<SbmSpec>().is_err());
        assert!("20,4,x,0.5,0.1,0".parse::<SbmSpec>().is_err());
        let mut cfg = RunConfig::default();
        cfg.apply("tau", "1,2,3").unwrap();
        assert_eq!(cfg.train.taus, Some(TauScales::new(1, 2, 3).unwrap()));
        assert!(cfg.apply("tau", "3,2,1").is_err());
        assert!(cfg.apply("alpha", "lots").is_err());
    }
}
