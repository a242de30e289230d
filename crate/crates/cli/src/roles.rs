//! Role manifests: a TOML file naming the predictee, predictor and
//! conditioning columns, and optionally the lag orders.
//!
//! ```toml
//! predictee = ["x"]
//! predictor = ["y"]
//! condition = ["z"]
//!
//! [lags]
//! p = 2
//! q = 2
//! r = 1
//! ```

use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolesManifest {
    #[serde(default)]
    pub predictee: Vec<String>,
    #[serde(default)]
    pub predictor: Vec<String>,
    #[serde(default)]
    pub condition: Vec<String>,
    pub lags: Option<ManifestLags>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLags {
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub r: Option<usize>,
}

impl RolesManifest {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_manifest() {
        let m = RolesManifest::parse("predictee = [\"x\"]\npredictor = [\"y\", \"w\"]\ncondition = [\"z\"]\n[lags]\np = 3\n").unwrap();
        assert_eq!(m.predictor, ["y", "w"]);
        assert_eq!(m.lags.unwrap().p, Some(3));
        assert_eq!(m.lags.unwrap().q, None);
    }

    #[test]
    fn typos_are_errors() {
        assert!(RolesManifest::parse("predicte = [\"x\"]\n").is_err());
        assert!(RolesManifest::parse("[lags]\nk = 1\n").is_err());
    }
}
