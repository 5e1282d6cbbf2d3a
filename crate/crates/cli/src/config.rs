//! Run configuration: TOML file with one flat section per command, then flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// A grid axis: a number, a list, or a `start:stop:step` range (inclusive).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    One(f64),
    List(Vec<f64>),
    Text(String),
}

impl GridValue {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let v = match self {
            GridValue::One(x) => vec![*x],
            GridValue::List(xs) => xs.clone(),
            GridValue::Text(s) => parse_grid(s)?,
        };
        if v.is_empty() {
            return Err("empty grid".into());
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err("grid values must be finite".into());
        }
        Ok(v)
    }
}

fn number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
}

/// `0:2:0.5` gives `[0, 0.5, 1, 1.5, 2]`; `1,2,3` is a plain list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').filter(|t| !t.trim().is_empty()).map(number).collect(),
        3 => {
            let (a, b, step) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
            if !(step > 0.0) {
                return Err(format!("range '{s}' needs a positive step"));
            }
            if b < a {
                return Err(format!("range '{s}' runs backwards"));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(format!("cannot read grid '{s}'; use a list '1,2,3' or a range 'start:stop:step'")),
    }
}

pub fn sizes(v: &[f64]) -> Result<Vec<usize>, String> {
    v.iter()
        .map(|&x| {
            if x >= 1.0 && x.fract() == 0.0 && x <= 1e12 {
                Ok(x as usize)
            } else {
                Err(format!("N = {x} is not a positive integer"))
            }
        })
        .collect()
}

/// Parameters accepted in a command section. Unset fields fall back to the
/// command's defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub beta: Option<GridValue>,
    pub n: Option<GridValue>,
    pub h_over_j: Option<GridValue>,
    pub gamma: Option<GridValue>,
    pub j: Option<f64>,
    pub h: Option<f64>,
    pub model: Option<String>,
    pub quantities: Option<Vec<String>>,
    pub nu: Option<usize>,
    pub kmax: Option<usize>,
    pub margin: Option<f64>,
    pub seeds: Option<usize>,
    pub h_true: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub floor_policy: Option<String>,
    pub points: Option<usize>,
    pub tol_scale: Option<f64>,
    pub c_fit: Option<bool>,
}

impl Section {
    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: Section) -> Section {
        macro_rules! pick {
            ($($f:ident),*) => { Section { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            beta, n, h_over_j, gamma, j, h, model, quantities, nu, kmax, margin, seeds, h_true, h_min, h_max,
            floor_policy, points, tol_scale, c_fit
        )
    }
}

/// Top-level keys plus one table per command; unknown keys inside a table
/// are rejected by [`Section`].
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<String>,
    pub out: Option<String>,
    #[serde(flatten)]
    pub sections: BTreeMap<String, Section>,
}

pub fn load(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}'; use csv or json")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_inclusive() {
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0:0.99:0.33").unwrap().len(), 4);
        assert_eq!(parse_grid("2").unwrap(), vec![2.0]);
        assert_eq!(parse_grid("1e3, 1e4").unwrap(), vec![1e3, 1e4]);
    }

    #[test]
    fn bad_grids_are_refused() {
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(GridValue::List(vec![]).values().is_err());
        assert!(sizes(&[10.5]).is_err());
        assert_eq!(sizes(&[1e5]).unwrap(), vec![100_000]);
    }

    #[test]
    fn sections_overlay_and_reject_unknown_keys() {
        let cfg: FileConfig = toml::from_str("seed = 3\n[fig1]\nbeta = [20, 100]\nh_over_j = \"0:2:0.5\"\n").unwrap();
        let s = cfg.sections["fig1"].clone();
        assert_eq!(s.beta.as_ref().unwrap().values().unwrap(), vec![20.0, 100.0]);
        let merged = s.overlay(Section {
            beta: Some(GridValue::One(5.0)),
            ..Default::default()
        });
        assert_eq!(merged.beta.unwrap().values().unwrap(), vec![5.0]);
        assert_eq!(merged.h_over_j.unwrap().values().unwrap().len(), 5);
        assert!(toml::from_str::<FileConfig>("[fig1]\nbogus = 1\n").is_err());
    }
}
