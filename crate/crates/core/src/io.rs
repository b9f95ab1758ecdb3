//! File formats: run configs, model JSON and the CSV dialect (comma separated, `.` decimal,
//! header row required).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnefyError};
use crate::model::SnefyModel;
use crate::rng::stream;
use crate::training::{init_mixture_from_data, init_params, FitConfig, HistoryRow};
use crate::types::{Activation, BaseMeasure, SufficientStatistic};

/// Activation names accepted in a run config; the snake scale comes from `snake_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Cos,
    Sin,
    Linear,
    SnakeNoOffset,
    Snake,
    ExpHalf,
    Exp,
}

/// Either an explicit base measure or `{"kind": "data_mixture", "components": K}`, a diagonal
/// mixture initialised from the training data.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseSpec {
    Explicit(BaseMeasure),
    DataMixture { components: usize },
}

impl Serialize for BaseSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BaseSpec::Explicit(b) => b.serialize(s),
            BaseSpec::DataMixture { components } => {
                serde_json::json!({"kind": "data_mixture", "components": components}).serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for BaseSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        if v.get("kind").and_then(|k| k.as_str()) == Some("data_mixture") {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Dm {
                #[allow(dead_code)]
                kind: String,
                components: usize,
            }
            let dm: Dm = serde_json::from_value(v).map_err(D::Error::custom)?;
            return Ok(BaseSpec::DataMixture { components: dm.components });
        }
        serde_json::from_value(v).map(BaseSpec::Explicit).map_err(D::Error::custom)
    }
}

fn default_snake_a() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub activation: ActivationName,
    pub statistic: SufficientStatistic,
    pub base: BaseSpec,
    /// Hidden width.
    pub n: usize,
    /// Readout rows.
    pub m: usize,
    /// Support dimension.
    pub d: usize,
    #[serde(default = "default_snake_a")]
    pub snake_a: f64,
}

impl ModelSpec {
    pub fn activation(&self) -> Activation {
        match self.activation {
            ActivationName::Cos => Activation::Cos,
            ActivationName::Sin => Activation::Sin,
            ActivationName::Linear => Activation::Linear,
            ActivationName::SnakeNoOffset => Activation::SnakeNoOffset { a: self.snake_a },
            ActivationName::Snake => Activation::Snake { a: self.snake_a },
            ActivationName::ExpHalf => Activation::ExpHalf,
            ActivationName::Exp => Activation::Exp,
        }
    }

    /// Randomly initialised model; `data` is only consulted for a data-driven base.
    pub fn build(&self, data: &[Vec<f64>], seed: u64) -> Result<SnefyModel> {
        if self.n == 0 || self.m == 0 {
            return Err(SnefyError::invalid("model widths n and m must be positive"));
        }
        let base = match &self.base {
            BaseSpec::Explicit(b) => b.clone(),
            BaseSpec::DataMixture { components } => init_mixture_from_data(data, *components, &mut stream(seed, 3))?,
        };
        if base.dim() != self.d {
            return Err(SnefyError::DimensionMismatch {
                expected: self.d,
                got: base.dim(),
            });
        }
        let activation = self.activation();
        // reject unsupported triples before drawing parameters
        crate::kernels::Kernel::dispatch(&activation, self.statistic, &base)?;
        let dim = self.statistic.output_dim(self.d)?;
        let params = init_params(self.m, self.n, dim, &mut stream(seed, 0))?;
        SnefyModel::new(params, activation, self.statistic, base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub fit: FitConfig,
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| SnefyError::Io(format!("{}: {e}", path.display())))?;
    Ok(s)
}

fn json_parse_error(e: serde_json::Error) -> SnefyError {
    SnefyError::Parse {
        line: Some(e.line() as u64),
        message: e.to_string(),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(&read_to_string(path)?).map_err(json_parse_error)?;
    cfg.fit.validate()?;
    Ok(cfg)
}

pub fn load_model(path: &Path) -> Result<SnefyModel> {
    serde_json::from_str(&read_to_string(path)?).map_err(json_parse_error)
}

pub fn save_model(model: &SnefyModel, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(model)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| SnefyError::Io(format!("{}: {e}", path.display())))
}

/// Reads a numeric CSV with a header row; every row must have the header's width.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let f = File::open(path).map_err(|e| SnefyError::Io(format!("{}: {e}", path.display())))?;
    parse_points(f)
}

pub fn parse_points<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let width = rdr
        .headers()
        .map_err(csv_error)?
        .len();
    if width == 0 {
        return Err(SnefyError::Parse {
            line: Some(1),
            message: "missing header row".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line());
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, field)| {
                let v: f64 = field.trim().parse().map_err(|_| SnefyError::Parse {
                    line,
                    message: format!("column {}: cannot parse {field:?} as a number", c + 1),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(SnefyError::Parse {
                        line,
                        message: format!("column {}: non-finite value {field:?}", c + 1),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(SnefyError::Parse {
            line: None,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> SnefyError {
    let line = e.position().map(|p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    SnefyError::Parse { line, message }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SnefyError::Io(format!("{}: {e}", path.display())))
}

fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| SnefyError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        // `{}` on f64 is the shortest representation that round-trips
        w.write_record(r.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `x1,…,xd` rows.
pub fn write_points(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.len());
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    write_table(path, &header, points.iter().cloned())
}

/// `iter,train_nll,val_nll`.
pub fn write_history(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let header = ["iter", "train_nll", "val_nll"].map(String::from);
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| SnefyError::Io(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(io)?;
    for r in history {
        w.write_record([r.iter.to_string(), r.train_nll.to_string(), r.val_nll.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Regular grid over `bounds` (one `(lo, hi)` per dimension, d ≤ 2) with `resolution` nodes
/// per axis, first coordinate varying slowest.
pub fn grid_points(bounds: &[(f64, f64)], resolution: usize) -> Result<Vec<Vec<f64>>> {
    if bounds.is_empty() || bounds.len() > 2 {
        return Err(SnefyError::invalid(format!("grid supports 1 or 2 dimensions, got {}", bounds.len())));
    }
    if resolution < 2 {
        return Err(SnefyError::invalid("grid resolution must be at least 2"));
    }
    if bounds.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
        return Err(SnefyError::invalid("grid bounds must be finite with lo < hi"));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let a = axis(bounds[0]);
    Ok(match bounds.get(1) {
        None => a.into_iter().map(|x| vec![x]).collect(),
        Some(&b) => {
            let bb = axis(b);
            a.iter().flat_map(|&x| bb.iter().map(move |&y| vec![x, y])).collect()
        }
    })
}

/// `x1[,x2],log_density` rows.
pub fn write_grid(path: &Path, points: &[Vec<f64>], log_density: &[f64]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.len());
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("log_density".into());
    write_table(
        path,
        &header,
        points.iter().zip(log_density).map(|(p, l)| {
            let mut r = p.clone();
            r.push(*l);
            r
        }),
    )
}

/// Parses `lo,hi[,lo,hi]`.
pub fn parse_bounds(s: &str) -> Result<Vec<(f64, f64)>> {
    let vals = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| SnefyError::invalid(format!("bounds: cannot parse {t:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != 2 && vals.len() != 4 {
        return Err(SnefyError::invalid("bounds must be x1min,x1max[,x2min,x2max]"));
    }
    Ok(vals.chunks(2).map(|c| (c[0], c[1])).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_points_reports_line_numbers() {
        let ok = parse_points("x1,x2\n1,2\n3.5,-4e-1\n".as_bytes()).unwrap();
        assert_eq!(ok, vec![vec![1.0, 2.0], vec![3.5, -0.4]]);
        match parse_points("x1,x2\n1,2\n3,oops\n".as_bytes()) {
            Err(SnefyError::Parse { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("{other:?}"),
        }
        match parse_points("x1,x2\n1,2\n3\n".as_bytes()) {
            Err(SnefyError::Parse { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("{other:?}"),
        }
        assert!(parse_points("x1\n".as_bytes()).is_err());
        assert!(parse_points("".as_bytes()).is_err());
        assert!(parse_points("x1\nNaN\n".as_bytes()).is_err());
    }

    #[test]
    fn config_with_data_mixture_base() {
        let s = r#"{"model": {"activation": "cos", "statistic": "identity",
            "base": {"kind": "data_mixture", "components": 3}, "n": 4, "m": 1, "d": 2},
            "fit": {"max_iters": 5}}"#;
        let c: RunConfig = serde_json::from_str(s).unwrap();
        assert_eq!(c.model.base, BaseSpec::DataMixture { components: 3 });
        assert_eq!(c.fit.max_iters, 5);
        let data = vec![vec![0.0, 1.0], vec![1.0, -1.0], vec![2.0, 0.5]];
        let m = c.model.build(&data, 1).unwrap();
        assert_eq!(m.base().dim(), 2);
        assert_eq!(m, c.model.build(&data, 1).unwrap());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_rejects_unsupported_triple() {
        let s = r#"{"model": {"activation": "cos", "statistic": "identity",
            "base": {"kind": "poisson"}, "n": 2, "m": 1, "d": 1}}"#;
        let c: RunConfig = serde_json::from_str(s).unwrap();
        assert!(matches!(c.model.build(&[vec![1.0]], 0), Err(SnefyError::UnsupportedTriple { .. })));
    }

    #[test]
    fn grid_layout() {
        let g = grid_points(&[(0.0, 1.0), (-1.0, 1.0)], 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[1], vec![0.0, 0.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
        assert!(grid_points(&[(0.0, 1.0); 3], 3).is_err());
        assert_eq!(parse_bounds("-1,1").unwrap(), vec![(-1.0, 1.0)]);
        assert!(parse_bounds("1,2,3").is_err());
    }

    #[test]
    fn points_roundtrip_bit_exact() {
        let dir = std::env::temp_dir().join(format!("snefy-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("pts.csv");
        let pts = vec![vec![0.1 + 0.2, -1e-300], vec![std::f64::consts::PI, 5.0]];
        write_points(&p, &pts).unwrap();
        assert_eq!(read_points(&p).unwrap(), pts);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
