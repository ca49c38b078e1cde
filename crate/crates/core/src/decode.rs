//! Decoding of the inverse-latency code: feature vectors, calibration
//! curves for concentration estimation at a known gas, and a nearest-centroid
//! gas recognizer at a known concentration.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::EventRecord;
use crate::signal::{ConcentrationLevel, GasLabel};

/// Per-sensor inverse latencies (1/s) and their sum over present sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub per_sensor: Vec<Option<f64>>,
    pub summed: f64,
}

impl FeatureVector {
    pub fn new(per_sensor: Vec<Option<f64>>) -> Result<Self> {
        if per_sensor.iter().all(Option::is_none) {
            return Err(Error::NoFeature);
        }
        if let Some(v) = per_sensor.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature {v}")));
        }
        let summed = per_sensor.iter().flatten().sum();
        Ok(Self { per_sensor, summed })
    }

    /// `true` for each sensor that produced no latency.
    pub fn missing(&self) -> Vec<bool> {
        self.per_sensor.iter().map(Option::is_none).collect()
    }

    pub fn component(&self, scope: Scope) -> Result<f64> {
        match scope {
            Scope::Summed => Ok(self.summed),
            Scope::Sensor(k) => self
                .per_sensor
                .get(k)
                .copied()
                .flatten()
                .ok_or_else(|| Error::MissingFeature(format!("sensor {}", k + 1))),
        }
    }

    /// Components used by a [`GasModel`] fitted in `space`.
    fn view(&self, space: FeatureSpace) -> Vec<Option<f64>> {
        match space {
            FeatureSpace::PerSensor => self.per_sensor.clone(),
            FeatureSpace::Summed => vec![Some(self.summed)],
        }
    }
}

pub fn extract_features(record: &EventRecord) -> Result<FeatureVector> {
    FeatureVector::new(record.sensors.iter().map(|e| e.inv_delta_t).collect())
}

/// Which feature component a calibration curve reads. Sensors are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Sensor(usize),
    Summed,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Sensor(k) => write!(f, "s{}", k + 1),
            Scope::Summed => f.write_str("summed"),
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("summed") {
            return Ok(Scope::Summed);
        }
        s.strip_prefix('s')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(|n| Scope::Sensor(n - 1))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scope {s:?}")))
    }
}

/// Which side of the calibrated range a feature fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeFlag {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub percent: f64,
    pub out_of_range: Option<RangeFlag>,
}

/// Monotone piecewise-linear map from concentration percent to feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct CalibrationCurve {
    gas: GasLabel,
    scope: Scope,
    knots: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    gas: GasLabel,
    scope: Scope,
    /// `[percent, feature]` pairs.
    knots: Vec<[f64; 2]>,
}

impl TryFrom<CurveRepr> for CalibrationCurve {
    type Error = Error;

    fn try_from(r: CurveRepr) -> Result<Self> {
        CalibrationCurve::new(
            r.gas,
            r.scope,
            r.knots.into_iter().map(|[p, v]| (p, v)).collect(),
        )
    }
}

impl From<CalibrationCurve> for CurveRepr {
    fn from(c: CalibrationCurve) -> Self {
        CurveRepr {
            gas: c.gas,
            scope: c.scope,
            knots: c.knots.into_iter().map(|(p, v)| [p, v]).collect(),
        }
    }
}

impl CalibrationCurve {
    pub fn new(gas: GasLabel, scope: Scope, knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "calibration needs at least 2 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|(p, v)| !p.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite calibration knot".into()));
        }
        for w in knots.windows(2) {
            let ((p0, v0), (p1, v1)) = (w[0], w[1]);
            if p1 <= p0 || v1 <= v0 {
                return Err(Error::NotMonotone(format!(
                    "{gas}/{scope}: knot ({p1}, {v1}) does not rise above ({p0}, {v0})"
                )));
            }
        }
        Ok(Self { gas, scope, knots })
    }

    pub fn gas(&self) -> &GasLabel {
        &self.gas
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Feature value expected at `percent`; linear beyond the end knots.
    pub fn evaluate(&self, percent: f64) -> f64 {
        let k = &self.knots;
        let j = k
            .partition_point(|&(p, _)| p <= percent)
            .clamp(1, k.len() - 1);
        let ((p0, v0), (p1, v1)) = (k[j - 1], k[j]);
        v0 + (percent - p0) * (v1 - v0) / (p1 - p0)
    }

    /// Inverse interpolation; outside the knot range the end percent is
    /// returned with a flag.
    pub fn invert(&self, value: f64) -> Estimate {
        let k = &self.knots;
        let (first, last) = (k[0], k[k.len() - 1]);
        if value < first.1 {
            return Estimate {
                percent: first.0,
                out_of_range: Some(RangeFlag::Below),
            };
        }
        if value > last.1 {
            return Estimate {
                percent: last.0,
                out_of_range: Some(RangeFlag::Above),
            };
        }
        let j = k.partition_point(|&(_, v)| v < value);
        let percent = if k[j].1 == value {
            k[j].0
        } else {
            let ((p0, v0), (p1, v1)) = (k[j - 1], k[j]);
            p0 + (value - v0) * (p1 - p0) / (v1 - v0)
        };
        Estimate {
            percent,
            out_of_range: None,
        }
    }
}

/// Knots at the per-level mean of the `scope` component. Samples lacking
/// that component are skipped.
pub fn fit_calibration(
    samples: &[(ConcentrationLevel, FeatureVector)],
    gas: GasLabel,
    scope: Scope,
) -> Result<CalibrationCurve> {
    let mut by_level: BTreeMap<ConcentrationLevel, (f64, usize)> = BTreeMap::new();
    for (level, f) in samples {
        if let Ok(v) = f.component(scope) {
            let e = by_level.entry(*level).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    if by_level.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{gas}/{scope}: calibration needs 2 distinct levels with features, got {}",
            by_level.len()
        )));
    }
    let knots = by_level
        .into_iter()
        .map(|(l, (sum, n))| (l.percent(), sum / n as f64))
        .collect();
    CalibrationCurve::new(gas, scope, knots)
}

pub fn estimate_concentration(
    curve: &CalibrationCurve,
    feature: &FeatureVector,
) -> Result<Estimate> {
    Ok(curve.invert(feature.component(curve.scope)?))
}

/// Components a [`GasModel`] is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    PerSensor,
    Summed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasClass {
    pub gas: GasLabel,
    pub count: usize,
    pub centroid: Vec<f64>,
    /// Per-component standard deviation around the centroid.
    pub dispersion: Vec<f64>,
}

/// Nearest-centroid recognizer on standardized features. Each component is
/// divided by its standard deviation over the whole training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    pub space: FeatureSpace,
    pub scale: Vec<f64>,
    pub classes: Vec<GasClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub gas: GasLabel,
    /// Standardized distance to every centroid, in label order.
    pub distances: Vec<(GasLabel, f64)>,
    /// Another centroid is as close as the winner.
    pub ambiguous: bool,
}

/// Mean and population standard deviation of the present values.
fn mean_sd<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> Option<(f64, f64)> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt()))
}

impl GasModel {
    pub fn fit(samples: &[(GasLabel, FeatureVector)], space: FeatureSpace) -> Result<Self> {
        let views: Vec<(&GasLabel, Vec<Option<f64>>)> =
            samples.iter().map(|(g, f)| (g, f.view(space))).collect();
        let dims = views.first().map_or(0, |(_, v)| v.len());
        if dims == 0 {
            return Err(Error::InsufficientSamples("no training samples".into()));
        }
        if let Some((g, v)) = views.iter().find(|(_, v)| v.len() != dims) {
            return Err(Error::Mismatch(format!(
                "{g} sample has {} components, expected {dims}",
                v.len()
            )));
        }
        let column = |rows: &[&Vec<Option<f64>>], c: usize| -> Vec<f64> {
            rows.iter().filter_map(|r| r[c]).collect()
        };
        let all: Vec<&Vec<Option<f64>>> = views.iter().map(|(_, v)| v).collect();
        let scale = (0..dims)
            .map(|c| {
                let col = column(&all, c);
                let (mean, sd) = mean_sd(col.iter()).ok_or_else(|| {
                    Error::InsufficientSamples(format!("component {} is never present", c + 1))
                })?;
                Ok(if sd > 0.0 {
                    sd
                } else if mean != 0.0 {
                    mean.abs()
                } else {
                    1.0
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut groups: BTreeMap<&GasLabel, Vec<&Vec<Option<f64>>>> = BTreeMap::new();
        for (g, v) in &views {
            groups.entry(*g).or_default().push(v);
        }
        let classes = groups
            .into_iter()
            .map(|(gas, rows)| {
                if rows.len() < 2 {
                    return Err(Error::InsufficientSamples(format!(
                        "gas {gas} has {} sample(s), need at least 2",
                        rows.len()
                    )));
                }
                let (centroid, dispersion) = (0..dims)
                    .map(|c| {
                        mean_sd(column(&rows, c).iter()).ok_or_else(|| {
                            Error::InsufficientSamples(format!(
                                "gas {gas}: component {} is never present",
                                c + 1
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .unzip();
                Ok(GasClass {
                    gas: gas.clone(),
                    count: rows.len(),
                    centroid,
                    dispersion,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            space,
            scale,
            classes,
        })
    }

    /// Standardized Euclidean distance over the components `feature` has.
    fn distance(&self, class: &GasClass, x: &[Option<f64>]) -> f64 {
        x.iter()
            .zip(&class.centroid)
            .zip(&self.scale)
            .filter_map(|((v, c), s)| v.map(|v| ((v - c) / s).powi(2)))
            .sum::<f64>()
            .sqrt()
    }
}

/// Nearest centroid; ties go to the first label in label order and are
/// flagged as ambiguous.
pub fn classify_gas(model: &GasModel, feature: &FeatureVector) -> Result<Classification> {
    if model.classes.is_empty() {
        return Err(Error::Unfitted("gas model has no classes".into()));
    }
    let x = feature.view(model.space);
    if x.len() != model.scale.len() {
        return Err(Error::Mismatch(format!(
            "feature has {} components, model expects {}",
            x.len(),
            model.scale.len()
        )));
    }
    if x.iter().all(Option::is_none) {
        return Err(Error::NoFeature);
    }
    let mut distances: Vec<(GasLabel, f64)> = model
        .classes
        .iter()
        .map(|c| (c.gas.clone(), model.distance(c, &x)))
        .collect();
    distances.sort_by(|a, b| a.0.cmp(&b.0));
    let best = distances
        .iter()
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.max(1.0);
    let mut nearest = distances.iter().filter(|(_, d)| *d - best <= tol);
    let gas = nearest.next().expect("at least one class").0.clone();
    let ambiguous = nearest.next().is_some();
    Ok(Classification {
        gas,
        distances,
        ambiguous,
    })
}
