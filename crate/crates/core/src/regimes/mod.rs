//! Regime analysis: how performance on a target domain grows with the number
//! of target sampling units for three strategies (use the source model, refit
//! it, or train on target data only), and where those curves cross.

mod spline;
mod subsample;

pub use spline::{Direction, MonotoneSpline};
pub use subsample::{
    default_sizes, nested_subsets, subsample_curve, StrategyRunner, SubsampleOutput, TargetOnlySpec, TargetTrainer,
};

use crate::error::{Error, Result};
use crate::selection::Metric;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SourceOnly,
    Refit,
    TargetOnly,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::SourceOnly => "source_only",
            Strategy::Refit => "refit",
            Strategy::TargetOnly => "target_only",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source_only" => Ok(Strategy::SourceOnly),
            "refit" => Ok(Strategy::Refit),
            "target_only" => Ok(Strategy::TargetOnly),
            _ => Err(Error::Data(format!("unknown strategy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

impl Orientation {
    pub fn of(metric: Metric) -> Self {
        if metric.lower_is_better() {
            Orientation::LowerBetter
        } else {
            Orientation::HigherBetter
        }
    }

    /// Maps a metric value to a loss (lower is better).
    fn loss(self, v: f64) -> f64 {
        match self {
            Orientation::LowerBetter => v,
            Orientation::HigherBetter => -v,
        }
    }

    fn favorable(self) -> Direction {
        match self {
            Orientation::LowerBetter => Direction::Decreasing,
            Orientation::HigherBetter => Direction::Increasing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub strategy: Strategy,
    pub seed: u64,
    pub n: usize,
    pub metric: Metric,
    pub value: f64,
}

/// Median curve and 10%/90% band of one strategy across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCurve {
    pub strategy: Strategy,
    pub orientation: Orientation,
    pub sizes: Vec<usize>,
    pub median: Vec<f64>,
    pub q10: Vec<f64>,
    pub q90: Vec<f64>,
    spline: MonotoneSpline,
}

impl StrategyCurve {
    /// Aggregates values per size and fits the monotone median curve.
    pub fn fit(strategy: Strategy, orientation: Orientation, values: &[(usize, f64)]) -> Result<Self> {
        let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for &(n, v) in values {
            if n == 0 || !v.is_finite() {
                return Err(Error::Data(format!("invalid curve point (n = {n}, value = {v})")));
            }
            by_n.entry(n).or_default().push(v);
        }
        let (mut sizes, mut median, mut q10, mut q90) = (vec![], vec![], vec![], vec![]);
        for (n, mut vs) in by_n {
            vs.sort_by(f64::total_cmp);
            sizes.push(n);
            median.push(quantile(&vs, 0.5));
            q10.push(quantile(&vs, 0.1));
            q90.push(quantile(&vs, 0.9));
        }
        let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let spline = MonotoneSpline::fit(&xs, &median, orientation.favorable())
            .map_err(|e| Error::Data(format!("{} curve: {e}", strategy.name())))?;
        Ok(StrategyCurve {
            strategy,
            orientation,
            sizes,
            median,
            q10,
            q90,
            spline,
        })
    }

    /// Fitted median at `n` (monotone in the favorable direction).
    pub fn eval(&self, n: f64) -> f64 {
        self.spline.eval(n.ln())
    }

    pub fn spline(&self) -> &MonotoneSpline {
        &self.spline
    }

    fn loss_at(&self, x: f64) -> f64 {
        self.orientation.loss(self.spline.eval(x))
    }

    /// 10–90% band width at `log n`, linear between sizes and flat outside.
    fn band_width(&self, x: f64) -> f64 {
        let widths: Vec<f64> = self.q10.iter().zip(&self.q90).map(|(a, b)| (b - a).abs()).collect();
        let xs: Vec<f64> = self.sizes.iter().map(|&n| (n as f64).ln()).collect();
        if x <= xs[0] {
            return widths[0];
        }
        if x >= xs[xs.len() - 1] {
            return widths[widths.len() - 1];
        }
        let k = xs.partition_point(|&v| v <= x) - 1;
        let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
        widths[k] + t * (widths[k + 1] - widths[k])
    }

    fn log_range(&self) -> (f64, f64) {
        self.spline.x_range()
    }
}

/// Type-7 (linear) quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Curves of all strategies present in a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeCurves {
    pub metric: Metric,
    pub curves: Vec<StrategyCurve>,
}

impl RegimeCurves {
    pub fn from_points(points: &[CurvePoint]) -> Result<Self> {
        let metric = points
            .first()
            .ok_or_else(|| Error::Data("no curve points".into()))?
            .metric;
        if points.iter().any(|p| p.metric != metric) {
            return Err(Error::Data("curve points mix different metrics".into()));
        }
        let mut by_strategy: BTreeMap<Strategy, Vec<(usize, f64)>> = BTreeMap::new();
        for p in points {
            by_strategy.entry(p.strategy).or_default().push((p.n, p.value));
        }
        let curves = by_strategy
            .into_iter()
            .map(|(s, v)| StrategyCurve::fit(s, Orientation::of(metric), &v))
            .collect::<Result<_>>()?;
        Ok(RegimeCurves { metric, curves })
    }

    pub fn get(&self, strategy: Strategy) -> Option<&StrategyCurve> {
        self.curves.iter().find(|c| c.strategy == strategy)
    }
}

/// Rule for how close two curves must be to count as matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    /// Fraction of the compared strategy's 10–90% band width at that n.
    BandFraction(f64),
    Absolute(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::BandFraction(0.25)
    }
}

impl Tolerance {
    fn at(self, curve: &StrategyCurve, x: f64) -> f64 {
        match self {
            Tolerance::BandFraction(f) => f * curve.band_width(x),
            Tolerance::Absolute(t) => t,
        }
    }

    fn validate(self) -> Result<()> {
        let v = match self {
            Tolerance::BandFraction(v) | Tolerance::Absolute(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("tolerance must be finite and non-negative, got {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingFlag {
    /// Within the observed sizes.
    InRange,
    /// Beyond the largest observed size (up to the extrapolation cap).
    Extrapolated,
    /// The condition already holds at the smallest observed size.
    AtBoundary,
}

impl CrossingFlag {
    pub fn name(self) -> &'static str {
        match self {
            CrossingFlag::InRange => "in_range",
            CrossingFlag::Extrapolated => "extrapolated",
            CrossingFlag::AtBoundary => "at_boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub n: f64,
    pub flag: CrossingFlag,
}

/// Curves are extrapolated up to this multiple of the largest observed size.
pub const EXTRAPOLATION_CAP: f64 = 4.0;
const MESH_REFINEMENT: usize = 16;

/// ○: refit first beats source-only by more than τ. □: target-only first
/// matches refit within τ. ✕: target-only reaches the source-only level.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPoints {
    pub circle: Option<Crossing>,
    pub square: Option<Crossing>,
    pub cross: Option<Crossing>,
    pub tolerance: Tolerance,
}

#[derive(Serialize)]
struct TransitionReport {
    circle: Option<f64>,
    square: Option<f64>,
    cross: Option<f64>,
    flags: BTreeMap<&'static str, &'static str>,
    tolerance: Tolerance,
}

impl TransitionPoints {
    pub fn to_json(&self) -> Result<String> {
        let flag = |c: &Option<Crossing>| c.map_or("absent", |c| c.flag.name());
        let report = TransitionReport {
            circle: self.circle.map(|c| c.n),
            square: self.square.map(|c| c.n),
            cross: self.cross.map(|c| c.n),
            flags: BTreeMap::from([
                ("circle", flag(&self.circle)),
                ("square", flag(&self.square)),
                ("cross", flag(&self.cross)),
            ]),
            tolerance: self.tolerance,
        };
        Ok(serde_json::to_string_pretty(&report)?)
    }
}

/// Evaluation grid on `log n`: each interval between observed sizes split
/// evenly, then the same number of steps out to the extrapolation cap.
fn log_mesh(knots: &[f64]) -> Vec<f64> {
    let mut knots = knots.to_vec();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut mesh = vec![knots[0]];
    for w in knots.windows(2) {
        for s in 1..=MESH_REFINEMENT {
            mesh.push(w[0] + (w[1] - w[0]) * s as f64 / MESH_REFINEMENT as f64);
        }
    }
    let last = knots[knots.len() - 1];
    for s in 1..=MESH_REFINEMENT {
        mesh.push(last + EXTRAPOLATION_CAP.ln() * s as f64 / MESH_REFINEMENT as f64);
    }
    mesh
}

/// First root of `gap` on the mesh from position `start` on, where the
/// condition is `gap < 0` (strict) or `gap ≤ 0`. The root is located by
/// linear interpolation in `log n` between neighboring mesh points.
fn first_crossing(mesh: &[f64], start: usize, strict: bool, x_max: f64, gap: impl Fn(f64) -> f64) -> Option<Crossing> {
    let holds = |g: f64| if strict { g < 0.0 } else { g <= 0.0 };
    let mut prev: Option<(f64, f64)> = None;
    for &x in &mesh[start..] {
        let g = gap(x);
        if holds(g) {
            let x_root = match prev {
                None => x,
                Some((xp, gp)) if gp > g => xp + gp / (gp - g) * (x - xp),
                Some(_) => x,
            };
            let flag = if prev.is_none() && start == 0 {
                CrossingFlag::AtBoundary
            } else if x_root <= x_max + 1e-12 {
                CrossingFlag::InRange
            } else {
                CrossingFlag::Extrapolated
            };
            return Some(Crossing {
                n: snap(x_root.exp()),
                flag,
            });
        }
        prev = Some((x, g));
    }
    None
}

/// Removes the rounding of `exp(ln n)` so observed sizes come back exact.
fn snap(n: f64) -> f64 {
    if (n - n.round()).abs() < 1e-9 * n {
        n.round()
    } else {
        n
    }
}

/// Reads the three transition points off the fitted median curves.
pub fn transition_points(curves: &RegimeCurves, tolerance: Tolerance) -> Result<TransitionPoints> {
    tolerance.validate()?;
    let get = |s: Strategy| {
        curves
            .get(s)
            .ok_or_else(|| Error::Data(format!("no {} curve", s.name())))
    };
    let source = get(Strategy::SourceOnly)?;
    let refit = get(Strategy::Refit)?;
    let target = get(Strategy::TargetOnly)?;
    let mut knots = Vec::new();
    for c in [source, refit, target] {
        knots.extend(c.sizes.iter().map(|&n| (n as f64).ln()));
    }
    let mut mesh = log_mesh(&knots);
    let x_max = mesh[mesh.len() - 1 - MESH_REFINEMENT];

    let circle = first_crossing(&mesh, 0, true, x_max, |x| {
        refit.loss_at(x) - (source.loss_at(x) - tolerance.at(refit, x))
    });
    let square_gap = |x: f64| target.loss_at(x) - (refit.loss_at(x) + tolerance.at(target, x));
    // □ is searched from ○ on so that ○ ≤ □.
    let square = match circle {
        None => first_crossing(&mesh, 0, false, x_max, square_gap),
        Some(c) => {
            let xc = c.n.ln();
            let pos = mesh.partition_point(|&x| x < xc);
            mesh.insert(pos, xc);
            let found = first_crossing(&mesh, pos, false, x_max, square_gap);
            mesh.remove(pos);
            found.map(|s| if s.n <= c.n { c } else { s })
        }
    };
    let cross = first_crossing(&mesh, 0, false, x_max, |x| target.loss_at(x) - source.loss_at(x));
    Ok(TransitionPoints {
        circle,
        square,
        cross,
        tolerance,
    })
}

/// Smallest n at which the median target-only curve reaches `reference`,
/// searched up to the extrapolation cap.
pub fn patient_equivalent(curve: &StrategyCurve, reference: f64) -> Option<Crossing> {
    let (lo, hi) = curve.log_range();
    let knots: Vec<f64> = curve.sizes.iter().map(|&n| (n as f64).ln()).collect();
    let mesh = log_mesh(&knots);
    debug_assert!(mesh[0] == lo);
    let target = curve.orientation.loss(reference);
    first_crossing(&mesh, 0, false, hi, |x| curve.loss_at(x) - target)
}

pub const CURVE_CSV_HEADER: [&str; 5] = ["strategy", "seed", "n", "metric", "value"];

pub fn write_curve_csv<W: std::io::Write>(points: &[CurvePoint], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Data(e.to_string());
    out.write_record(CURVE_CSV_HEADER).map_err(csv_err)?;
    for p in points {
        out.write_record([
            p.strategy.name().to_string(),
            p.seed.to_string(),
            p.n.to_string(),
            p.metric.name().to_string(),
            p.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: std::io::Read>(reader: R) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Data(format!("line 1: {e}")))?;
    if header.iter().collect::<Vec<_>>() != CURVE_CSV_HEADER {
        return Err(Error::Data(format!(
            "line 1: expected header {}",
            CURVE_CSV_HEADER.join(",")
        )));
    }
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Data(format!("line {line}: invalid {what}"));
        let metric = match &record[3] {
            "mse" => Metric::Mse,
            "nll" => Metric::Nll,
            "auprc" => Metric::Auprc,
            _ => return Err(bad("metric")),
        };
        let n: usize = record[2].trim().parse().map_err(|_| bad("n"))?;
        let value: f64 = record[4].trim().parse().map_err(|_| bad("value"))?;
        if n == 0 || !value.is_finite() {
            return Err(bad("point"));
        }
        points.push(CurvePoint {
            strategy: record[0].parse().map_err(|_| bad("strategy"))?,
            seed: record[1].trim().parse().map_err(|_| bad("seed"))?,
            n,
            metric,
            value,
        });
    }
    Ok(points)
}
