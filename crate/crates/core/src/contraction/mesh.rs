//! Rectangular meshes over `(x, t)` with optional input axes, and the
//! parallel sweep that reduces a per-point evaluation to its extremes.

use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GUARD: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, count: usize) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            count,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidAxis {
                axis: self.name.clone(),
                reason: reason.into(),
            })
        };
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if !self.lower.is_finite() || !self.upper.is_finite() {
            return bad("bounds must be finite");
        }
        if self.lower > self.upper {
            return bad("lower bound exceeds upper bound");
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 {
            self.lower
        } else if i + 1 == self.count {
            self.upper
        } else {
            self.lower + (self.upper - self.lower) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    /// Keeps every `stride`-th grid value starting from the lower bound.
    pub fn subsample(&self, stride: usize) -> Axis {
        let stride = stride.max(1);
        let count = (self.count - 1) / stride + 1;
        Axis {
            name: self.name.clone(),
            lower: self.lower,
            upper: self.value((count - 1) * stride),
            count,
        }
    }
}

/// One mesh point. `u` is present when the mesh has input axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPoint {
    pub x: Vec<f64>,
    pub t: f64,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
}

/// Axes ordered `state…, time, input…`; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub state: Vec<Axis>,
    pub time: Axis,
    #[serde(default)]
    pub input: Vec<Axis>,
    #[serde(default = "default_guard")]
    pub guard: u64,
}

fn default_guard() -> u64 {
    DEFAULT_GUARD
}

impl MeshSpec {
    pub fn new(state: Vec<Axis>, time: Axis, input: Vec<Axis>) -> Result<Self> {
        Self::with_guard(state, time, input, DEFAULT_GUARD)
    }

    pub fn with_guard(state: Vec<Axis>, time: Axis, input: Vec<Axis>, guard: u64) -> Result<Self> {
        let mesh = Self {
            state,
            time,
            input,
            guard,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        for axis in self.state.iter().chain([&self.time]).chain(&self.input) {
            axis.validate()?;
        }
        let points = self.total_points_u128();
        if points > self.guard as u128 {
            return Err(Error::MeshTooLarge {
                points,
                guard: self.guard,
            });
        }
        Ok(())
    }

    fn total_points_u128(&self) -> u128 {
        self.state
            .iter()
            .chain([&self.time])
            .chain(&self.input)
            .map(|a| a.count as u128)
            .product()
    }

    pub fn total_points(&self) -> u64 {
        self.total_points_u128() as u64
    }

    /// Number of `(x, t)` points.
    pub fn base_points(&self) -> u64 {
        self.state.iter().map(|a| a.count as u64).product::<u64>() * self.time.count as u64
    }

    pub fn input_points(&self) -> u64 {
        self.input.iter().map(|a| a.count as u64).product()
    }

    pub fn subsample(&self, state_stride: usize, time_stride: usize, input_stride: usize) -> Self {
        Self {
            state: self.state.iter().map(|a| a.subsample(state_stride)).collect(),
            time: self.time.subsample(time_stride),
            input: self.input.iter().map(|a| a.subsample(input_stride)).collect(),
            guard: self.guard,
        }
    }

    fn decode(axes: &[Axis], mut index: u64) -> Vec<f64> {
        let mut out = vec![0.0; axes.len()];
        for (k, axis) in axes.iter().enumerate().rev() {
            let c = axis.count as u64;
            out[k] = axis.value((index % c) as usize);
            index /= c;
        }
        out
    }

    /// The point with lexicographic index `index`.
    pub fn point(&self, index: u64) -> MeshPoint {
        let inner = self.input_points();
        let base = index / inner;
        let (x, t) = self.base_point(base);
        MeshPoint {
            x,
            t,
            u: (!self.input.is_empty()).then(|| Self::decode(&self.input, index % inner)),
        }
    }

    fn base_point(&self, base: u64) -> (Vec<f64>, f64) {
        let nt = self.time.count as u64;
        (
            Self::decode(&self.state, base / nt),
            self.time.value((base % nt) as usize),
        )
    }
}

/// Named presets of the reference example's meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshPreset {
    /// `x ∈ [−2, 2]⁴` at 0.2, `t ∈ [0, 3.9]` at 0.1: 7,779,240 points.
    POpt,
    /// Every 5th point of [`MeshPreset::POpt`] on each axis: 5⁴ × 8.
    POptDesk,
    /// `x ∈ [−1.6, 1.6]⁴` at 0.8, `t ∈ [0.5, 3.5]` at 1, `U ∈ [−0.6, 0.6]⁶`
    /// at 0.2: 294,122,500 points.
    Gk,
    /// `x` every 2nd, `t` all, `U` every 3rd point of [`MeshPreset::Gk`]:
    /// 3⁴ × 4 × 3⁶.
    GkDesk,
    /// `z ∈ [−3, 3]⁶` at 1, `t ∈ {0, 3.9}`.
    Q,
    /// `z ∈ [−3, 3]⁶` at 3, `t ∈ {0, 3.9}`.
    QDesk,
}

impl MeshPreset {
    pub fn build(self) -> MeshSpec {
        let xs = |lo: f64, hi: f64, c: usize| (1..=4).map(|i| Axis::new(format!("x{i}"), lo, hi, c)).collect::<Vec<_>>();
        let us = |lo: f64, hi: f64, c: usize, name: &str| {
            (1..=6)
                .map(|i| Axis::new(format!("{name}{i}"), lo, hi, c))
                .collect::<Vec<_>>()
        };
        let p_opt = || MeshSpec {
            state: xs(-2.0, 2.0, 21),
            time: Axis::new("t", 0.0, 3.9, 40),
            input: vec![],
            guard: DEFAULT_GUARD,
        };
        let gk = || MeshSpec {
            state: xs(-1.6, 1.6, 5),
            time: Axis::new("t", 0.5, 3.5, 4),
            input: us(-0.6, 0.6, 7, "U"),
            guard: DEFAULT_GUARD,
        };
        let q = || MeshSpec {
            state: us(-3.0, 3.0, 7, "z"),
            time: Axis::new("t", 0.0, 3.9, 2),
            input: vec![],
            guard: DEFAULT_GUARD,
        };
        match self {
            MeshPreset::POpt => p_opt(),
            MeshPreset::POptDesk => p_opt().subsample(5, 5, 1),
            MeshPreset::Gk => gk(),
            MeshPreset::GkDesk => gk().subsample(2, 1, 3),
            MeshPreset::Q => q(),
            MeshPreset::QDesk => q().subsample(3, 1, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeshPreset::POpt => "mesh-p-opt",
            MeshPreset::POptDesk => "mesh-p-opt-desk",
            MeshPreset::Gk => "mesh-gk",
            MeshPreset::GkDesk => "mesh-gk-desk",
            MeshPreset::Q => "mesh-q",
            MeshPreset::QDesk => "mesh-q-desk",
        }
    }
}

impl FromStr for MeshPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mesh-p-opt" => MeshPreset::POpt,
            "mesh-p-opt-desk" => MeshPreset::POptDesk,
            "mesh-gk" => MeshPreset::Gk,
            "mesh-gk-desk" => MeshPreset::GkDesk,
            "mesh-q" => MeshPreset::Q,
            "mesh-q-desk" => MeshPreset::QDesk,
            other => return Err(Error::Config(format!("unknown mesh preset `{other}`"))),
        })
    }
}

/// Running maxima of the per-point statistics with their (first) argmax.
#[derive(Debug, Clone)]
pub(crate) struct SweepOutcome {
    pub maxima: Vec<(f64, u64)>,
    pub points: u64,
    pub failure: Option<(u64, Error)>,
}

impl SweepOutcome {
    fn empty(stats: usize) -> Self {
        Self {
            maxima: vec![(f64::NEG_INFINITY, u64::MAX); stats],
            points: 0,
            failure: None,
        }
    }

    fn record(&mut self, index: u64, values: &[f64]) {
        self.points += 1;
        for (slot, &v) in self.maxima.iter_mut().zip(values) {
            if v > slot.0 || (v == slot.0 && index < slot.1) {
                *slot = (v, index);
            }
        }
    }

    fn fail(&mut self, index: u64, err: Error) {
        if self.failure.as_ref().is_none_or(|(i, _)| index < *i) {
            self.failure = Some((index, err));
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.points += other.points;
        for (a, b) in self.maxima.iter_mut().zip(other.maxima) {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                *a = b;
            }
        }
        if let Some((i, e)) = other.failure {
            self.fail(i, e);
        }
        self
    }
}

/// Evaluates every mesh point and reduces to per-statistic maxima.
///
/// Rows of `(x, t)` points sharing `x` are processed in `t` order by one
/// worker; `base` receives the row's warm-start slot, so Newton chains along
/// `t`. For each `(x, t)` the `inner` closure runs over every input point
/// (or once with `None` when the mesh has no input axes). A failing point is
/// recorded and skipped.
pub(crate) fn sweep<C, B, I>(mesh: &MeshSpec, stats: usize, base: B, inner: I) -> SweepOutcome
where
    B: Fn(&mut Option<DVector<f64>>, &DVector<f64>, f64) -> Result<C> + Sync,
    I: Fn(&C, &DVector<f64>, f64, Option<&DVector<f64>>) -> Result<Vec<f64>> + Sync,
{
    let nt = mesh.time.count as u64;
    let rows = mesh.base_points() / nt;
    let n_inner = mesh.input_points();
    let has_input = !mesh.input.is_empty();
    (0..rows)
        .into_par_iter()
        .fold(
            || SweepOutcome::empty(stats),
            |mut acc, row| {
                let x = DVector::from_vec(MeshSpec::decode(&mesh.state, row));
                let mut warm = None;
                for it in 0..nt {
                    let t = mesh.time.value(it as usize);
                    let first = (row * nt + it) * n_inner;
                    let ctx = match base(&mut warm, &x, t) {
                        Ok(c) => c,
                        Err(e) => {
                            warm = None;
                            acc.fail(first, e);
                            continue;
                        }
                    };
                    for j in 0..n_inner {
                        let u = has_input.then(|| DVector::from_vec(MeshSpec::decode(&mesh.input, j)));
                        match inner(&ctx, &x, t, u.as_ref()) {
                            Ok(vals) if vals.iter().all(|v| !v.is_nan()) => acc.record(first + j, &vals),
                            Ok(_) => acc.fail(first + j, Error::Config("NaN in certificate evaluation".into())),
                            Err(e) => acc.fail(first + j, e),
                        }
                    }
                }
                acc
            },
        )
        .reduce(|| SweepOutcome::empty(stats), SweepOutcome::merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_sizes() {
        assert_eq!(MeshPreset::POpt.build().total_points(), 7_779_240);
        assert_eq!(MeshPreset::Gk.build().total_points(), 294_122_500);
        let desk = MeshPreset::POptDesk.build();
        assert_eq!(desk.total_points(), 5 * 5 * 5 * 5 * 8);
        assert_eq!(desk.state[0].values(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let t = desk.time.values();
        assert_eq!(t.len(), 8);
        assert!((t[7] - 3.5).abs() < 1e-12);
        let gk = MeshPreset::GkDesk.build();
        assert_eq!(gk.total_points(), 81 * 4 * 729);
        assert_eq!(gk.input[0].values(), vec![-0.6, 0.0, 0.6]);
    }

    #[test]
    fn axis_spacing_matches_interval() {
        let x = MeshPreset::POpt.build().state[0].values();
        assert!((x[1] - x[0] - 0.2).abs() < 1e-12);
        assert_eq!(x[20], 2.0);
        let u = MeshPreset::Gk.build().input[0].values();
        assert!((u[1] - u[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn guard_and_axis_validation() {
        let big = MeshSpec::with_guard(
            vec![Axis::new("x", 0.0, 1.0, 1000); 2],
            Axis::new("t", 0.0, 1.0, 1000),
            vec![],
            1_000_000,
        );
        assert!(matches!(big, Err(Error::MeshTooLarge { points: 1_000_000_000, .. })));
        let bad = MeshSpec::new(vec![Axis::new("x", 0.0, f64::NAN, 2)], Axis::new("t", 0.0, 1.0, 1), vec![]);
        assert!(matches!(bad, Err(Error::InvalidAxis { .. })));
        let zero = MeshSpec::new(vec![Axis::new("x", 0.0, 1.0, 0)], Axis::new("t", 0.0, 1.0, 1), vec![]);
        assert!(zero.is_err());
    }

    #[test]
    fn point_decoding_is_lexicographic() {
        let mesh = MeshSpec::new(
            vec![Axis::new("x1", 0.0, 1.0, 2), Axis::new("x2", 0.0, 2.0, 3)],
            Axis::new("t", 0.0, 1.0, 2),
            vec![Axis::new("u", -1.0, 1.0, 2)],
        )
        .unwrap();
        assert_eq!(mesh.total_points(), 24);
        let p = mesh.point(0);
        assert_eq!((p.x, p.t, p.u), (vec![0.0, 0.0], 0.0, Some(vec![-1.0])));
        let p = mesh.point(23);
        assert_eq!((p.x, p.t, p.u), (vec![1.0, 2.0], 1.0, Some(vec![1.0])));
        // index = ((x1·3 + x2)·2 + t)·2 + u
        let p = mesh.point(((1 * 3 + 1) * 2 + 0) * 2 + 1);
        assert_eq!((p.x, p.t, p.u), (vec![1.0, 1.0], 0.0, Some(vec![1.0])));
    }

    #[test]
    fn sweep_finds_max_and_argmax() {
        let mesh = MeshSpec::new(
            vec![Axis::new("x1", -1.0, 1.0, 5), Axis::new("x2", -1.0, 1.0, 5)],
            Axis::new("t", 0.0, 1.0, 3),
            vec![Axis::new("u", 0.0, 1.0, 2)],
        )
        .unwrap();
        let out = sweep(
            &mesh,
            2,
            |_, _, _| Ok(()),
            |_, x, t, u| {
                let u = u.unwrap()[0];
                Ok(vec![-(x[0] - 0.5).powi(2) - x[1].powi(2) + t + u, -t])
            },
        );
        assert_eq!(out.points, 150);
        assert!(out.failure.is_none());
        let (v, i) = out.maxima[0];
        assert!((v - 2.0).abs() < 1e-12);
        let p = mesh.point(i);
        assert_eq!((p.x, p.t, p.u), (vec![0.5, 0.0], 1.0, Some(vec![1.0])));
        // tie on -t = 0 resolved to the first index
        assert_eq!(out.maxima[1], (-0.0, 0));
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let mesh = MeshSpec::new(vec![Axis::new("x", 0.0, 3.0, 4)], Axis::new("t", 0.0, 1.0, 2), vec![]).unwrap();
        let out = sweep(
            &mesh,
            1,
            |_, x, t| {
                if x[0] == 2.0 && t == 1.0 {
                    Err(Error::NoConvergence { iterations: 50, residual: 1.0, t })
                } else {
                    Ok(())
                }
            },
            |_, x, _, _| Ok(vec![x[0]]),
        );
        assert_eq!(out.points, 7);
        let (idx, _) = out.failure.unwrap();
        assert_eq!(mesh.point(idx).x, vec![2.0]);
        assert_eq!(out.maxima[0].0, 3.0);
    }
}
