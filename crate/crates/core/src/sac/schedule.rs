use std::sync::Arc;

use nalgebra::DVector;

use crate::error::Result;
use crate::models::Reference;

/// Control used wherever no action is scheduled.
#[derive(Clone, Debug)]
pub enum Nominal {
    Constant(DVector<f64>),
    /// Feedforward taken from a reference trajectory.
    Feedforward(Arc<dyn Reference>),
}

impl Nominal {
    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        match self {
            Nominal::Constant(u) => Ok(u.clone()),
            Nominal::Feedforward(r) => Ok(r.at(t)?.u_ff),
        }
    }
}

/// A constant control on `[start, end)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub u: DVector<f64>,
}

impl Segment {
    pub fn new(start: f64, end: f64, u: DVector<f64>) -> Self {
        Self { start, end, u }
    }

    /// Part of the segment inside `[a, b)`, if nonempty.
    pub fn clip(&self, a: f64, b: f64) -> Option<Segment> {
        let (s, e) = (self.start.max(a), self.end.min(b));
        (e > s).then(|| Segment::new(s, e, self.u.clone()))
    }
}

/// Nominal control overridden on a set of disjoint segments.
#[derive(Clone, Debug)]
pub struct ControlSchedule {
    nominal: Nominal,
    segments: Vec<Segment>,
}

impl ControlSchedule {
    pub fn new(nominal: Nominal) -> Self {
        Self { nominal, segments: Vec::new() }
    }

    pub fn nominal(&self) -> &Nominal {
        &self.nominal
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Adds a segment, overriding whatever it overlaps.
    pub fn with(mut self, seg: Segment) -> Self {
        if seg.end <= seg.start {
            return self;
        }
        let mut kept = Vec::with_capacity(self.segments.len() + 2);
        for s in self.segments.drain(..) {
            kept.extend(s.clip(f64::NEG_INFINITY, seg.start));
            kept.extend(s.clip(seg.end, f64::INFINITY));
        }
        kept.push(seg);
        kept.sort_by(|a, b| a.start.total_cmp(&b.start));
        self.segments = kept;
        self
    }

    fn find(&self, pred: impl Fn(&Segment) -> bool) -> Option<&Segment> {
        self.segments.iter().find(|s| pred(s))
    }

    /// Right-continuous value at `t`.
    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        match self.find(|s| s.start <= t && t < s.end) {
            Some(s) => Ok(s.u.clone()),
            None => self.nominal.at(t),
        }
    }

    /// Left limit at `t`.
    pub fn at_left(&self, t: f64) -> Result<DVector<f64>> {
        match self.find(|s| s.start < t && t <= s.end) {
            Some(s) => Ok(s.u.clone()),
            None => self.nominal.at(t),
        }
    }

    /// Segment endpoints strictly inside `(a, b)`.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out: Vec<f64> =
            self.segments.iter().flat_map(|s| [s.start, s.end]).filter(|&x| x > a && x < b).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}
