//! Piecewise-linear 1D transfer functions and sets of disjoint basic TFs.

use serde::{Deserialize, Serialize};

use crate::error::{DvrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub value: f64,
    pub rgb: [f64; 3],
    pub opacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    #[serde(default)]
    pub name: String,
    pub points: Vec<ControlPoint>,
}

impl TransferFunction {
    pub fn new(name: impl Into<String>, points: Vec<ControlPoint>) -> Result<Self> {
        let tf = TransferFunction {
            name: name.into(),
            points,
        };
        tf.validate()?;
        Ok(tf)
    }

    /// Trapezoidal opacity bump over `[lo, hi]` with flat top on the middle
    /// half, single color.
    pub fn bump(name: impl Into<String>, lo: f64, hi: f64, rgb: [f64; 3], opacity: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(DvrError::InvalidTf(format!("empty range [{lo}, {hi}]")));
        }
        let q = 0.25 * (hi - lo);
        let p = |value, opacity| ControlPoint { value, rgb, opacity };
        TransferFunction::new(
            name,
            vec![p(lo, 0.0), p(lo + q, opacity), p(hi - q, opacity), p(hi, 0.0)],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(DvrError::InvalidTf("no control points".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1].value >= w[0].value) {
                return Err(DvrError::InvalidTf("control points not sorted by value".into()));
            }
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.opacity) {
                return Err(DvrError::InvalidTf(format!("opacity {} outside [0,1]", p.opacity)));
            }
            if p.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(DvrError::InvalidTf(format!("color {:?} outside [0,1]", p.rgb)));
            }
        }
        Ok(())
    }

    /// `(rgb, opacity)` at `v`; opacity is 0 outside the control-point range.
    pub fn lookup(&self, v: f64) -> ([f64; 3], f64) {
        let pts = &self.points;
        let first = &pts[0];
        let last = &pts[pts.len() - 1];
        if v < first.value || v > last.value {
            return ([0.0; 3], 0.0);
        }
        let i = pts.partition_point(|p| p.value <= v);
        if i == 0 {
            return (first.rgb, first.opacity);
        }
        if i >= pts.len() {
            return (last.rgb, last.opacity);
        }
        let (a, b) = (&pts[i - 1], &pts[i]);
        let t = if b.value > a.value { (v - a.value) / (b.value - a.value) } else { 0.0 };
        let mut rgb = [0.0; 3];
        for c in 0..3 {
            rgb[c] = a.rgb[c] + (b.rgb[c] - a.rgb[c]) * t;
        }
        (rgb, a.opacity + (b.opacity - a.opacity) * t)
    }

    /// Value interval where the opacity is nonzero.
    pub fn support(&self) -> Option<(f64, f64)> {
        let pts = &self.points;
        let mut lo = None;
        let mut hi = None;
        for (i, p) in pts.iter().enumerate() {
            if p.opacity > 0.0 {
                let left = if i > 0 { pts[i - 1].value } else { p.value };
                let right = if i + 1 < pts.len() { pts[i + 1].value } else { p.value };
                lo = Some(lo.map_or(left, |l: f64| l.min(left)));
                hi = Some(hi.map_or(right, |h: f64| h.max(right)));
            }
        }
        lo.zip(hi)
    }

    /// Concatenated control points of disjoint TFs.
    pub fn concat(tfs: &[TransferFunction]) -> Result<Self> {
        let mut points: Vec<ControlPoint> = tfs.iter().flat_map(|t| t.points.iter().copied()).collect();
        points.sort_by(|a, b| a.value.total_cmp(&b.value));
        let names: Vec<&str> = tfs.iter().map(|t| t.name.as_str()).collect();
        TransferFunction::new(names.join("+"), points)
    }
}

/// Union of basic TFs: opacities add, color is the opacity-weighted mean
/// (the single active bump's color when supports are disjoint).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfSet {
    pub tfs: Vec<TransferFunction>,
}

impl TfSet {
    pub fn new(tfs: Vec<TransferFunction>) -> Self {
        TfSet { tfs }
    }

    pub fn single(tf: TransferFunction) -> Self {
        TfSet { tfs: vec![tf] }
    }

    pub fn lookup(&self, v: f64) -> ([f64; 3], f64) {
        let mut rgb = [0.0; 3];
        let mut total = 0.0;
        let mut active = 0;
        let mut last = [0.0; 3];
        for tf in &self.tfs {
            let (c, o) = tf.lookup(v);
            if o > 0.0 {
                for k in 0..3 {
                    rgb[k] += o * c[k];
                }
                total += o;
                active += 1;
                last = c;
            }
        }
        // a single active bump keeps its color exactly
        if active == 1 {
            return (last, total.min(1.0));
        }
        if total > 0.0 {
            for c in &mut rgb {
                *c /= total;
            }
        }
        (rgb, total.min(1.0))
    }

    /// True when no two supports overlap (touching endpoints allowed).
    pub fn is_disjoint(&self) -> bool {
        let mut s: Vec<(f64, f64)> = self.tfs.iter().filter_map(TransferFunction::support).collect();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        s.windows(2).all(|w| w[1].0 >= w[0].1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_lookup() {
        let tf = TransferFunction::bump("a", 0.2, 0.6, [1.0, 0.0, 0.0], 0.8).unwrap();
        assert_eq!(tf.lookup(0.1).1, 0.0);
        assert!((tf.lookup(0.4).1 - 0.8).abs() < 1e-12);
        assert!((tf.lookup(0.25).1 - 0.4).abs() < 1e-12);
        assert_eq!(tf.support(), Some((0.2, 0.6)));
    }

    #[test]
    fn disjointness() {
        let a = TransferFunction::bump("a", 0.1, 0.3, [1.0, 0.0, 0.0], 0.5).unwrap();
        let b = TransferFunction::bump("b", 0.3, 0.5, [0.0, 1.0, 0.0], 0.5).unwrap();
        let c = TransferFunction::bump("c", 0.25, 0.5, [0.0, 1.0, 0.0], 0.5).unwrap();
        assert!(TfSet::new(vec![a.clone(), b]).is_disjoint());
        assert!(!TfSet::new(vec![a, c]).is_disjoint());
    }

    #[test]
    fn unsorted_points_rejected() {
        let p = |value| ControlPoint { value, rgb: [0.0; 3], opacity: 0.1 };
        assert!(TransferFunction::new("x", vec![p(0.5), p(0.2)]).is_err());
    }
}
