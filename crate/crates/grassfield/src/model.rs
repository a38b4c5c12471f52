//! Model abstraction: synthetic analytic field families and a file-exchange
//! coupling for external batch solvers.
//!
//! The synthetic families build fields from a discrete sine basis
//! `u_q[a] = sin(pi q (a+1) / (n_f + 1))` (orthogonal columns, normalized),
//! with smoothly varying modal amplitudes. The transition family switches
//! the active mode set across an analytic curve `xi_1 = g(xi_0)` through a
//! steep logistic blend; each mode pair is rotated rather than crossfaded,
//! so the response rank is constant everywhere while the subspace turns by a
//! right angle across the curve.
//!
//! Synthetic evaluation is pure and deterministic in xi. The file-exchange
//! model supports multiple in-flight requests with distinct monotone ids.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::mesh::ParamPoint;
use crate::snapshot::{FieldSnapshot, SnapshotError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter point has dimension {0}, model expects {1}")]
    DimensionMismatch(usize, usize),
    #[error("model needs 2*modes <= min(n_f, m_f); got modes {0} and shape ({1}, {2})")]
    TooManyModes(usize, usize, usize),
    #[error("transition model needs at least 2 parameter dimensions")]
    TransitionNeedsTwoDims,
    #[error("timed out after {0:?} waiting for solver response {1}")]
    ExchangeTimeout(Duration, PathBuf),
    #[error("malformed snapshot response: {0}")]
    MalformedSnapshot(#[from] IoError),
    #[error("exchange request write failed: {0}")]
    RequestWrite(std::io::Error),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

fn default_modes() -> usize {
    3
}
fn default_width() -> f64 {
    0.02
}
fn default_curve_offset() -> f64 {
    0.4
}
fn default_curve_slope() -> f64 {
    0.2
}
fn default_band_half_width() -> f64 {
    0.1
}
fn default_timeout_secs() -> u64 {
    3600
}
fn default_poll_millis() -> u64 {
    50
}

/// Model family selection plus its kind-specific parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    SyntheticSmooth {
        dim: usize,
        n_f: usize,
        m_f: usize,
        #[serde(default = "default_modes")]
        modes: usize,
    },
    SyntheticTransition {
        dim: usize,
        n_f: usize,
        m_f: usize,
        #[serde(default = "default_modes")]
        modes: usize,
        /// Length scale of the logistic blend around the transition curve.
        #[serde(default = "default_width")]
        width: f64,
        /// Transition curve xi_1 = offset + slope * xi_0.
        #[serde(default = "default_curve_offset")]
        curve_offset: f64,
        #[serde(default = "default_curve_slope")]
        curve_slope: f64,
        /// Half-width of the analytic transition band used by density
        /// diagnostics; the defaults give a band of measure 0.2.
        #[serde(default = "default_band_half_width")]
        band_half_width: f64,
    },
    ExternalExchange {
        dim: usize,
        n_f: usize,
        m_f: usize,
        dir: PathBuf,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_poll_millis")]
        poll_millis: u64,
    },
}

impl ModelSpec {
    pub fn synthetic_smooth(dim: usize, n_f: usize, m_f: usize) -> Self {
        ModelSpec::SyntheticSmooth {
            dim,
            n_f,
            m_f,
            modes: default_modes(),
        }
    }

    pub fn synthetic_transition(dim: usize, n_f: usize, m_f: usize) -> Self {
        ModelSpec::SyntheticTransition {
            dim,
            n_f,
            m_f,
            modes: default_modes(),
            width: default_width(),
            curve_offset: default_curve_offset(),
            curve_slope: default_curve_slope(),
            band_half_width: default_band_half_width(),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelSpec::SyntheticSmooth { dim, .. }
            | ModelSpec::SyntheticTransition { dim, .. }
            | ModelSpec::ExternalExchange { dim, .. } => dim,
        }
    }

    pub fn field_shape(&self) -> (usize, usize) {
        match *self {
            ModelSpec::SyntheticSmooth { n_f, m_f, .. }
            | ModelSpec::SyntheticTransition { n_f, m_f, .. }
            | ModelSpec::ExternalExchange { n_f, m_f, .. } => (n_f, m_f),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (n_f, m_f) = self.field_shape();
        match *self {
            ModelSpec::SyntheticSmooth { modes, .. } => {
                if modes == 0 || modes > n_f.min(m_f) {
                    return Err(ModelError::TooManyModes(modes, n_f, m_f));
                }
            }
            ModelSpec::SyntheticTransition { dim, modes, .. } => {
                if 2 * modes > n_f.min(m_f) || modes == 0 {
                    return Err(ModelError::TooManyModes(modes, n_f, m_f));
                }
                if dim < 2 {
                    return Err(ModelError::TransitionNeedsTwoDims);
                }
            }
            ModelSpec::ExternalExchange { .. } => {}
        }
        Ok(())
    }

    /// Evaluates a synthetic family directly. External-exchange models need
    /// the stateful [`Model`] wrapper for monotone request ids.
    pub fn evaluate(&self, xi: &ParamPoint) -> Result<FieldSnapshot, ModelError> {
        Model::new(self.clone()).evaluate(xi)
    }

    /// Upper bound on the Frobenius norm of the synthetic fields over the
    /// whole parameter domain.
    pub fn magnitude_bound(&self) -> Option<f64> {
        match *self {
            ModelSpec::SyntheticSmooth { modes, .. }
            | ModelSpec::SyntheticTransition { modes, .. } => Some(
                (1..=modes)
                    .map(|q| (1.3 * amplitude(q)).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            ),
            ModelSpec::ExternalExchange { .. } => None,
        }
    }

    /// The transition curve value g(x) for the transition family.
    pub fn transition_curve(&self, x: f64) -> Option<f64> {
        match *self {
            ModelSpec::SyntheticTransition {
                curve_offset,
                curve_slope,
                ..
            } => Some(curve_offset + curve_slope * x),
            _ => None,
        }
    }

    /// Whether a parameter point lies in the analytic transition band
    /// `|xi_1 - g(xi_0)| < band_half_width`. `None` for non-transition
    /// families.
    pub fn in_transition_band(&self, xi: &ParamPoint) -> Option<bool> {
        match *self {
            ModelSpec::SyntheticTransition {
                band_half_width, ..
            } => {
                let g = self.transition_curve(xi.coords()[0]).unwrap();
                Some((xi.coords()[1] - g).abs() < band_half_width)
            }
            _ => None,
        }
    }

    /// Fraction of the unit-square area covered by the transition band.
    pub fn transition_band_measure(&self) -> Option<f64> {
        match *self {
            ModelSpec::SyntheticTransition {
                band_half_width, ..
            } => Some(2.0 * band_half_width),
            _ => None,
        }
    }
}

/// Per-dimension affine map from the unit hypercube to physical parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamMap {
    ranges: Vec<(f64, f64)>,
}

impl ParamMap {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        for &(lo, hi) in &ranges {
            if hi <= lo {
                return Err(ModelError::DimensionMismatch(0, 0));
            }
        }
        Ok(Self { ranges })
    }

    /// physical = lo + (hi - lo) * xi, per dimension.
    pub fn map_params(&self, xi: &ParamPoint) -> Result<Vec<f64>, ModelError> {
        if xi.dim() != self.ranges.len() {
            return Err(ModelError::DimensionMismatch(xi.dim(), self.ranges.len()));
        }
        Ok(xi
            .coords()
            .iter()
            .zip(&self.ranges)
            .map(|(&x, &(lo, hi))| lo + (hi - lo) * x)
            .collect())
    }
}

/// Stateful model handle; synthetic evaluation is pure, exchange evaluation
/// draws monotone request ids.
pub struct Model {
    spec: ModelSpec,
    counter: AtomicU64,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Self {
        Self {
            spec,
            counter: AtomicU64::new(0),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn evaluate(&self, xi: &ParamPoint) -> Result<FieldSnapshot, ModelError> {
        if xi.dim() != self.spec.dim() {
            return Err(ModelError::DimensionMismatch(xi.dim(), self.spec.dim()));
        }
        self.spec.validate()?;
        match &self.spec {
            ModelSpec::SyntheticSmooth {
                n_f, m_f, modes, ..
            } => synthetic_field(xi, *n_f, *m_f, *modes, None),
            ModelSpec::SyntheticTransition {
                n_f,
                m_f,
                modes,
                width,
                curve_offset,
                curve_slope,
                ..
            } => {
                let t = (xi.coords()[1] - (curve_offset + curve_slope * xi.coords()[0])) / width;
                synthetic_field(xi, *n_f, *m_f, *modes, Some(smoothstep(t)))
            }
            ModelSpec::ExternalExchange {
                dir,
                timeout_secs,
                poll_millis,
                ..
            } => {
                let id = self.counter.fetch_add(1, Ordering::SeqCst);
                exchange_evaluate(
                    dir,
                    id,
                    xi,
                    Duration::from_secs(*timeout_secs),
                    Duration::from_millis(*poll_millis),
                )
            }
        }
    }
}

fn amplitude(q: usize) -> f64 {
    8.0 / f64::powi(2.0, q as i32 - 1)
}

/// Smooth modal coefficient, bounded away from zero and ordered across q.
fn coefficient(q: usize, xi: &ParamPoint) -> f64 {
    let mean: f64 = xi.coords().iter().sum::<f64>() / xi.dim() as f64;
    amplitude(q) * (1.0 + 0.3 * (2.0 * std::f64::consts::PI * mean + q as f64).sin())
}

/// Normalized discrete sine mode of index q (1-based) and length len.
fn sine_mode(q: usize, len: usize) -> DVector<f64> {
    let v = DVector::from_fn(len, |i, _| {
        (std::f64::consts::PI * q as f64 * (i as f64 + 1.0) / (len as f64 + 1.0)).sin()
    });
    let n = v.norm();
    v / n
}

/// Logistic blend in the scaled signed distance from the transition curve:
/// 0 far below, 1 far above, steep but everywhere smooth so refinement can
/// resolve it progressively.
fn smoothstep(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn synthetic_field(
    xi: &ParamPoint,
    n_f: usize,
    m_f: usize,
    modes: usize,
    blend: Option<f64>,
) -> Result<FieldSnapshot, ModelError> {
    let mut field = DMatrix::zeros(n_f, m_f);
    for q in 1..=modes {
        let c = coefficient(q, xi);
        match blend {
            None => {
                field += sine_mode(q, n_f) * sine_mode(q, m_f).transpose() * c;
            }
            Some(s) => {
                // Rotate each mode pair instead of crossfading amplitudes:
                // the field keeps exact rank `modes` with distinct singular
                // values everywhere, so its rank-truncation varies
                // continuously through the blend while the dominant mode
                // index still switches across the curve. A gentle background
                // rotation makes the subspace vary smoothly off the
                // transition as well.
                let sum: f64 = xi.coords().iter().sum();
                let background =
                    0.4 * (2.0 * std::f64::consts::PI * sum + q as f64).sin();
                let rho = s * std::f64::consts::FRAC_PI_2 + background;
                let left = sine_mode(q, n_f) * rho.cos() + sine_mode(q + modes, n_f) * rho.sin();
                let right = sine_mode(q, m_f) * rho.cos() + sine_mode(q + modes, m_f) * rho.sin();
                field += left * right.transpose() * c;
            }
        }
    }
    Ok(FieldSnapshot::new(field, xi.clone())?)
}

#[derive(Serialize, Deserialize)]
struct ExchangeRequest {
    id: u64,
    xi: Vec<f64>,
}

fn exchange_evaluate(
    dir: &PathBuf,
    id: u64,
    xi: &ParamPoint,
    timeout: Duration,
    poll: Duration,
) -> Result<FieldSnapshot, ModelError> {
    let request = ExchangeRequest {
        id,
        xi: xi.coords().to_vec(),
    };
    let tmp = dir.join(format!(".req_{id}.json.tmp"));
    let req_path = dir.join(format!("req_{id}.json"));
    let payload = serde_json::to_vec(&request).expect("request serializes");
    std::fs::write(&tmp, payload).map_err(ModelError::RequestWrite)?;
    std::fs::rename(&tmp, &req_path).map_err(ModelError::RequestWrite)?;
    let resp_path = dir.join(format!("resp_{id}.gfld"));
    let start = Instant::now();
    loop {
        if resp_path.exists() {
            // Give the producer a moment in case the write is not atomic.
            match io::read_gfld(&resp_path) {
                Ok(snap) => return Ok(snap),
                Err(e) if start.elapsed() > timeout => {
                    return Err(ModelError::MalformedSnapshot(e))
                }
                Err(_) => {}
            }
        }
        if start.elapsed() > timeout {
            return Err(ModelError::ExchangeTimeout(timeout, resp_path));
        }
        std::thread::sleep(poll);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{distance_equidim, principal_angles, MetricKind};
    use crate::snapshot::{decompose, RankPolicy};
    use approx::assert_relative_eq;

    fn p(coords: &[f64]) -> ParamPoint {
        ParamPoint::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn smooth_model_deterministic() {
        let spec = ModelSpec::synthetic_smooth(2, 16, 12);
        let a = spec.evaluate(&p(&[0.3, 0.7])).unwrap();
        let b = spec.evaluate(&p(&[0.3, 0.7])).unwrap();
        assert_eq!(a.field(), b.field());
    }

    #[test]
    fn smooth_model_constant_subspace() {
        // The smooth family varies only its modal amplitudes, so the left
        // subspace is the same at any two points.
        let spec = ModelSpec::synthetic_smooth(2, 16, 12);
        let a = decompose(&spec.evaluate(&p(&[0.1, 0.2])).unwrap(), RankPolicy::default()).unwrap();
        let b = decompose(&spec.evaluate(&p(&[0.9, 0.6])).unwrap(), RankPolicy::default()).unwrap();
        assert_eq!(a.rank(), 3);
        assert!(distance_equidim(MetricKind::Grassmann, a.left(), b.left()).unwrap() < 1e-10);
    }

    #[test]
    fn transition_model_swaps_dominant_modes() {
        let spec = ModelSpec::synthetic_transition(2, 16, 12);
        let below = decompose(
            &spec.evaluate(&p(&[0.5, 0.05])).unwrap(),
            RankPolicy::default(),
        )
        .unwrap();
        let above = decompose(
            &spec.evaluate(&p(&[0.5, 0.95])).unwrap(),
            RankPolicy::default(),
        )
        .unwrap();
        let dom_b = below.left().truncate(1).unwrap();
        let dom_a = above.left().truncate(1).unwrap();
        let angle = principal_angles(&dom_b, &dom_a).unwrap().angles()[0];
        assert!(angle > std::f64::consts::FRAC_PI_4, "angle {angle}");
    }

    #[test]
    fn transition_rank_constant_through_the_blend() {
        // The rotated mode pairs stay orthonormal, so the rank never changes
        // and the mid-blend subspace sits halfway between the two sides.
        let spec = ModelSpec::synthetic_transition(2, 16, 12);
        let below = decompose(
            &spec.evaluate(&p(&[0.5, 0.05])).unwrap(),
            RankPolicy::default(),
        )
        .unwrap();
        let mid = decompose(
            &spec.evaluate(&p(&[0.0, 0.4])).unwrap(),
            RankPolicy::default(),
        )
        .unwrap();
        assert_eq!(below.rank(), 3);
        assert_eq!(mid.rank(), 3);
        let angle = principal_angles(
            &below.left().truncate(1).unwrap(),
            &mid.left().truncate(1).unwrap(),
        )
        .unwrap()
        .angles()[0];
        assert!(
            angle > 0.3 && angle < std::f64::consts::FRAC_PI_2 - 0.3,
            "angle {angle}"
        );
    }

    #[test]
    fn magnitude_bound_holds() {
        let spec = ModelSpec::synthetic_transition(2, 16, 12);
        let bound = spec.magnitude_bound().unwrap();
        for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for y in [0.0, 0.4, 0.5, 0.6, 1.0] {
                let f = spec.evaluate(&p(&[x, y])).unwrap();
                assert!(f.field().norm() <= bound);
            }
        }
    }

    #[test]
    fn band_membership_and_measure() {
        let spec = ModelSpec::synthetic_transition(2, 16, 12);
        assert_eq!(spec.in_transition_band(&p(&[0.0, 0.45])), Some(true));
        assert_eq!(spec.in_transition_band(&p(&[0.0, 0.95])), Some(false));
        assert_relative_eq!(spec.transition_band_measure().unwrap(), 0.2);
    }

    #[test]
    fn param_map_reference_values() {
        let map = ParamMap::new(vec![(500.0, 700.0), (0.0, 0.1)]).unwrap();
        assert_eq!(map.map_params(&p(&[0.0, 0.0])).unwrap(), vec![500.0, 0.0]);
        assert_eq!(map.map_params(&p(&[1.0, 1.0])).unwrap(), vec![700.0, 0.1]);
        assert_eq!(map.map_params(&p(&[0.5, 0.5])).unwrap(), vec![600.0, 0.05]);
    }

    #[test]
    fn exchange_roundtrip_with_stub_solver() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::ExternalExchange {
            dim: 2,
            n_f: 4,
            m_f: 3,
            dir: dir.path().to_path_buf(),
            timeout_secs: 10,
            poll_millis: 5,
        };
        let model = Model::new(spec);
        // Stub solver: watch for requests, echo a fixed matrix.
        let watch = dir.path().to_path_buf();
        let handle = std::thread::spawn(move || {
            let deadline = Instant::now() + Duration::from_secs(10);
            while Instant::now() < deadline {
                let req = watch.join("req_0.json");
                if req.exists() {
                    let body: ExchangeRequest =
                        serde_json::from_slice(&std::fs::read(&req).unwrap()).unwrap();
                    let field = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 + 0.5);
                    let snap = FieldSnapshot::new(
                        field,
                        ParamPoint::new(body.xi).unwrap(),
                    )
                    .unwrap();
                    io::write_gfld(&watch.join("resp_0.gfld"), &snap).unwrap();
                    return;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            panic!("stub solver never saw a request");
        });
        let snap = model.evaluate(&p(&[0.25, 0.75])).unwrap();
        handle.join().unwrap();
        let expect = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 + 0.5);
        assert_eq!(snap.field(), &expect);
        assert_eq!(snap.params().coords(), &[0.25, 0.75]);
    }

    #[test]
    fn exchange_timeout_reported() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::ExternalExchange {
            dim: 2,
            n_f: 4,
            m_f: 3,
            dir: dir.path().to_path_buf(),
            timeout_secs: 0,
            poll_millis: 1,
        };
        let model = Model::new(spec);
        assert!(matches!(
            model.evaluate(&p(&[0.5, 0.5])),
            Err(ModelError::ExchangeTimeout(..))
        ));
    }
}
