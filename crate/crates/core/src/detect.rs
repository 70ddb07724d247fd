//! Thresholding of an estimated grid into target and ghost detections, and
//! scoring against the ground-truth scene.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AngleGrid, AngleSpectrum, Scene, TargetKind};
use crate::Complex64;

pub const DEFAULT_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub doa_index: usize,
    pub dod_index: usize,
    pub amplitude: Complex64,
    pub kind: TargetKind,
}

/// How far a detection may sit from an emitter cell and still count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchWindow {
    /// Same `(g, q)` cell only.
    #[default]
    Exact,
    /// Within one cell along each axis.
    Neighbor,
}

impl MatchWindow {
    fn matches(self, a: (usize, usize), b: (usize, usize)) -> bool {
        match self {
            MatchWindow::Exact => a == b,
            MatchWindow::Neighbor => a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub actual_recall: f64,
    pub ghost_recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub frobenius_sq_error: f64,
    #[serde(flatten)]
    pub scores: DetectionScores,
}

/// Every cell with `|X_gq| > tau`, strongest first.
pub fn threshold_detect(x: &AngleSpectrum, tau: f64) -> Result<Vec<Detection>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParams(format!("threshold must be positive, got {tau}")));
    }
    let size = x.size();
    let mut out = Vec::new();
    for q in 0..size {
        for g in 0..size {
            let amplitude = x.get(g, q);
            if amplitude.norm() > tau {
                out.push(Detection {
                    doa_index: g,
                    dod_index: q,
                    amplitude,
                    kind: TargetKind::classify(g, q),
                });
            }
        }
    }
    // Stable sort keeps column order among equal magnitudes.
    out.sort_by(|a, b| b.amplitude.norm().total_cmp(&a.amplitude.norm()));
    Ok(out)
}

pub fn frobenius_sq_error(estimate: &AngleSpectrum, truth: &AngleSpectrum) -> Result<f64> {
    if estimate.size() != truth.size() {
        return Err(Error::DimensionMismatch {
            expected: truth.size(),
            actual: estimate.size(),
        });
    }
    Ok((estimate.matrix() - truth.matrix()).norm_squared())
}

/// Precision and recall of `detections` against the scene's emitter cells.
///
/// Emitters sharing a cell count once. Recall over an empty set of cells is 1;
/// precision with no detections is 0.
pub fn score_detections(
    detections: &[Detection],
    scene: &Scene,
    grid: &AngleGrid,
    window: MatchWindow,
) -> Result<DetectionScores> {
    let mut cells = scene.cells(grid)?;
    cells.sort_unstable();
    cells.dedup();
    let detected: Vec<(usize, usize)> = detections.iter().map(|d| (d.doa_index, d.dod_index)).collect();

    let true_positives = detected
        .iter()
        .filter(|d| cells.iter().any(|c| window.matches(**d, *c)))
        .count();
    let precision = if detected.is_empty() {
        0.0
    } else {
        true_positives as f64 / detected.len() as f64
    };

    let recall_of = |kind: Option<TargetKind>| {
        let wanted: Vec<_> = cells
            .iter()
            .filter(|c| kind.is_none_or(|k| TargetKind::classify(c.0, c.1) == k))
            .collect();
        if wanted.is_empty() {
            return 1.0;
        }
        let found = wanted
            .iter()
            .filter(|c| detected.iter().any(|d| window.matches(*d, ***c)))
            .count();
        found as f64 / wanted.len() as f64
    };
    let recall = recall_of(None);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DetectionScores {
        precision,
        recall,
        f1,
        actual_recall: recall_of(Some(TargetKind::Actual)),
        ghost_recall: recall_of(Some(TargetKind::Ghost)),
    })
}

/// Error and detection scores of one estimate.
pub fn evaluate(
    estimate: &AngleSpectrum,
    truth: &AngleSpectrum,
    scene: &Scene,
    grid: &AngleGrid,
    tau: f64,
    window: MatchWindow,
) -> Result<EvalMetrics> {
    let detections = threshold_detect(estimate, tau)?;
    Ok(EvalMetrics {
        frobenius_sq_error: frobenius_sq_error(estimate, truth)?,
        scores: score_detections(&detections, scene, grid, window)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Emitter;
    use nalgebra::DMatrix;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn three_target_scene() -> Scene {
        let mut emitters = Vec::new();
        for (t, g1, g2) in [(-20.0, 40.0, 40.0), (-60.0, 60.0, 60.0), (-40.0, 50.0, 50.0)] {
            emitters.push(Emitter::new(1.0, t, t));
            emitters.push(Emitter::new(0.7, t, g1));
            emitters.push(Emitter::new(0.5, g2, t));
        }
        Scene::new(emitters)
    }

    fn det(g: usize, q: usize) -> Detection {
        Detection {
            doa_index: g,
            dod_index: q,
            amplitude: c(1.0),
            kind: TargetKind::classify(g, q),
        }
    }

    #[test]
    fn zero_grid_has_no_detections() {
        assert!(threshold_detect(&AngleSpectrum::zeros(5), 0.4).unwrap().is_empty());
    }

    #[test]
    fn threshold_is_strict_and_sorted() {
        let mut x = AngleSpectrum::zeros(4);
        x.set(0, 0, c(0.4));
        x.set(1, 2, Complex64::new(0.0, -0.9));
        x.set(3, 3, c(0.5));
        x.set(2, 1, c(0.400_000_1));
        let d = threshold_detect(&x, 0.4).unwrap();
        let cells: Vec<_> = d.iter().map(|d| (d.doa_index, d.dod_index)).collect();
        assert_eq!(cells, vec![(1, 2), (3, 3), (2, 1)]);
        assert_eq!(d[0].kind, TargetKind::Ghost);
        assert_eq!(d[1].kind, TargetKind::Actual);
        assert!(threshold_detect(&x, 0.0).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let truth = AngleSpectrum::from_matrix(DMatrix::from_fn(3, 3, |g, q| c((g * 3 + q) as f64))).unwrap();
        assert_eq!(frobenius_sq_error(&truth, &truth).unwrap(), 0.0);
        let mut est = truth.clone();
        est.set(1, 2, truth.get(1, 2) + c(0.3));
        assert!((frobenius_sq_error(&est, &truth).unwrap() - 0.09).abs() < 1e-12);
        let ones = AngleSpectrum::from_matrix(DMatrix::from_element(2, 2, c(1.0))).unwrap();
        assert_eq!(frobenius_sq_error(&ones, &AngleSpectrum::zeros(2)).unwrap(), 4.0);
        assert!(frobenius_sq_error(&ones, &truth).is_err());
    }

    #[test]
    fn perfect_detections_score_one() {
        let grid = AngleGrid::default();
        let scene = three_target_scene();
        let dets: Vec<_> = scene.cells(&grid).unwrap().into_iter().map(|(g, q)| det(g, q)).collect();
        let s = score_detections(&dets, &scene, &grid, MatchWindow::Exact).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!((s.actual_recall, s.ghost_recall), (1.0, 1.0));
    }

    #[test]
    fn empty_detections() {
        let grid = AngleGrid::default();
        let s = score_detections(&[], &three_target_scene(), &grid, MatchWindow::Exact).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = score_detections(&[], &Scene::default(), &grid, MatchWindow::Exact).unwrap();
        assert_eq!((s.precision, s.recall), (0.0, 1.0));
    }

    #[test]
    fn spurious_cells_lower_precision() {
        let grid = AngleGrid::default();
        let scene = three_target_scene();
        let mut dets: Vec<_> = scene.cells(&grid).unwrap().into_iter().map(|(g, q)| det(g, q)).collect();
        dets.extend([det(0, 0), det(1, 5), det(36, 2)]);
        let s = score_detections(&dets, &scene, &grid, MatchWindow::Exact).unwrap();
        assert!((s.precision - 0.75).abs() < 1e-15);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn per_kind_recall_and_neighbor_window() {
        let grid = AngleGrid::default();
        let scene = three_target_scene();
        let g = |a: f64| grid.index_of(a).unwrap();
        let dets = vec![det(g(-20.0), g(-20.0)), det(g(-20.0), g(45.0))];
        let exact = score_detections(&dets, &scene, &grid, MatchWindow::Exact).unwrap();
        assert!((exact.actual_recall - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(exact.ghost_recall, 0.0);
        assert_eq!(exact.precision, 0.5);
        let near = score_detections(&dets, &scene, &grid, MatchWindow::Neighbor).unwrap();
        assert!((near.ghost_recall - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(near.precision, 1.0);
    }

    #[test]
    fn scoring_ignores_detection_order() {
        let grid = AngleGrid::default();
        let scene = three_target_scene();
        let mut dets: Vec<_> = scene.cells(&grid).unwrap().into_iter().take(5).map(|(g, q)| det(g, q)).collect();
        dets.push(det(3, 4));
        let a = score_detections(&dets, &scene, &grid, MatchWindow::Exact).unwrap();
        dets.reverse();
        let b = score_detections(&dets, &scene, &grid, MatchWindow::Exact).unwrap();
        assert_eq!(a, b);
    }
}
