//! Assigning trajectories to modes.
//!
//! Two policies are available. The side classifier looks at where a path
//! crosses the vertical line through the obstacle centre and labels it
//! "above" (1) or "below" (2). The density policy resamples paths to
//! fixed-length feature vectors, clusters the initial set with DBSCAN and
//! then assigns later trajectories to the nearest cluster centroid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ObstacleEllipse, Trajectory};

/// Mode identifier, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeLabel(pub u32);

impl ModeLabel {
    pub const ABOVE: ModeLabel = ModeLabel(1);
    pub const BELOW: ModeLabel = ModeLabel(2);
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Flattened `(z, y)` pairs of a path resampled uniformly in arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn waypoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.0.chunks_exact(2).map(|p| (p[0], p[1]))
    }
}

/// Height of the path where it first meets the line `z = z_line`, linearly
/// interpolated between samples. Falls back to the sample closest to the
/// line when the path never reaches it.
pub fn crossing_height(points: &[(f64, f64)], z_line: f64) -> Option<f64> {
    for (k, &(z0, y0)) in points.iter().enumerate() {
        if z0 == z_line {
            return Some(y0);
        }
        if let Some(&(z1, y1)) = points.get(k + 1) {
            if (z0 - z_line) * (z1 - z_line) < 0.0 {
                let t = (z_line - z0) / (z1 - z0);
                return Some(y0 + t * (y1 - y0));
            }
        }
    }
    points
        .iter()
        .min_by(|a, b| (a.0 - z_line).abs().total_cmp(&(b.0 - z_line).abs()))
        .map(|p| p.1)
}

/// Above (1) if the path crosses the obstacle's vertical centre line higher
/// than the centre, below (2) otherwise. An exact tie counts as below.
pub fn classify_side(traj: &Trajectory, obstacle: &ObstacleEllipse) -> ModeLabel {
    let points: Vec<(f64, f64)> = traj.states.iter().map(|x| (x.z, x.y)).collect();
    match crossing_height(&points, obstacle.z_obs) {
        Some(y) if y > obstacle.y_obs => ModeLabel::ABOVE,
        _ => ModeLabel::BELOW,
    }
}

/// Resamples the `(z, y)` polyline to `waypoints` points spaced uniformly
/// in arc length. A path of zero length repeats its single point.
pub fn resample_features(traj: &Trajectory, waypoints: usize) -> FeatureVector {
    let pts: Vec<(f64, f64)> = traj.states.iter().map(|x| (x.z, x.y)).collect();
    let p = waypoints.max(1);
    let Some(&first) = pts.first() else {
        return FeatureVector(vec![0.0; 2 * p]);
    };

    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();

    let mut out = Vec::with_capacity(2 * p);
    if total == 0.0 || p == 1 {
        for _ in 0..p {
            out.extend([first.0, first.1]);
        }
        return FeatureVector(out);
    }

    let mut seg = 0;
    for i in 0..p {
        let s = if i + 1 == p {
            total
        } else {
            total * i as f64 / (p - 1) as f64
        };
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 {
            ((s - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (pts[seg], pts[seg + 1]);
        out.push(a.0 + t * (b.0 - a.0));
        out.push(a.1 + t * (b.1 - a.1));
    }
    FeatureVector(out)
}

/// DBSCAN under Euclidean distance. Noise points become singleton modes.
/// Labels are numbered from 1 in order of first appearance.
pub fn density_cluster(features: &[FeatureVector], eps: f64, min_pts: usize) -> Vec<ModeLabel> {
    const UNVISITED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;

    let n = features.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| features[i].distance(&features[j]) <= eps)
            .collect()
    };

    let mut cluster = vec![UNVISITED; n];
    let mut next = 0usize;
    for i in 0..n {
        if cluster[i] != UNVISITED {
            continue;
        }
        let nb = neighbors(i);
        if nb.len() < min_pts {
            cluster[i] = NOISE;
            continue;
        }
        let id = next;
        next += 1;
        cluster[i] = id;
        let mut queue = nb;
        let mut q = 0;
        while q < queue.len() {
            let j = queue[q];
            q += 1;
            if cluster[j] == NOISE {
                cluster[j] = id;
            }
            if cluster[j] != UNVISITED {
                continue;
            }
            cluster[j] = id;
            let nbj = neighbors(j);
            if nbj.len() >= min_pts {
                queue.extend(nbj);
            }
        }
    }

    // relabel: noise gets its own mode, numbering by first appearance
    let mut map: Vec<Option<u32>> = vec![None; next];
    let mut labels = Vec::with_capacity(n);
    let mut count = 0u32;
    for &c in &cluster {
        let label = if c == NOISE {
            count += 1;
            count
        } else {
            *map[c].get_or_insert_with(|| {
                count += 1;
                count
            })
        };
        labels.push(ModeLabel(label));
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierPolicy {
    Side,
    Density {
        eps: f64,
        min_pts: usize,
        waypoints: usize,
    },
}

impl Default for ClassifierPolicy {
    fn default() -> Self {
        ClassifierPolicy::Side
    }
}

impl ClassifierPolicy {
    pub fn density_default() -> Self {
        ClassifierPolicy::Density {
            eps: 5.0,
            min_pts: 1,
            waypoints: 16,
        }
    }
}

#[derive(Debug, Clone)]
struct Centroid {
    mode: ModeLabel,
    sum: Vec<f64>,
    count: usize,
}

impl Centroid {
    fn mean(&self) -> FeatureVector {
        FeatureVector(self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

/// Classifier together with whatever cluster state its policy keeps.
#[derive(Debug, Clone)]
pub struct Classifier {
    policy: ClassifierPolicy,
    obstacle: ObstacleEllipse,
    centroids: Vec<Centroid>,
}

impl Classifier {
    pub fn new(policy: ClassifierPolicy, obstacle: ObstacleEllipse) -> Self {
        Self {
            policy,
            obstacle,
            centroids: Vec::new(),
        }
    }

    pub fn policy(&self) -> ClassifierPolicy {
        self.policy
    }

    /// Labels a batch of initial trajectories. For the density policy this
    /// runs DBSCAN and freezes one centroid per resulting mode.
    pub fn fit(&mut self, trajs: &[Trajectory]) -> Vec<ModeLabel> {
        match self.policy {
            ClassifierPolicy::Side => trajs
                .iter()
                .map(|t| classify_side(t, &self.obstacle))
                .collect(),
            ClassifierPolicy::Density {
                eps,
                min_pts,
                waypoints,
            } => {
                let feats: Vec<_> = trajs
                    .iter()
                    .map(|t| resample_features(t, waypoints))
                    .collect();
                let labels = density_cluster(&feats, eps, min_pts);
                self.centroids.clear();
                for (f, &m) in feats.iter().zip(&labels) {
                    self.absorb(m, f);
                }
                labels
            }
        }
    }

    /// Label for `traj` under the current (frozen) cluster state.
    pub fn classify(&self, traj: &Trajectory) -> ModeLabel {
        match self.policy {
            ClassifierPolicy::Side => classify_side(traj, &self.obstacle),
            ClassifierPolicy::Density { eps, waypoints, .. } => {
                let f = resample_features(traj, waypoints);
                self.nearest(&f, eps).unwrap_or_else(|| self.next_label())
            }
        }
    }

    /// Classifies and then folds the trajectory into the cluster state.
    pub fn assign(&mut self, traj: &Trajectory) -> ModeLabel {
        let label = self.classify(traj);
        if let ClassifierPolicy::Density { waypoints, .. } = self.policy {
            let f = resample_features(traj, waypoints);
            self.absorb(label, &f);
        }
        label
    }

    fn nearest(&self, f: &FeatureVector, eps: f64) -> Option<ModeLabel> {
        let mut best: Option<(f64, ModeLabel)> = None;
        for c in &self.centroids {
            let d = c.mean().distance(f);
            if d <= eps && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c.mode));
            }
        }
        best.map(|b| b.1)
    }

    fn next_label(&self) -> ModeLabel {
        ModeLabel(self.centroids.iter().map(|c| c.mode.0).max().unwrap_or(0) + 1)
    }

    fn absorb(&mut self, mode: ModeLabel, f: &FeatureVector) {
        match self.centroids.iter_mut().find(|c| c.mode == mode) {
            Some(c) => {
                for (s, x) in c.sum.iter_mut().zip(&f.0) {
                    *s += x;
                }
                c.count += 1;
            }
            None => self.centroids.push(Centroid {
                mode,
                sum: f.0.clone(),
                count: 1,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Input, State, SystemSpec};

    fn polyline(points: &[(f64, f64)]) -> Trajectory {
        Trajectory {
            states: points.iter().map(|&(z, y)| State::new(z, y, 0.0)).collect(),
            inputs: vec![Input::ZERO; points.len().saturating_sub(1)],
            cost: points.len() as u32,
        }
    }

    fn obstacle() -> ObstacleEllipse {
        SystemSpec::benchmark().obstacle
    }

    #[test]
    fn side_examples() {
        let o = obstacle();
        let above = polyline(&[(0.0, 0.0), (20.0, 18.0), (34.0, 18.0), (54.0, 0.0)]);
        assert_eq!(classify_side(&above, &o), ModeLabel::ABOVE);
        let below = polyline(&[(0.0, 0.0), (20.0, -6.0), (34.0, -6.0), (54.0, 0.0)]);
        assert_eq!(classify_side(&below, &o), ModeLabel::BELOW);
        let tie = polyline(&[(0.0, 0.0), (27.0, 6.0), (54.0, 0.0)]);
        assert_eq!(classify_side(&tie, &o), ModeLabel::BELOW);
    }

    #[test]
    fn side_interpolates_between_samples() {
        let o = obstacle();
        // crosses z = 27 halfway between y = 4 and y = 10 -> 7 > 6
        let t = polyline(&[(0.0, 0.0), (24.0, 4.0), (30.0, 10.0), (54.0, 0.0)]);
        assert_eq!(crossing_height(&t.states.iter().map(|x| (x.z, x.y)).collect::<Vec<_>>(), 27.0), Some(7.0));
        assert_eq!(classify_side(&t, &o), ModeLabel::ABOVE);
        // never reaches the line: nearest sample decides
        let short = polyline(&[(0.0, 0.0), (10.0, 9.0)]);
        assert_eq!(classify_side(&short, &o), ModeLabel::ABOVE);
    }

    #[test]
    fn side_uses_first_crossing() {
        let o = obstacle();
        let t = polyline(&[(0.0, 0.0), (30.0, 20.0), (20.0, -10.0), (54.0, 0.0)]);
        assert_eq!(classify_side(&t, &o), ModeLabel::ABOVE);
    }

    #[test]
    fn resample_straight_segment() {
        let t = polyline(&[(0.0, 0.0), (10.0, 0.0)]);
        assert_eq!(resample_features(&t, 3).0, vec![0.0, 0.0, 5.0, 0.0, 10.0, 0.0]);
        assert_eq!(resample_features(&t, 2).0, vec![0.0, 0.0, 10.0, 0.0]);
    }

    #[test]
    fn resample_uneven_polyline() {
        // arc length 4 + 4; three points land on the corner
        let t = polyline(&[(0.0, 0.0), (1.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        let f = resample_features(&t, 3);
        assert_eq!(f.0, vec![0.0, 0.0, 4.0, 0.0, 4.0, 4.0]);
    }

    #[test]
    fn resample_degenerate() {
        let t = polyline(&[(3.0, 4.0), (3.0, 4.0), (3.0, 4.0)]);
        assert_eq!(resample_features(&t, 4).0, [3.0, 4.0].repeat(4));
    }

    #[test]
    fn dbscan_examples() {
        let f = |v: &[f64]| FeatureVector(v.to_vec());
        let two = vec![f(&[0.0, 0.0]), f(&[0.5, 0.0]), f(&[100.0, 0.0]), f(&[100.0, 1.0])];
        let l = density_cluster(&two, 2.0, 1);
        assert_eq!(l, vec![ModeLabel(1), ModeLabel(1), ModeLabel(2), ModeLabel(2)]);
        assert_eq!(density_cluster(&[f(&[1.0])], 1.0, 1), vec![ModeLabel(1)]);
    }

    #[test]
    fn dbscan_noise_becomes_singletons() {
        let f = |x: f64| FeatureVector(vec![x]);
        // min_pts 3: the first three form a cluster, the far point is noise
        let l = density_cluster(&[f(50.0), f(0.0), f(1.0), f(2.0)], 1.5, 3);
        assert_eq!(l, vec![ModeLabel(1), ModeLabel(2), ModeLabel(2), ModeLabel(2)]);
    }

    #[test]
    fn density_policy_assigns_and_founds() {
        let mut c = Classifier::new(ClassifierPolicy::density_default(), obstacle());
        let up = polyline(&[(0.0, 0.0), (27.0, 20.0), (54.0, 0.0)]);
        let down = polyline(&[(0.0, 0.0), (27.0, -10.0), (54.0, 0.0)]);
        assert_eq!(c.fit(&[up.clone(), down.clone()]), vec![ModeLabel(1), ModeLabel(2)]);
        let near_up = polyline(&[(0.0, 0.0), (27.0, 20.5), (54.0, 0.0)]);
        assert_eq!(c.classify(&near_up), ModeLabel(1));
        let far = polyline(&[(0.0, 0.0), (27.0, 60.0), (54.0, 0.0)]);
        assert_eq!(c.assign(&far), ModeLabel(3));
        assert_eq!(c.classify(&far), ModeLabel(3));
    }

    #[test]
    fn side_policy_dispatch() {
        let c = Classifier::new(ClassifierPolicy::Side, obstacle());
        let below = polyline(&[(0.0, 0.0), (27.0, -8.0), (54.0, 0.0)]);
        assert_eq!(c.classify(&below), ModeLabel::BELOW);
    }
}
