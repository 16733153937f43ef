//! Finite metric point clouds standing in for a σ-locally compact space.
//!
//! Every subset of a finite space is compact, so balls, annuli and the
//! stages of an exhaustion are plain point-id sets. Distances are stored as
//! a dense symmetric matrix; all queries are linear scans.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CvpError, Result};

/// Exact set cover is only attempted on balls with at most this many points.
pub const EXACT_COVER_MAX_POINTS: usize = 16;

/// Relative slack used when validating the triangle inequality.
const TRIANGLE_SLACK: f64 = 1e-12;

/// Spaces up to this size get an exhaustive triangle check; larger ones are sampled.
const EXHAUSTIVE_TRIANGLE_MAX: usize = 400;

/// Index of a point in its [`MetricSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub usize);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Explicit,
}

/// One entry of the `points` array of a space file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coords: Vec<f64>,
}

/// On-disk representation of a [`MetricSpace`].
///
/// `distances`, required for the explicit metric, lists the strict upper
/// triangle of the distance matrix in row-major order, i.e. the pairs
/// `(0,1), (0,2), …, (0,n-1), (1,2), …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub points: Vec<PointEntry>,
    pub metric: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
}

/// A nonempty finite metric space with unique string ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    id: String,
    labels: Vec<String>,
    coords: Vec<Vec<f64>>,
    metric: MetricKind,
    dist: Vec<f64>,
}

impl MetricSpace {
    /// Euclidean space on the given coordinate vectors.
    pub fn from_coords(
        id: impl Into<String>,
        labels: Vec<String>,
        coords: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = labels.len();
        if coords.len() != n {
            return Err(CvpError::invalid(format!(
                "{} labels but {} coordinate vectors",
                n,
                coords.len()
            )));
        }
        let dim = coords.first().map_or(0, Vec::len);
        if coords.iter().any(|c| c.len() != dim) {
            return Err(CvpError::invalid("coordinate vectors differ in dimension"));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CvpError::invalid("non-finite coordinate"));
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = coords[i]
                    .iter()
                    .zip(&coords[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Self::validated(id.into(), labels, coords, MetricKind::Euclidean, dist)
    }

    /// Space with an explicit metric given as the strict upper triangle.
    pub fn from_upper_triangle(
        id: impl Into<String>,
        labels: Vec<String>,
        upper: &[f64],
    ) -> Result<Self> {
        let n = labels.len();
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(CvpError::invalid(format!(
                "explicit metric on {n} points needs {expected} upper-triangular entries, got {}",
                upper.len()
            )));
        }
        let mut dist = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                dist[i * n + j] = upper[k];
                dist[j * n + i] = upper[k];
                k += 1;
            }
        }
        Self::validated(id.into(), labels, Vec::new(), MetricKind::Explicit, dist)
    }

    /// Space with an explicit full distance matrix (validated for symmetry).
    pub fn from_distance_matrix(
        id: impl Into<String>,
        labels: Vec<String>,
        matrix: &[Vec<f64>],
    ) -> Result<Self> {
        let n = labels.len();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(CvpError::invalid("distance matrix must be square and match the labels"));
        }
        let dist: Vec<f64> = matrix.iter().flatten().copied().collect();
        Self::validated(id.into(), labels, Vec::new(), MetricKind::Explicit, dist)
    }

    /// Evenly spaced points `start, start + step, …` on the real line.
    pub fn grid_1d(start: f64, step: f64, count: usize) -> Result<Self> {
        if step <= 0.0 || !step.is_finite() {
            return Err(CvpError::invalid("grid step must be positive"));
        }
        let coords: Vec<Vec<f64>> = (0..count).map(|i| vec![start + step * i as f64]).collect();
        let labels = coords.iter().map(|c| format_coord(c[0])).collect();
        Self::from_coords("grid", labels, coords)
    }

    /// The integer points `lo, lo+1, …, hi`.
    pub fn integer_grid(lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(CvpError::invalid("empty integer grid"));
        }
        Self::grid_1d(lo as f64, 1.0, (hi - lo + 1) as usize)
    }

    pub fn from_file(file: &SpaceFile) -> Result<Self> {
        let id = file.id.clone().unwrap_or_else(|| "space".to_string());
        let labels: Vec<String> = file.points.iter().map(|p| p.id.clone()).collect();
        match file.metric {
            MetricKind::Euclidean => {
                let coords = file.points.iter().map(|p| p.coords.clone()).collect();
                Self::from_coords(id, labels, coords)
            }
            MetricKind::Explicit => {
                let upper = file.distances.as_deref().ok_or_else(|| {
                    CvpError::invalid("explicit metric requires a `distances` array")
                })?;
                let mut space = Self::from_upper_triangle(id, labels, upper)?;
                if file.points.iter().all(|p| !p.coords.is_empty()) {
                    space.coords = file.points.iter().map(|p| p.coords.clone()).collect();
                }
                Ok(space)
            }
        }
    }

    pub fn to_file(&self) -> SpaceFile {
        let points = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, id)| PointEntry {
                id: id.clone(),
                coords: self.coords.get(i).cloned().unwrap_or_default(),
            })
            .collect();
        let distances = match self.metric {
            MetricKind::Euclidean => None,
            MetricKind::Explicit => {
                let n = self.len();
                let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        upper.push(self.dist[i * n + j]);
                    }
                }
                Some(upper)
            }
        };
        SpaceFile {
            id: Some(self.id.clone()),
            points,
            metric: self.metric,
            distances,
        }
    }

    fn validated(
        id: String,
        labels: Vec<String>,
        coords: Vec<Vec<f64>>,
        metric: MetricKind,
        dist: Vec<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(CvpError::invalid("metric space must be nonempty"));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(CvpError::invalid(format!("duplicate point id `{label}`")));
            }
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(CvpError::invalid(format!("dist({0},{0}) must be 0", labels[i])));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(CvpError::invalid(format!(
                        "dist({},{}) = {d} is not a finite nonnegative number",
                        labels[i], labels[j]
                    )));
                }
                if d != dist[j * n + i] {
                    return Err(CvpError::invalid(format!(
                        "distance between {} and {} is not symmetric",
                        labels[i], labels[j]
                    )));
                }
                if i != j && d == 0.0 {
                    return Err(CvpError::invalid(format!(
                        "distinct points {} and {} are at distance 0",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        let space = MetricSpace {
            id,
            labels,
            coords,
            metric,
            dist,
        };
        if let Some((x, y, z)) = space.triangle_violation() {
            return Err(CvpError::invalid(format!(
                "triangle inequality fails for ({}, {}, {})",
                space.labels[x], space.labels[y], space.labels[z]
            )));
        }
        Ok(space)
    }

    /// First triple `(x, y, z)` with `d(x,z) > d(x,y) + d(y,z)`, if any.
    ///
    /// Exhaustive for small spaces; a fixed pseudo-random sample of triples
    /// otherwise.
    fn triangle_violation(&self) -> Option<(usize, usize, usize)> {
        let n = self.len();
        let scale = self.diameter().max(1.0);
        let violates = |x: usize, y: usize, z: usize| {
            self.d(x, z) > self.d(x, y) + self.d(y, z) + TRIANGLE_SLACK * scale
        };
        if n <= EXHAUSTIVE_TRIANGLE_MAX {
            for x in 0..n {
                for z in (x + 1)..n {
                    for y in 0..n {
                        if violates(x, y, z) {
                            return Some((x, y, z));
                        }
                    }
                }
            }
            None
        } else {
            // splitmix64; no need for a full RNG here
            let mut state = 0x9E37_79B9_7F4A_7C15u64;
            let mut next = || {
                state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
                ((z ^ (z >> 31)) % n as u64) as usize
            };
            (0..200_000)
                .map(|_| (next(), next(), next()))
                .find(|&(x, y, z)| violates(x, y, z))
        }
    }

    #[inline]
    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.labels.len() + j]
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, x: PointId) -> &str {
        &self.labels[x.0]
    }

    pub fn coords(&self, x: PointId) -> Option<&[f64]> {
        self.coords.get(x.0).map(Vec::as_slice)
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = PointId> + Clone {
        (0..self.labels.len()).map(PointId)
    }

    pub fn all_points(&self) -> Vec<PointId> {
        self.points().collect()
    }

    pub fn lookup(&self, label: &str) -> Result<PointId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(PointId)
            .ok_or_else(|| CvpError::UnknownPoint(label.to_string()))
    }

    pub fn check(&self, x: PointId) -> Result<()> {
        if x.0 < self.len() {
            Ok(())
        } else {
            Err(CvpError::UnknownPoint(format!("#{}", x.0)))
        }
    }

    #[inline]
    pub fn dist(&self, x: PointId, y: PointId) -> f64 {
        self.d(x.0, y.0)
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest distance between two distinct points (0 for a single point).
    pub fn min_separation(&self) -> f64 {
        let n = self.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.min(self.d(i, j));
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// The distinct distances from `x` in increasing order, starting with 0.
    pub fn realized_distances(&self, x: PointId) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut ds: Vec<f64> = self.points().map(|y| self.dist(x, y)).collect();
        ds.sort_by(f64::total_cmp);
        ds.dedup();
        Ok(ds)
    }

    /// `{ y : d(x,y) <= r }`, in id order.
    pub fn closed_ball(&self, x: PointId, r: f64) -> Result<Vec<PointId>> {
        self.check(x)?;
        if !(r >= 0.0) {
            return Err(CvpError::invalid(format!("ball radius must be nonnegative, got {r}")));
        }
        Ok(self.points().filter(|&y| self.dist(x, y) <= r).collect())
    }

    /// Half-open annulus `{ y : r_inner < d(x,y) <= r_outer }`.
    pub fn annulus(&self, x: PointId, r_inner: f64, r_outer: f64) -> Result<Vec<PointId>> {
        self.check(x)?;
        if !(r_inner >= 0.0) || !(r_inner <= r_outer) {
            return Err(CvpError::invalid(format!(
                "annulus needs 0 <= r_inner <= r_outer, got ({r_inner}, {r_outer}]"
            )));
        }
        Ok(self
            .points()
            .filter(|&y| {
                let d = self.dist(x, y);
                r_inner < d && d <= r_outer
            })
            .collect())
    }

    /// Greedy cover of `closed_ball(x, r)` by closed `delta`-balls.
    ///
    /// Scans the ball in id order and opens a ball at each point that is not
    /// yet covered. The result is a valid cover, so its size bounds the
    /// minimal covering number from above.
    pub fn greedy_cover(&self, x: PointId, r: f64, delta: f64) -> Result<Vec<PointId>> {
        if !(delta > 0.0) {
            return Err(CvpError::invalid(format!("cover radius must be positive, got {delta}")));
        }
        let members = self.closed_ball(x, r)?;
        let mut covered = vec![false; members.len()];
        let mut centers = Vec::new();
        for i in 0..members.len() {
            if covered[i] {
                continue;
            }
            let c = members[i];
            centers.push(c);
            for (j, &m) in members.iter().enumerate() {
                if self.dist(c, m) <= delta {
                    covered[j] = true;
                }
            }
        }
        Ok(centers)
    }

    /// Upper bound on the covering number `E_x(r, δ)` via [`Self::greedy_cover`].
    pub fn covering_number(&self, x: PointId, r: f64, delta: f64) -> Result<usize> {
        Ok(self.greedy_cover(x, r, delta)?.len())
    }

    /// Exact minimal number of closed `delta`-balls (centered anywhere in the
    /// space) covering `closed_ball(x, r)`. Limited to small balls.
    pub fn exact_covering_number(&self, x: PointId, r: f64, delta: f64) -> Result<usize> {
        if !(delta > 0.0) {
            return Err(CvpError::invalid(format!("cover radius must be positive, got {delta}")));
        }
        let members = self.closed_ball(x, r)?;
        let m = members.len();
        if m > EXACT_COVER_MAX_POINTS {
            return Err(CvpError::Size {
                size: m,
                limit: EXACT_COVER_MAX_POINTS,
            });
        }
        let full = (1u32 << m) - 1;
        let mut candidates: Vec<u32> = self
            .points()
            .map(|c| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| self.dist(c, y) <= delta)
                    .fold(0u32, |acc, (j, _)| acc | (1 << j))
            })
            .filter(|&mask| mask != 0)
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut best = vec![u8::MAX; (full as usize) + 1];
        best[0] = 0;
        for mask in 0..=full {
            let here = best[mask as usize];
            if here == u8::MAX {
                continue;
            }
            for &c in &candidates {
                let next = (mask | c) as usize;
                if best[next] > here + 1 {
                    best[next] = here + 1;
                }
            }
        }
        Ok(best[full as usize] as usize)
    }

    /// Nested closed balls around `center` with the given strictly increasing radii.
    pub fn build_exhaustion(&self, center: PointId, radii: &[f64]) -> Result<Exhaustion> {
        self.check(center)?;
        if radii.is_empty() {
            return Err(CvpError::invalid("exhaustion needs at least one radius"));
        }
        if let Some(w) = radii.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(CvpError::invalid(format!(
                "exhaustion radii must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let mut stages: Vec<Vec<PointId>> = Vec::with_capacity(radii.len());
        for (i, &r) in radii.iter().enumerate() {
            let ball = self.closed_ball(center, r)?;
            if let Some(prev) = stages.last() {
                if prev.len() == ball.len() {
                    return Err(CvpError::DegenerateExhaustion(i - 1, i));
                }
            }
            stages.push(ball);
        }
        Ok(Exhaustion::from_parts(center, radii.to_vec(), stages, self.len()))
    }

    /// Copy of the space with every distance multiplied by `1/delta`.
    ///
    /// Use this to normalize the entropy ball radius to one; decay profiles
    /// have to be rescaled consistently by the caller.
    pub fn rescaled(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(CvpError::invalid("rescaling factor must be positive"));
        }
        let mut out = self.clone();
        out.dist.iter_mut().for_each(|d| *d /= delta);
        out.coords.iter_mut().flatten().for_each(|c| *c /= delta);
        Ok(out)
    }
}

/// Points whose `margin`-ball stays inside `set`.
pub fn interior(space: &MetricSpace, set: &[PointId], margin: f64) -> Vec<PointId> {
    let members: BTreeSet<PointId> = set.iter().copied().collect();
    set.iter()
        .copied()
        .filter(|&x| {
            space
                .points()
                .all(|y| space.dist(x, y) > margin || members.contains(&y))
        })
        .collect()
}

fn format_coord(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

/// Nested stages `K_1 ⊂ K_2 ⊂ … ⊂ K_N`, each strictly larger than the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exhaustion {
    pub center: PointId,
    pub radii: Vec<f64>,
    pub stages: Vec<Vec<PointId>>,
    pub covers_all: bool,
}

impl Exhaustion {
    fn from_parts(center: PointId, radii: Vec<f64>, stages: Vec<Vec<PointId>>, n: usize) -> Self {
        let covers_all = stages.last().is_some_and(|s| s.len() == n);
        Exhaustion {
            center,
            radii,
            stages,
            covers_all,
        }
    }

    /// Exhaustion from explicit stages; each must strictly contain its predecessor.
    pub fn from_stages(space: &MetricSpace, stages: Vec<Vec<PointId>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(CvpError::invalid("exhaustion needs at least one stage"));
        }
        let mut normalized = Vec::with_capacity(stages.len());
        for (i, stage) in stages.into_iter().enumerate() {
            let set: BTreeSet<PointId> = stage.into_iter().collect();
            if set.is_empty() {
                return Err(CvpError::invalid("exhaustion stages must be nonempty"));
            }
            for &p in &set {
                space.check(p)?;
            }
            if let Some(prev) = normalized.last() {
                let prev: &Vec<PointId> = prev;
                if !prev.iter().all(|p| set.contains(p)) {
                    return Err(CvpError::invalid(format!("stage {i} does not contain stage {}", i - 1)));
                }
                if prev.len() == set.len() {
                    return Err(CvpError::DegenerateExhaustion(i - 1, i));
                }
            }
            normalized.push(set.into_iter().collect::<Vec<_>>());
        }
        let center = normalized[0][0];
        let radii = normalized
            .iter()
            .map(|s| s.iter().map(|&p| space.dist(center, p)).fold(0.0, f64::max))
            .collect();
        Ok(Self::from_parts(center, radii, normalized, space.len()))
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Keeps every `stride`-th stage, always including the last one.
    pub fn thinned(&self, stride: usize) -> Self {
        if stride <= 1 || self.stages.len() <= 1 {
            return self.clone();
        }
        let last = self.stages.len() - 1;
        let keep: Vec<usize> = (0..=last)
            .rev()
            .step_by(stride)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        Exhaustion {
            center: self.center,
            radii: keep.iter().map(|&i| self.radii[i]).collect(),
            stages: keep.iter().map(|&i| self.stages[i].clone()).collect(),
            covers_all: self.covers_all,
        }
    }
}
