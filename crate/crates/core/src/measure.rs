//! Discrete measures, signed variations of finite volume, and the causal action.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CvpError, Result};
use crate::lagrangian::Lagrangian;
use crate::numeric::{csum, CompensatedSum};
use crate::space::{MetricSpace, PointId};

/// Weights below this are dropped so that the support stays crisp.
pub const PRUNE_BELOW: f64 = 1e-12;

/// Tolerance on `Σ δ = 0`, relative to `max(1, ‖δ‖₁)`.
pub const VOLUME_TOL: f64 = 1e-12;

/// Finitely supported positive measure on a [`MetricSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    space_id: String,
    weights: BTreeMap<PointId, f64>,
}

/// On-disk form: `{ "space": id, "weights": { point-id: mass } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub space: String,
    pub weights: BTreeMap<String, f64>,
}

impl DiscreteMeasure {
    pub fn zero(space: &MetricSpace) -> Self {
        DiscreteMeasure {
            space_id: space.id().to_string(),
            weights: BTreeMap::new(),
        }
    }

    /// Measure from `(point, mass)` pairs; masses must be finite and
    /// nonnegative, repeated points accumulate, and tiny masses are pruned.
    pub fn new(space: &MetricSpace, weights: impl IntoIterator<Item = (PointId, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (p, w) in weights {
            space.check(p)?;
            if !w.is_finite() || w < 0.0 {
                return Err(CvpError::invalid(format!(
                    "mass at {} must be finite and nonnegative, got {w}",
                    space.label(p)
                )));
            }
            *map.entry(p).or_insert(0.0) += w;
        }
        map.retain(|_, w| *w >= PRUNE_BELOW);
        Ok(DiscreteMeasure {
            space_id: space.id().to_string(),
            weights: map,
        })
    }

    /// Measure with a weight per point of `points` (aligned slices).
    pub fn from_dense(space: &MetricSpace, points: &[PointId], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(CvpError::invalid("points and weights differ in length"));
        }
        Self::new(space, points.iter().copied().zip(weights.iter().copied()))
    }

    /// Every point of the space with the same mass.
    pub fn uniform(space: &MetricSpace, mass: f64) -> Result<Self> {
        Self::new(space, space.points().map(|p| (p, mass)))
    }

    pub fn from_file(space: &MetricSpace, file: &MeasureFile) -> Result<Self> {
        if file.space != space.id() {
            return Err(CvpError::SpaceMismatch(file.space.clone(), space.id().to_string()));
        }
        let pairs = file
            .weights
            .iter()
            .map(|(label, &w)| Ok((space.lookup(label)?, w)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, pairs)
    }

    pub fn to_file(&self, space: &MetricSpace) -> MeasureFile {
        MeasureFile {
            space: self.space_id.clone(),
            weights: self
                .weights
                .iter()
                .map(|(&p, &w)| (space.label(p).to_string(), w))
                .collect(),
        }
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn weight(&self, x: PointId) -> f64 {
        self.weights.get(&x).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PointId, f64)> + '_ {
        self.weights.iter().map(|(&p, &w)| (p, w))
    }

    /// `supp ρ`, in id order.
    pub fn support(&self) -> Vec<PointId> {
        self.weights.keys().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        csum(self.weights.values().copied())
    }

    /// `ρ(A)`.
    pub fn mass_of(&self, set: &[PointId]) -> f64 {
        csum(set.iter().map(|&p| self.weight(p)))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(CvpError::invalid(format!("scale factor must be nonnegative, got {factor}")));
        }
        let mut weights = self.weights.clone();
        weights.values_mut().for_each(|w| *w *= factor);
        weights.retain(|_, w| *w >= PRUNE_BELOW);
        Ok(DiscreteMeasure {
            space_id: self.space_id.clone(),
            weights,
        })
    }

    pub fn add(&self, other: &DiscreteMeasure) -> Result<Self> {
        self.same_space(other)?;
        let mut weights = self.weights.clone();
        for (&p, &w) in &other.weights {
            *weights.entry(p).or_insert(0.0) += w;
        }
        Ok(DiscreteMeasure {
            space_id: self.space_id.clone(),
            weights,
        })
    }

    /// `∫ L(x,y) dρ(y)`.
    pub fn potential(&self, lagrangian: &Lagrangian, x: PointId) -> f64 {
        let row = lagrangian.row(x);
        csum(self.weights.iter().map(|(&y, &w)| w * row[y.0]))
    }

    pub(crate) fn same_space(&self, other: &DiscreteMeasure) -> Result<()> {
        if self.space_id != other.space_id {
            return Err(CvpError::SpaceMismatch(self.space_id.clone(), other.space_id.clone()));
        }
        Ok(())
    }

    pub(crate) fn check_kernel(&self, lagrangian: &Lagrangian) -> Result<()> {
        if self.space_id != lagrangian.space_id() {
            return Err(CvpError::SpaceMismatch(
                self.space_id.clone(),
                lagrangian.space_id().to_string(),
            ));
        }
        if let Some((&p, _)) = self.weights.last_key_value() {
            if p.0 >= lagrangian.len() {
                return Err(CvpError::UnknownPoint(format!("#{}", p.0)));
            }
        }
        Ok(())
    }
}

/// `S(ρ) = Σ_x Σ_y ρ(x) ρ(y) L(x,y)`.
pub fn action(rho: &DiscreteMeasure, lagrangian: &Lagrangian) -> Result<f64> {
    rho.check_kernel(lagrangian)?;
    let mut acc = CompensatedSum::new();
    for (x, wx) in rho.iter() {
        let row = lagrangian.row(x);
        for (y, wy) in rho.iter() {
            acc.add(wx * wy * row[y.0]);
        }
    }
    Ok(acc.value())
}

/// `|ρ̃ - ρ|(F) = Σ_x |ρ̃(x) - ρ(x)|`.
pub fn total_variation_diff(rho: &DiscreteMeasure, rho_tilde: &DiscreteMeasure) -> Result<f64> {
    rho.same_space(rho_tilde)?;
    let keys: BTreeSet<PointId> = rho.weights.keys().chain(rho_tilde.weights.keys()).copied().collect();
    Ok(csum(keys.into_iter().map(|p| (rho_tilde.weight(p) - rho.weight(p)).abs())))
}

/// `ρ|_K`.
pub fn restrict(rho: &DiscreteMeasure, set: &[PointId]) -> DiscreteMeasure {
    let keep: BTreeSet<PointId> = set.iter().copied().collect();
    DiscreteMeasure {
        space_id: rho.space_id.clone(),
        weights: rho
            .weights
            .iter()
            .filter(|(p, _)| keep.contains(p))
            .map(|(&p, &w)| (p, w))
            .collect(),
    }
}

/// Balanced, positivity-preserving change `μ = ρ̃ - ρ` of a base measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedVariation<'a> {
    delta: BTreeMap<PointId, f64>,
    base: &'a DiscreteMeasure,
}

/// Validates `delta` against `rho` and returns the variation.
pub fn make_variation<'a>(
    rho: &'a DiscreteMeasure,
    delta: impl IntoIterator<Item = (PointId, f64)>,
) -> Result<SignedVariation<'a>> {
    let mut map: BTreeMap<PointId, f64> = BTreeMap::new();
    for (p, d) in delta {
        if !d.is_finite() {
            return Err(CvpError::invalid("variation masses must be finite"));
        }
        *map.entry(p).or_insert(0.0) += d;
    }
    map.retain(|_, d| *d != 0.0);
    let net = csum(map.values().copied());
    let l1 = csum(map.values().map(|d| d.abs()));
    if net.abs() > VOLUME_TOL * l1.max(1.0) {
        return Err(CvpError::VolumeConstraint(net));
    }
    for (&p, &d) in &map {
        let w = rho.weight(p);
        let mass = w + d;
        if mass < -f64::EPSILON * w.max(1.0) {
            return Err(CvpError::Positivity { point: p.0, mass });
        }
    }
    Ok(SignedVariation { delta: map, base: rho })
}

impl<'a> SignedVariation<'a> {
    pub fn base(&self) -> &'a DiscreteMeasure {
        self.base
    }

    pub fn iter(&self) -> impl Iterator<Item = (PointId, f64)> + '_ {
        self.delta.iter().map(|(&p, &d)| (p, d))
    }

    pub fn delta(&self, x: PointId) -> f64 {
        self.delta.get(&x).copied().unwrap_or(0.0)
    }

    /// `B = supp(ρ̃ - ρ)`.
    pub fn support(&self) -> Vec<PointId> {
        self.delta.keys().copied().collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.delta.is_empty()
    }

    /// `|μ|(F)`.
    pub fn total_variation(&self) -> f64 {
        csum(self.delta.values().map(|d| d.abs()))
    }

    /// Jordan decomposition `μ = μ⁺ - μ⁻` as two positive weight maps.
    pub fn jordan(&self) -> (BTreeMap<PointId, f64>, BTreeMap<PointId, f64>) {
        let pos = self.delta.iter().filter(|(_, d)| **d > 0.0).map(|(&p, &d)| (p, d)).collect();
        let neg = self.delta.iter().filter(|(_, d)| **d < 0.0).map(|(&p, &d)| (p, -d)).collect();
        (pos, neg)
    }

    /// The varied measure `ρ̃ = ρ + μ`.
    pub fn varied(&self) -> DiscreteMeasure {
        let mut weights = self.base.weights.clone();
        for (&p, &d) in &self.delta {
            *weights.entry(p).or_insert(0.0) += d;
        }
        weights.retain(|_, w| *w >= PRUNE_BELOW);
        DiscreteMeasure {
            space_id: self.base.space_id.clone(),
            weights,
        }
    }
}

/// `S(ρ̃) - S(ρ) = 2 Σ_x μ(x) ℓ̂(x) + Σ_{x,y} μ(x) μ(y) L(x,y)` with
/// `ℓ̂(x) = Σ_y ρ(y) L(x,y)`, using the symmetry of `L`.
pub fn action_difference(
    rho: &DiscreteMeasure,
    variation: &SignedVariation<'_>,
    lagrangian: &Lagrangian,
) -> Result<f64> {
    if !std::ptr::eq(rho, variation.base) && rho != variation.base {
        return Err(CvpError::BaseMismatch);
    }
    rho.check_kernel(lagrangian)?;
    let mut acc = CompensatedSum::new();
    for (x, dx) in variation.iter() {
        acc.add(2.0 * dx * rho.potential(lagrangian, x));
        let row = lagrangian.row(x);
        for (y, dy) in variation.iter() {
            acc.add(dx * dy * row[y.0]);
        }
    }
    Ok(acc.value())
}
