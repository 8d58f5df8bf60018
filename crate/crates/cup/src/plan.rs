//! Region partition, land-use vocabulary, plan validation and diffing.
//!
//! A region is a flat list of areas (centroid + size, no polygons). A plan
//! is a total assignment of a land-use type to every area. Residential
//! areas are fixed at load time and keep their type across every cycle.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// The land-use vocabulary. `Vacant` marks areas still to be planned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandUseType {
    Residential,
    Commercial,
    Office,
    School,
    Hospital,
    Clinic,
    Park,
    OpenSpace,
    Recreation,
    Vacant,
}

impl LandUseType {
    pub const ALL: [LandUseType; 10] = [
        LandUseType::Residential,
        LandUseType::Commercial,
        LandUseType::Office,
        LandUseType::School,
        LandUseType::Hospital,
        LandUseType::Clinic,
        LandUseType::Park,
        LandUseType::OpenSpace,
        LandUseType::Recreation,
        LandUseType::Vacant,
    ];

    /// Types a planner may assign to a non-fixed area.
    pub const PLANNABLE: [LandUseType; 8] = [
        LandUseType::Commercial,
        LandUseType::Office,
        LandUseType::School,
        LandUseType::Hospital,
        LandUseType::Clinic,
        LandUseType::Park,
        LandUseType::OpenSpace,
        LandUseType::Recreation,
    ];

    /// Greening subset used by the ecology metric.
    pub fn is_greening(self) -> bool {
        matches!(self, LandUseType::Park | LandUseType::OpenSpace)
    }

    /// Snake-case label, the on-disk spelling.
    pub fn label(self) -> &'static str {
        match self {
            LandUseType::Residential => "residential",
            LandUseType::Commercial => "commercial",
            LandUseType::Office => "office",
            LandUseType::School => "school",
            LandUseType::Hospital => "hospital",
            LandUseType::Clinic => "clinic",
            LandUseType::Park => "park",
            LandUseType::OpenSpace => "open_space",
            LandUseType::Recreation => "recreation",
            LandUseType::Vacant => "vacant",
        }
    }

    /// Lenient parse for model output: accepts snake_case, spaces, any case.
    pub fn parse_loose(text: &str) -> Option<LandUseType> {
        let norm = text.trim().to_lowercase().replace([' ', '-'], "_");
        Self::ALL.iter().copied().find(|u| u.label() == norm)
    }
}

impl fmt::Display for LandUseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One named group of land-use types counted by the accessibility metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssentialCategory {
    pub name: String,
    pub types: Vec<LandUseType>,
}

impl EssentialCategory {
    fn new(name: &str, types: &[LandUseType]) -> Self {
        EssentialCategory {
            name: name.to_string(),
            types: types.to_vec(),
        }
    }

    pub fn contains(&self, u: LandUseType) -> bool {
        self.types.contains(&u)
    }
}

/// The five default essential-service categories.
pub fn essential_categories() -> Vec<EssentialCategory> {
    vec![
        EssentialCategory::new("commercial", &[LandUseType::Commercial]),
        EssentialCategory::new("school", &[LandUseType::School]),
        EssentialCategory::new("medical", &[LandUseType::Hospital, LandUseType::Clinic]),
        EssentialCategory::new("greenery", &[LandUseType::Park, LandUseType::OpenSpace]),
        EssentialCategory::new("recreation", &[LandUseType::Recreation]),
    ]
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("DuplicateAreaId: more than one area uses id `{0}`")]
    DuplicateAreaId(String),
    #[error("NonPositiveSize: area `{0}` has a non-positive size")]
    NonPositiveSize(String),
    #[error("CentroidOutOfExtent: centroid of area `{0}` lies outside the region extent")]
    CentroidOutOfExtent(String),
    #[error("UnknownArea: no area with id `{0}` in the region")]
    UnknownArea(String),
    #[error("FixedAreaReassignment: area `{0}` is fixed and cannot change type")]
    FixedAreaReassignment(String),
    #[error("RegionMismatch: the plans do not cover the same set of areas")]
    RegionMismatch,
    #[error("PlanIncomplete: plan has no assignment for area `{0}`")]
    PlanIncomplete(String),
    #[error("FixedAreaDrifted: fixed area `{0}` no longer matches its initial type")]
    FixedAreaDrifted(String),
}

use thiserror::Error;

/// Bounding box of the region frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// An atomic spatial unit: centroid, size and the initial land use.
///
/// `fixed` areas keep `land_use` forever; every residential area is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub size_m2: f64,
    pub land_use: LandUseType,
    #[serde(default)]
    pub fixed: bool,
}

impl Area {
    pub fn centroid(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// A named partition of the planning region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub extent: Extent,
    pub areas: Vec<Area>,
}

impl Region {
    /// Load a region file, force `fixed` on residential areas, validate.
    pub fn load(path: &Path) -> Result<Region, RegionLoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegionLoadError::Io(path.display().to_string(), e.to_string()))?;
        let mut region: Region = serde_json::from_str(&text)
            .map_err(|e| RegionLoadError::Parse(path.display().to_string(), e.to_string()))?;
        region.normalize();
        region.validate()?;
        Ok(region)
    }

    /// Residential areas are never plannable; make that explicit.
    pub fn normalize(&mut self) {
        for area in &mut self.areas {
            if area.land_use == LandUseType::Residential {
                area.fixed = true;
            }
        }
    }

    /// Check id uniqueness, positive sizes and centroid containment.
    pub fn validate(&self) -> Result<(), PlanError> {
        let mut seen = std::collections::BTreeSet::new();
        for area in &self.areas {
            if !seen.insert(area.id.as_str()) {
                return Err(PlanError::DuplicateAreaId(area.id.clone()));
            }
        }
        for area in &self.areas {
            if !(area.size_m2 > 0.0) {
                return Err(PlanError::NonPositiveSize(area.id.clone()));
            }
        }
        for area in &self.areas {
            if !self.extent.contains(area.x, area.y) {
                return Err(PlanError::CentroidOutOfExtent(area.id.clone()));
            }
        }
        Ok(())
    }

    pub fn area(&self, id: &str) -> Option<&Area> {
        self.areas.iter().find(|a| a.id == id)
    }

    pub fn require_area(&self, id: &str) -> Result<&Area, PlanError> {
        self.area(id).ok_or_else(|| PlanError::UnknownArea(id.to_string()))
    }

    pub fn residential_areas(&self) -> impl Iterator<Item = &Area> {
        self.areas
            .iter()
            .filter(|a| a.land_use == LandUseType::Residential)
    }

    /// Euclidean distance between two area centroids, in meters.
    pub fn distance(&self, a: &str, b: &str) -> Result<f64, PlanError> {
        let pa = self.require_area(a)?;
        let pb = self.require_area(b)?;
        Ok(((pa.x - pb.x).powi(2) + (pa.y - pb.y).powi(2)).sqrt())
    }

    /// The `n` areas nearest to `from` (excluding it), ties by list order.
    pub fn nearest_areas(&self, from: &str, n: usize) -> Result<Vec<&Area>, PlanError> {
        let origin = self.require_area(from)?;
        let mut others: Vec<(f64, usize)> = self
            .areas
            .iter()
            .enumerate()
            .filter(|(_, a)| a.id != from)
            .map(|(i, a)| {
                let d = ((a.x - origin.x).powi(2) + (a.y - origin.y).powi(2)).sqrt();
                (d, i)
            })
            .collect();
        others.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap().then(l.1.cmp(&r.1)));
        Ok(others.into_iter().take(n).map(|(_, i)| &self.areas[i]).collect())
    }

    /// The area whose centroid is nearest to a free position, ties by list order.
    pub fn area_at(&self, x: f64, y: f64) -> &Area {
        self.areas
            .iter()
            .min_by(|l, r| {
                let dl = (l.x - x).powi(2) + (l.y - y).powi(2);
                let dr = (r.x - x).powi(2) + (r.y - y).powi(2);
                dl.partial_cmp(&dr).unwrap()
            })
            .expect("region has at least one area")
    }
}

#[derive(Debug, Error)]
pub enum RegionLoadError {
    #[error("RegionFileUnreadable: cannot read `{0}`: {1}")]
    Io(String, String),
    #[error("RegionFileInvalid: cannot parse `{0}`: {1}")]
    Parse(String, String),
    #[error(transparent)]
    Invalid(#[from] PlanError),
}

/// A total assignment of land uses to areas at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrbanPlan {
    pub iteration: u32,
    pub assignment: BTreeMap<String, LandUseType>,
}

impl UrbanPlan {
    /// The starting plan: fixed areas keep their initial type, everything
    /// else is vacant and waiting to be decided.
    pub fn init(region: &Region) -> UrbanPlan {
        let assignment = region
            .areas
            .iter()
            .map(|a| {
                let u = if a.fixed { a.land_use } else { LandUseType::Vacant };
                (a.id.clone(), u)
            })
            .collect();
        UrbanPlan {
            iteration: 0,
            assignment,
        }
    }

    pub fn land_use(&self, id: &str) -> Option<LandUseType> {
        self.assignment.get(id).copied()
    }

    pub fn with_iteration(mut self, k: u32) -> UrbanPlan {
        self.iteration = k;
        self
    }

    /// Apply a change list, leaving unspecified areas untouched.
    ///
    /// The iteration counter is not advanced here; the planning cycle owns it.
    pub fn apply(
        &self,
        region: &Region,
        changes: &[(String, LandUseType)],
    ) -> Result<UrbanPlan, PlanError> {
        let mut next = self.clone();
        for (id, to) in changes {
            let area = region.require_area(id)?;
            if area.fixed && *to != area.land_use {
                return Err(PlanError::FixedAreaReassignment(id.clone()));
            }
            next.assignment.insert(id.clone(), *to);
        }
        Ok(next)
    }

    /// The areas where `self` and `other` differ, ordered by area id.
    pub fn diff(&self, other: &UrbanPlan) -> Result<PlanDiff, PlanError> {
        if self.assignment.len() != other.assignment.len()
            || !self.assignment.keys().eq(other.assignment.keys())
        {
            return Err(PlanError::RegionMismatch);
        }
        let changes = self
            .assignment
            .iter()
            .filter_map(|(id, from)| {
                let to = other.assignment[id];
                (*from != to).then(|| PlanChange {
                    area: id.clone(),
                    from: *from,
                    to,
                })
            })
            .collect();
        Ok(PlanDiff { changes })
    }

    /// Totality plus fixed-area permanence against the region.
    pub fn validate_against(&self, region: &Region) -> Result<(), PlanError> {
        for area in &region.areas {
            match self.assignment.get(&area.id) {
                None => return Err(PlanError::PlanIncomplete(area.id.clone())),
                Some(u) if area.fixed && *u != area.land_use => {
                    return Err(PlanError::FixedAreaDrifted(area.id.clone()))
                }
                Some(_) => {}
            }
        }
        if self.assignment.len() != region.areas.len() {
            return Err(PlanError::RegionMismatch);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("plan serializes");
        text.push('\n');
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> Result<UrbanPlan, RegionLoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegionLoadError::Io(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| RegionLoadError::Parse(path.display().to_string(), e.to_string()))
    }

    /// Count of areas per assigned type, for prompt rendering and reports.
    pub fn type_counts(&self) -> BTreeMap<LandUseType, usize> {
        let mut counts = BTreeMap::new();
        for u in self.assignment.values() {
            *counts.entry(*u).or_insert(0) += 1;
        }
        counts
    }
}

/// One reassignment between two plans of the same region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanChange {
    pub area: String,
    pub from: LandUseType,
    pub to: LandUseType,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanDiff {
    pub changes: Vec<PlanChange>,
}

impl PlanDiff {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}
