//! Reach-set jobs: an initial distribution pushed through fixed dynamics.

use std::path::Path;

use fsreach_core::fsr::{dp_baseline, fsr_compute};
use fsreach_core::{
    BoxRegion, Clock, DisturbanceSpec, DynamicsMap, FsrOptions, FsrResult, Lattice, LatticePoint, ObstacleGeometry,
    SparsePmf,
};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::io::read_json;

pub const JOB_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Equal mass on every lattice point inside the box.
    UniformBox { region: BoxRegion },
    /// All mass at the lattice point nearest `point`.
    Delta { point: Vec<f64> },
    Explicit { pmf: SparsePmf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsrJob {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub resolution: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice_origin: Option<Vec<f64>>,
    pub initial: InitialSpec,
    /// Matrix of linear dynamics `x -> A x`, row-major; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<Vec<Vec<f64>>>,
    pub disturbance: DisturbanceSpec,
    pub tau: usize,
    #[serde(default)]
    pub prune_threshold: f64,
    /// Gridded domain for the dense baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp_domain: Option<BoxRegion>,
    /// Footprint for occupancy and avoid-set output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<ObstacleGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl FsrJob {
    pub fn load(path: &Path) -> AppResult<Self> {
        let job: FsrJob = read_json(path)?;
        job.validate().map_err(|e| AppError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        Ok(job)
    }

    pub fn validate(&self) -> fsreach_core::Result<()> {
        if self.schema != JOB_SCHEMA {
            return Err(fsreach_core::Error::InvalidInput(format!(
                "unsupported schema {}, expected {JOB_SCHEMA}",
                self.schema
            )));
        }
        self.lattice()?;
        self.disturbance.validate()?;
        self.dynamics()?;
        if let Some(g) = &self.geometry {
            g.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.disturbance.dim()
    }

    pub fn lattice(&self) -> fsreach_core::Result<Lattice> {
        let n = self.dim();
        let origin = self.lattice_origin.clone().unwrap_or_else(|| vec![0.0; n]);
        Lattice::new(origin, vec![self.resolution; n])
    }

    /// Displacement lattice: same spacing, origin at zero.
    pub fn displacement_lattice(&self) -> fsreach_core::Result<Lattice> {
        Lattice::uniform(self.dim(), self.resolution)
    }

    pub fn dynamics(&self) -> fsreach_core::Result<DynamicsMap> {
        match &self.dynamics {
            Some(rows) => DynamicsMap::linear(rows),
            None => Ok(DynamicsMap::identity(self.dim())),
        }
    }

    pub fn initial_pmf(&self) -> fsreach_core::Result<SparsePmf> {
        let lattice = self.lattice()?;
        match &self.initial {
            InitialSpec::UniformBox { region } => SparsePmf::uniform_box(lattice, region),
            InitialSpec::Delta { point } => {
                let p: LatticePoint = lattice.snap(point)?;
                SparsePmf::delta(lattice, p)
            }
            InitialSpec::Explicit { pmf } => {
                pmf.lattice().check_compatible(&lattice)?;
                Ok(pmf.clone())
            }
        }
    }

    pub fn disturbance_pmf(&self) -> fsreach_core::Result<SparsePmf> {
        self.disturbance.discretize(&self.displacement_lattice()?)
    }

    pub fn run<C: Clock>(&self, clock: &C) -> fsreach_core::Result<FsrResult> {
        let options = FsrOptions { prune_threshold: self.prune_threshold };
        fsr_compute(&self.initial_pmf()?, &self.dynamics()?, &self.disturbance_pmf()?, self.tau, &options, clock)
    }

    pub fn run_dp<C: Clock>(&self, clock: &C) -> AppResult<FsrResult> {
        let domain =
            self.dp_domain.as_ref().ok_or_else(|| AppError::Usage("the job has no dp_domain for the dense baseline".into()))?;
        Ok(dp_baseline(&self.initial_pmf()?, &self.dynamics()?, &self.disturbance_pmf()?, domain, self.tau, clock)?)
    }
}

/// Largest entrywise difference between two PMFs over the union of supports.
pub fn max_abs_diff(a: &SparsePmf, b: &SparsePmf) -> f64 {
    let mut worst = 0.0f64;
    for (p, m) in a.iter() {
        worst = worst.max((m - b.get(p)).abs());
    }
    for (p, m) in b.iter() {
        worst = worst.max((m - a.get(p)).abs());
    }
    worst
}
