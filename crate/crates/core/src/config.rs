//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dense::DEFAULT_DENSE_CAP;
use crate::embedding::DEFAULT_N_CAP;
use crate::error::{HpmError, Result};
use crate::instance::{generate_instance, GenerateSpec};
use crate::ode::QuadraticOde;
use crate::sparse::SparseMatrix;
use crate::taylor::{MarchingOverrides, SolveOptions, SolverKind};

/// Optional manual choices that replace the automatic parameter recipe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cap: Option<usize>,
    /// Sub-steps per marching step when sampling `g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_refine: Option<usize>,
}

impl Overrides {
    pub fn marching(&self) -> MarchingOverrides {
        MarchingOverrides {
            k: self.k,
            m: self.m,
            p: self.p,
            h: self.h,
        }
    }

    pub fn dense_cap(&self) -> usize {
        self.dense_cap.unwrap_or(DEFAULT_DENSE_CAP)
    }

    pub fn n_cap(&self) -> usize {
        self.n_cap.unwrap_or(DEFAULT_N_CAP)
    }
}

/// `(row, col, value)` entries, 0-based.
pub type Triplets = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "F1_path", default, skip_serializing_if = "Option::is_none")]
    pub f1_path: Option<PathBuf>,
    #[serde(rename = "F1_triplets", default, skip_serializing_if = "Option::is_none")]
    pub f1_triplets: Option<Triplets>,
    #[serde(rename = "F2_path", default, skip_serializing_if = "Option::is_none")]
    pub f2_path: Option<PathBuf>,
    #[serde(rename = "F2_triplets", default, skip_serializing_if = "Option::is_none")]
    pub f2_triplets: Option<Triplets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_in: Option<Vec<f64>>,
    /// Random instance instead of explicit matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub assume_valid: bool,
    #[serde(default)]
    pub force: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// RK4 step for the reference solution; defaults to `min(0.1/||F1||, T/1000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_dt: Option<f64>,
    #[serde(default)]
    pub overrides: Overrides,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    /// A config with explicit triplets and default everything else.
    pub fn inline(ode: &QuadraticOde, t_final: f64, epsilon: f64) -> Self {
        Self {
            n: Some(ode.n()),
            f1_triplets: Some(ode.f1().triplets().collect()),
            f2_triplets: Some(ode.f2().triplets().collect()),
            u_in: Some(ode.u_in().to_vec()),
            ..Self::inline_empty(t_final, epsilon)
        }
    }

    /// A config that generates a seeded random instance.
    pub fn generated(spec: GenerateSpec, t_final: f64, epsilon: f64) -> Self {
        Self {
            generate: Some(spec),
            ..Self::inline_empty(t_final, epsilon)
        }
    }

    fn inline_empty(t_final: f64, epsilon: f64) -> Self {
        Self {
            n: None,
            f1_path: None,
            f1_triplets: None,
            f2_path: None,
            f2_triplets: None,
            u_in: None,
            generate: None,
            t_final,
            epsilon,
            assume_valid: false,
            force: false,
            seed: None,
            output_dir: None,
            reference_dt: None,
            overrides: Overrides::default(),
            base_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative matrix paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(HpmError::InvalidParameter(format!("T must be >= 0, got {}", self.t_final)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(HpmError::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        let explicit = self.f1_path.is_some()
            || self.f1_triplets.is_some()
            || self.f2_path.is_some()
            || self.f2_triplets.is_some()
            || self.u_in.is_some();
        match (&self.generate, explicit) {
            (Some(_), true) => {
                return Err(HpmError::InvalidParameter(
                    "give either `generate` or explicit F1/F2/u_in, not both".into(),
                ))
            }
            (None, false) => {
                return Err(HpmError::InvalidParameter(
                    "config needs F1_path/F1_triplets, F2_path/F2_triplets and u_in (or `generate`)".into(),
                ))
            }
            _ => {}
        }
        if self.f1_path.is_some() && self.f1_triplets.is_some() {
            return Err(HpmError::InvalidParameter("F1_path and F1_triplets are exclusive".into()));
        }
        if self.f2_path.is_some() && self.f2_triplets.is_some() {
            return Err(HpmError::InvalidParameter("F2_path and F2_triplets are exclusive".into()));
        }
        let o = &self.overrides;
        for (name, v) in [("h", o.h), ("g", o.g), ("eta", o.eta), ("zeta", o.zeta), ("tol", o.tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(HpmError::InvalidParameter(format!("override {name} must be > 0, got {v}")));
                }
            }
        }
        if let Some(g) = o.g {
            if g < 1.0 {
                return Err(HpmError::InvalidParameter(format!("override g must be >= 1, got {g}")));
            }
        }
        if o.k == Some(0) || o.m == Some(0) || o.g_refine == Some(0) {
            return Err(HpmError::InvalidParameter("overrides k, m and g_refine must be >= 1".into()));
        }
        if let Some(dt) = self.reference_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(HpmError::InvalidParameter(format!("reference_dt must be > 0, got {dt}")));
            }
        }
        Ok(())
    }

    /// Seed used for generated instances: the top-level `seed` wins over `generate.seed`.
    pub fn effective_seed(&self) -> u64 {
        self.seed
            .or(self.generate.and_then(|g| g.seed))
            .unwrap_or(0)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn matrix(
        &self,
        name: &str,
        path: &Option<PathBuf>,
        triplets: &Option<Triplets>,
        rows: usize,
        cols: usize,
    ) -> Result<SparseMatrix> {
        let m = match (path, triplets) {
            (Some(p), _) => SparseMatrix::read_triplets(&self.resolve(p))?,
            (None, Some(t)) => SparseMatrix::from_triplets(rows, cols, t)?,
            (None, None) => return Err(HpmError::InvalidParameter(format!("{name} is missing"))),
        };
        if m.rows() != rows || m.cols() != cols {
            return Err(HpmError::InvalidParameter(format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(m)
    }

    /// Builds the ODE described by this config.
    pub fn build_ode(&self) -> Result<QuadraticOde> {
        self.validate()?;
        if let Some(spec) = self.generate {
            return generate_instance(spec.n, spec.s, spec.k_target, self.effective_seed());
        }
        let u_in = self
            .u_in
            .clone()
            .ok_or_else(|| HpmError::InvalidParameter("u_in is missing".into()))?;
        let n = self.n.unwrap_or(u_in.len());
        if n != u_in.len() {
            return Err(HpmError::DimensionMismatch {
                context: "u_in length vs n",
                expected: n,
                got: u_in.len(),
            });
        }
        let f1 = self.matrix("F1", &self.f1_path, &self.f1_triplets, n, n)?;
        let f2 = self.matrix("F2", &self.f2_path, &self.f2_triplets, n, n * n)?;
        QuadraticOde::new(f1, f2, u_in)
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut opts = SolveOptions::default();
        if let Some(s) = self.overrides.solver {
            opts.solver = s;
        }
        if let Some(t) = self.overrides.tol {
            opts.tol = t;
        }
        opts
    }
}
