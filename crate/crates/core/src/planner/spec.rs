use serde::{Deserialize, Serialize};

use super::PlanError;

/// Which signal the meter reports back after each submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The band of every submission, independently.
    Regular,
    /// The running maximum band over the retained history.
    Incremental,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Regular => f.write_str("regular"),
            Mode::Incremental => f.write_str("incremental"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(Mode::Regular),
            "incremental" => Ok(Mode::Incremental),
            other => Err(PlanError::constraint(
                "mode",
                format!("unknown mode `{other}`, expected `regular` or `incremental`"),
            )),
        }
    }
}

/// Per-signal distributional-overfitting tolerances, nondecreasing in the
/// signal index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsilonSchedule(Vec<f64>);

impl EpsilonSchedule {
    pub fn new(epsilons: Vec<f64>) -> Result<Self, PlanError> {
        if epsilons.is_empty() {
            return Err(PlanError::constraint("epsilons", "schedule must have at least one entry"));
        }
        for (i, &eps) in epsilons.iter().enumerate() {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(PlanError::OutOfRange {
                    param: "epsilon",
                    value: eps,
                    expected: "(0, 1]",
                });
            }
            if i > 0 && eps < epsilons[i - 1] {
                return Err(PlanError::constraint(
                    "epsilons",
                    format!(
                        "schedule must be nondecreasing, but epsilon[{}]={} < epsilon[{}]={}",
                        i + 1,
                        eps,
                        i,
                        epsilons[i - 1]
                    ),
                ));
            }
        }
        Ok(Self(epsilons))
    }

    pub fn uniform(epsilon: f64, m: usize) -> Result<Self, PlanError> {
        if m == 0 {
            return Err(PlanError::constraint("m", "signal count must be positive"));
        }
        Self::new(vec![epsilon; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The smallest tolerance, which dominates the union bound.
    pub fn first(&self) -> f64 {
        self.0[0]
    }

    /// Tolerance of the 1-based signal `k`.
    pub fn get(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn is_uniform(&self) -> bool {
        self.0.iter().all(|&e| e == self.0[0])
    }
}

impl TryFrom<Vec<f64>> for EpsilonSchedule {
    type Error = PlanError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EpsilonSchedule> for Vec<f64> {
    fn from(value: EpsilonSchedule) -> Self {
        value.0
    }
}

/// Empirical-overfitting range covered by one signal. Half-open `[lower, upper)`
/// except the last band of a meter, which is closed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }
}

/// Everything a metering session is planned against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterSpec {
    pub mode: Mode,
    pub bands: Vec<Band>,
    pub epsilons: EpsilonSchedule,
    pub delta: f64,
    /// Development-cycle length T.
    pub steps: u32,
    /// Per-tenant step counts; a single entry equal to `steps` for one tenant.
    pub tenancy: Vec<u32>,
    /// Planned revert steps t_1 <= ... <= t_B; the revert budget is its length.
    #[serde(default)]
    pub revert_steps: Vec<u32>,
    #[serde(default)]
    pub conservative_multitenant: bool,
}

impl MeterSpec {
    /// Single-tenant spec with equal-width bands and one tolerance for every
    /// signal.
    pub fn uniform(mode: Mode, m: usize, steps: u32, epsilon: f64, delta: f64) -> Result<Self, PlanError> {
        let epsilons = EpsilonSchedule::uniform(epsilon, m)?;
        let spec = Self {
            mode,
            bands: equal_width_bands(m),
            epsilons,
            delta,
            steps,
            tenancy: vec![steps],
            revert_steps: Vec::new(),
            conservative_multitenant: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-tenant spec with equal-width bands and the given schedule.
    pub fn with_schedule(mode: Mode, epsilons: EpsilonSchedule, steps: u32, delta: f64) -> Result<Self, PlanError> {
        let spec = Self {
            mode,
            bands: equal_width_bands(epsilons.len()),
            epsilons,
            delta,
            steps,
            tenancy: vec![steps],
            revert_steps: Vec::new(),
            conservative_multitenant: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Signal count m.
    pub fn m(&self) -> usize {
        self.bands.len()
    }

    pub fn revert_budget(&self) -> u32 {
        self.revert_steps.len() as u32
    }

    pub fn tenants(&self) -> usize {
        self.tenancy.len()
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.steps == 0 {
            return Err(PlanError::constraint("T", "development-cycle length must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PlanError::OutOfRange {
                param: "delta",
                value: self.delta,
                expected: "(0, 1)",
            });
        }
        validate_bands(&self.bands)?;
        if self.epsilons.len() != self.bands.len() {
            return Err(PlanError::constraint(
                "epsilons",
                format!(
                    "schedule has {} entries but the meter has {} bands",
                    self.epsilons.len(),
                    self.bands.len()
                ),
            ));
        }
        if self.tenancy.is_empty() {
            return Err(PlanError::constraint("tenancy", "at least one tenant is required"));
        }
        if self.tenancy.iter().any(|&t| t == 0) {
            return Err(PlanError::constraint("tenancy", "every tenant needs at least one step"));
        }
        let tenant_sum: u64 = self.tenancy.iter().map(|&t| u64::from(t)).sum();
        if tenant_sum != u64::from(self.steps) {
            return Err(PlanError::constraint(
                "tenancy",
                format!("tenant step counts sum to {tenant_sum}, expected T={}", self.steps),
            ));
        }
        super::counts::shifted_revert_steps(self.steps, &self.revert_steps)?;
        if self.tenancy.len() > 1 && !self.revert_steps.is_empty() {
            return Err(PlanError::IncompatibleOptions(
                "reverts cannot be combined with more than one tenant".into(),
            ));
        }
        Ok(())
    }

    /// 1-based band index containing `overfitting`, under the half-open
    /// convention with the last band closed at 1.
    pub fn band_index(&self, overfitting: f64) -> usize {
        band_index(&self.bands, overfitting)
    }
}

/// `m` bands of width 1/m covering [0, 1].
pub fn equal_width_bands(m: usize) -> Vec<Band> {
    (0..m)
        .map(|i| {
            let lower = if i == 0 { 0.0 } else { i as f64 / m as f64 };
            let upper = if i + 1 == m { 1.0 } else { (i + 1) as f64 / m as f64 };
            Band::new(lower, upper)
        })
        .collect()
}

/// Bands from interior cut points, e.g. `[0.05, 0.1]` gives
/// `[0,0.05) [0.05,0.1) [0.1,1]`.
pub fn bands_from_cuts(cuts: &[f64]) -> Result<Vec<Band>, PlanError> {
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(0.0);
    edges.extend_from_slice(cuts);
    edges.push(1.0);
    let bands: Vec<Band> = edges.windows(2).map(|w| Band::new(w[0], w[1])).collect();
    validate_bands(&bands)?;
    Ok(bands)
}

pub(crate) fn validate_bands(bands: &[Band]) -> Result<(), PlanError> {
    if bands.is_empty() {
        return Err(PlanError::constraint("bands", "a meter needs at least one band"));
    }
    if bands[0].lower != 0.0 {
        return Err(PlanError::constraint("bands", "first band must start at 0"));
    }
    if bands[bands.len() - 1].upper != 1.0 {
        return Err(PlanError::constraint("bands", "last band must end at 1"));
    }
    for (i, band) in bands.iter().enumerate() {
        if !(band.lower < band.upper) {
            return Err(PlanError::constraint(
                "bands",
                format!("band {} is empty: [{}, {})", i + 1, band.lower, band.upper),
            ));
        }
        if i + 1 < bands.len() && band.upper != bands[i + 1].lower {
            return Err(PlanError::constraint(
                "bands",
                format!(
                    "bands {} and {} are not contiguous ({} != {})",
                    i + 1,
                    i + 2,
                    band.upper,
                    bands[i + 1].lower
                ),
            ));
        }
    }
    Ok(())
}

pub(crate) fn band_index(bands: &[Band], overfitting: f64) -> usize {
    bands
        .iter()
        .position(|b| overfitting < b.upper)
        .map(|i| i + 1)
        .unwrap_or(bands.len())
}
