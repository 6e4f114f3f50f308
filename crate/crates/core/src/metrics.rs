//! Consumption fractions, heat allocation errors and the global indicators
//! used to compare accounting methods.
//!
//! Fractions and errors are in percent / percentage points.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Consumption of one group of radiators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetConsumption {
    pub subset_id: String,
    /// kWh, or allocation units for a nominally rated allocator.
    pub value: f64,
    pub members: Vec<String>,
}

/// Named groups of radiators, each radiator in exactly one group.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Subsets {
    pub groups: Vec<(String, Vec<String>)>,
}

impl Subsets {
    /// One subset per radiator.
    pub fn per_radiator<S: AsRef<str>>(ids: &[S]) -> Self {
        Self {
            groups: ids
                .iter()
                .map(|id| (String::from(id.as_ref()), alloc::vec![String::from(id.as_ref())]))
                .collect(),
        }
    }

    /// Groups by a key, keeping first-appearance order.
    pub fn from_assignments<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut groups: Vec<(String, Vec<String>)> = Vec::new();
        for (radiator, subset) in pairs {
            match groups.iter_mut().find(|(s, _)| s == subset) {
                Some((_, m)) => m.push(radiator.into()),
                None => groups.push((subset.into(), alloc::vec![radiator.into()])),
            }
        }
        Self { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Every radiator of `ids` must belong to exactly one non-empty subset
    /// and every member must be known.
    pub fn check<S: AsRef<str>>(&self, ids: &[S]) -> Result<(), Error> {
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        for (g, (_, members)) in self.groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidConfig {
                    field: "subsets".into(),
                    reason: alloc::format!("subset {} is empty", self.groups[g].0),
                });
            }
            for m in members {
                if !ids.iter().any(|i| i.as_ref() == m) {
                    return Err(Error::UnknownRadiator(m.clone()));
                }
                if owner.insert(m.as_str(), g).is_some() {
                    return Err(Error::InvalidConfig {
                        field: "subsets".into(),
                        reason: alloc::format!("radiator {m} is in more than one subset"),
                    });
                }
            }
        }
        if let Some(missing) = ids.iter().find(|i| !owner.contains_key(i.as_ref())) {
            return Err(Error::InvalidConfig {
                field: "subsets".into(),
                reason: alloc::format!("radiator {} is in no subset", missing.as_ref()),
            });
        }
        Ok(())
    }

    /// Sums per-radiator values into per-subset values.
    pub fn aggregate<S: AsRef<str>>(&self, ids: &[S], values: &[f64]) -> Result<Vec<SubsetConsumption>, Error> {
        if ids.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: values.len(),
            });
        }
        self.check(ids)?;
        Ok(self
            .groups
            .iter()
            .map(|(id, members)| SubsetConsumption {
                subset_id: id.clone(),
                value: members
                    .iter()
                    .map(|m| values[ids.iter().position(|i| i.as_ref() == m).unwrap_or(0)])
                    .sum(),
                members: members.clone(),
            })
            .collect())
    }

    /// Root-sum-square of per-radiator uncertainties per subset.
    pub fn aggregate_uncertainty<S: AsRef<str>>(&self, ids: &[S], u: &[f64]) -> Result<Vec<f64>, Error> {
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        Ok(self
            .aggregate(ids, &sq)?
            .into_iter()
            .map(|c| libm::sqrt(c.value))
            .collect())
    }
}

/// Share of each subset in the total, percent.
pub fn fractions(consumptions: &[f64]) -> Result<Vec<f64>, Error> {
    if consumptions.len() < 2 {
        return Err(Error::InvalidArgument("at least two subsets are needed"));
    }
    if consumptions.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if consumptions.iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidArgument("negative consumption"));
    }
    let total: f64 = consumptions.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotal);
    }
    Ok(consumptions.iter().map(|x| 100.0 * x / total).collect())
}

pub fn fractions_of(consumptions: &[SubsetConsumption]) -> Result<Vec<f64>, Error> {
    let v: Vec<f64> = consumptions.iter().map(|c| c.value).collect();
    fractions(&v)
}

/// Heat allocation errors `f − f_ref`, percentage points.
pub fn allocation_errors(f: &[f64], f_ref: &[f64]) -> Result<Vec<f64>, Error> {
    if f.len() != f_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: f_ref.len(),
            found: f.len(),
        });
    }
    Ok(f.iter().zip(f_ref).map(|(a, b)| a - b).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalIndicators {
    /// Population standard deviation of the errors, pp.
    pub sigma: f64,
    pub max: f64,
    pub min: f64,
    /// Mean absolute percentage error, %.
    pub mape: f64,
    /// Sum of `|E| − |E_baseline|`, pp.
    pub delta_e_hca: Option<f64>,
    /// Share of subsets strictly better than the baseline, %.
    pub p_l: Option<f64>,
}

pub fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

pub fn global_indicators(
    errors: &[f64],
    f_ref: &[f64],
    baseline: Option<&[f64]>,
) -> Result<GlobalIndicators, Error> {
    if errors.len() != f_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: f_ref.len(),
            found: errors.len(),
        });
    }
    if errors.is_empty() {
        return Err(Error::InvalidArgument("no subsets"));
    }
    if let Some(i) = f_ref.iter().position(|f| *f == 0.0) {
        return Err(Error::ZeroReference(i));
    }
    let n = errors.len() as f64;
    let mape = 100.0 / n * errors.iter().zip(f_ref).map(|(e, f)| libm::fabs(*e) / f).sum::<f64>();
    let (delta_e_hca, p_l) = match baseline {
        None => (None, None),
        Some(b) => {
            if b.len() != errors.len() {
                return Err(Error::DimensionMismatch {
                    expected: errors.len(),
                    found: b.len(),
                });
            }
            let delta = errors
                .iter()
                .zip(b)
                .map(|(e, eb)| libm::fabs(*e) - libm::fabs(*eb))
                .sum::<f64>();
            let better = errors
                .iter()
                .zip(b)
                .filter(|(e, eb)| libm::fabs(**e) < libm::fabs(**eb))
                .count();
            (Some(delta), Some(100.0 * better as f64 / n))
        }
    };
    Ok(GlobalIndicators {
        sigma: population_std(errors),
        max: errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: errors.iter().copied().fold(f64::INFINITY, f64::min),
        mape,
        delta_e_hca,
        p_l,
    })
}

/// `√(σ² + ū²)`
pub fn global_uncertainty(sigma: f64, mean_u: f64) -> f64 {
    libm::sqrt(sigma * sigma + mean_u * mean_u)
}

/// One subset row of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub subset_id: String,
    pub fraction: f64,
    pub reference_fraction: f64,
    pub error: f64,
    /// Standard uncertainty of the error, pp.
    pub u_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub method: String,
    pub rows: Vec<SubsetRow>,
    pub indicators: GlobalIndicators,
    /// Mean of the per-subset error uncertainties, pp.
    pub mean_u_error: f64,
    pub u_global: f64,
}

impl AllocationReport {
    /// Builds a report from subset consumptions of a method and of the
    /// reference, with per-subset error uncertainties (zeros if unknown).
    pub fn build(
        method: &str,
        estimated: &[SubsetConsumption],
        reference: &[SubsetConsumption],
        u_error: &[f64],
        baseline_errors: Option<&[f64]>,
    ) -> Result<Self, Error> {
        if estimated.len() != reference.len() || u_error.len() != estimated.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.len(),
                found: estimated.len(),
            });
        }
        let f = fractions_of(estimated)?;
        let f_ref = fractions_of(reference)?;
        let e = allocation_errors(&f, &f_ref)?;
        let indicators = global_indicators(&e, &f_ref, baseline_errors)?;
        let mean_u_error = u_error.iter().sum::<f64>() / u_error.len() as f64;
        let rows = estimated
            .iter()
            .zip(&f)
            .zip(&f_ref)
            .zip(&e)
            .zip(u_error)
            .map(|((((c, f), fr), e), u)| SubsetRow {
                subset_id: c.subset_id.clone(),
                fraction: *f,
                reference_fraction: *fr,
                error: *e,
                u_error: *u,
            })
            .collect();
        Ok(Self {
            method: method.into(),
            u_global: global_uncertainty(indicators.sigma, mean_u_error),
            rows,
            indicators,
            mean_u_error,
        })
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }
}
