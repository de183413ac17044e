use crate::error::{Error, Result};
use crate::graph::{DependencyOptions, NodeId};
use crate::runtime::{CopyPlan, Model, ModelValues};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceEstimate {
    pub estimate: f64,
    /// Natural log of the estimate, computed stably.
    pub log_estimate: f64,
    /// Standard deviation of the weights over the square root of the
    /// number of rows.
    pub mcse: f64,
    pub rows: usize,
    /// Rows whose model log probability was NaN; they contribute nothing.
    pub skipped_nan: usize,
}

/// Importance-sampling estimator of the marginal probability of the
/// dependencies of `sample_nodes`.
#[derive(Debug, Clone)]
pub struct ImportanceSampler {
    sample_nodes: Vec<NodeId>,
    calc_nodes: Vec<NodeId>,
}

impl ImportanceSampler {
    pub fn new(model: &Model, sample_nodes: &[NodeId]) -> Result<Self> {
        if sample_nodes.is_empty() {
            return Err(Error::InvalidArgument("no sample nodes".into()));
        }
        let calc_nodes = model.dependencies(sample_nodes, DependencyOptions::default())?;
        Ok(ImportanceSampler {
            sample_nodes: sample_nodes.to_vec(),
            calc_nodes,
        })
    }

    pub fn sample_nodes(&self) -> &[NodeId] {
        &self.sample_nodes
    }

    pub fn calculation_nodes(&self) -> &[NodeId] {
        &self.calc_nodes
    }

    /// Averages `exp(calculate(calculation nodes) - simulated_log_probs[k])`
    /// over the rows of `samples`.
    pub fn run(
        &self,
        model: &mut Model,
        samples: &ModelValues,
        simulated_log_probs: &[f64],
    ) -> Result<ImportanceEstimate> {
        let m = samples.rows();
        if m != simulated_log_probs.len() {
            return Err(Error::InvalidArgument(format!(
                "{m} sample rows but {} proposal log probabilities",
                simulated_log_probs.len()
            )));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("empty sample".into()));
        }
        let plan = CopyPlan::new(model.definition(), samples, &self.sample_nodes, false)?;
        let mut log_w = Vec::with_capacity(m);
        let mut skipped_nan = 0;
        for (k, &sim) in simulated_log_probs.iter().enumerate() {
            plan.values_to_model(samples, k + 1, model)?;
            let lp = model.calculate(&self.calc_nodes) - sim;
            if lp.is_nan() {
                skipped_nan += 1;
            } else {
                log_w.push(lp);
            }
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Ok(ImportanceEstimate {
                estimate: 0.0,
                log_estimate: f64::NEG_INFINITY,
                mcse: 0.0,
                rows: m,
                skipped_nan,
            });
        }
        // weights relative to the largest keep the sums in range
        let rel: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let n = m as f64;
        let mean_rel = rel.iter().sum::<f64>() / n;
        let log_estimate = max + mean_rel.ln();
        let sd_rel = if m > 1 {
            let ss = rel.iter().map(|r| (r - mean_rel).powi(2)).sum::<f64>()
                + skipped_nan as f64 * mean_rel * mean_rel;
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(ImportanceEstimate {
            estimate: log_estimate.exp(),
            log_estimate,
            mcse: sd_rel * max.exp() / n.sqrt(),
            rows: m,
            skipped_nan,
        })
    }
}

/// Draws `m` values of `sample_nodes` from their prior at the model's
/// current parent values. Returns the draws and their log probabilities
/// under that prior.
pub fn draw_prior_samples(
    model: &mut Model,
    sample_nodes: &[NodeId],
    m: usize,
) -> Result<(ModelValues, Vec<f64>)> {
    if sample_nodes.is_empty() {
        return Err(Error::InvalidArgument("no sample nodes".into()));
    }
    let def = model.definition().clone();
    for &n in sample_nodes {
        if n >= def.len() || !def.node(n).is_stochastic() {
            return Err(Error::InvalidArgument(format!(
                "sample node `{}` is not stochastic",
                if n < def.len() { def.node_name(n) } else { "?" }
            )));
        }
    }
    let mut names: Vec<&str> = Vec::new();
    for &n in sample_nodes {
        let v = &def.variables()[def.node(n).variable].name;
        if !names.contains(&v.as_str()) {
            names.push(v);
        }
    }
    let mut sorted = sample_nodes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let sim_nodes = model.dependencies(
        &sorted,
        DependencyOptions {
            deterministic_only: true,
            stochastic_only_terminal: false,
            ..Default::default()
        },
    )?;
    let mut mv = ModelValues::for_variables(&def, &names, m, false)?;
    let plan = CopyPlan::new(&def, &mv, &sorted, false)?;
    let mut log_probs = Vec::with_capacity(m);
    for k in 1..=m {
        model.simulate(&sim_nodes, true);
        log_probs.push(model.calculate(&sorted));
        plan.model_to_values(model, &mut mv, k)?;
    }
    Ok((mv, log_probs))
}
