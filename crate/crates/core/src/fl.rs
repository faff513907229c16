//! Intermittent federated learning: synchronous rounds with a lossless
//! broadcast, parallel local passes, per-client uplink erasures and
//! size-weighted aggregation of the uploads that got through.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{outage_probability, QuadratureSpec};
use crate::data::{LabeledDataset, Partition, PartitionMode};
use crate::error::{check, Error, Result};
use crate::geometry::{sample_uplink_sir, NetworkConfig};
use crate::nn::{evaluate, init_model, local_pass, ModelVector, NetSpec};
use crate::seed::{domain, rng_for};

/// Uplink outage probability of a run: a number, or `"from-geometry"` to
/// resolve it from the network model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOutage", into = "RawOutage")]
pub enum OutageSpec {
    Probability(f64),
    FromGeometry,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawOutage {
    Number(f64),
    Text(String),
}

impl TryFrom<RawOutage> for OutageSpec {
    type Error = String;

    fn try_from(raw: RawOutage) -> std::result::Result<Self, String> {
        match raw {
            RawOutage::Number(p) => Ok(OutageSpec::Probability(p)),
            RawOutage::Text(s) if s == "from-geometry" => Ok(OutageSpec::FromGeometry),
            RawOutage::Text(s) => Err(format!("p_out must be a number or \"from-geometry\", got `{s}`")),
        }
    }
}

impl From<OutageSpec> for RawOutage {
    fn from(p: OutageSpec) -> Self {
        match p {
            OutageSpec::Probability(v) => RawOutage::Number(v),
            OutageSpec::FromGeometry => RawOutage::Text("from-geometry".into()),
        }
    }
}

impl OutageSpec {
    /// Resolves `from-geometry` once per run through the analytical outage.
    pub fn resolve(&self, network: Option<&NetworkConfig>, quad: &QuadratureSpec) -> Result<f64> {
        match *self {
            OutageSpec::Probability(p) => {
                check((0.0..=1.0).contains(&p), "p_out", p, "must lie in [0,1]")?;
                Ok(p)
            }
            OutageSpec::FromGeometry => {
                let net = network
                    .ok_or_else(|| Error::InvalidConfig("p_out = \"from-geometry\" needs a network config".into()))?;
                Ok(outage_probability(net, quad)?.p_out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlConfig {
    pub num_clients: usize,
    pub rounds: usize,
    pub samples_per_client: usize,
    pub partition: PartitionMode,
    pub p_out: OutageSpec,
    pub net_spec: NetSpec,
    pub master_seed: u64,
}

impl FlConfig {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        check(
            self.num_clients >= 1,
            "num_clients",
            self.num_clients as f64,
            "must be >= 1",
        )?;
        check(self.rounds >= 1, "rounds", self.rounds as f64, "must be >= 1")?;
        if let OutageSpec::Probability(p) = self.p_out {
            check((0.0..=1.0).contains(&p), "p_out", p, "must lie in [0,1]")?;
        }
        if self.partition == PartitionMode::NonIid && !self.num_clients.is_multiple_of(class_count) {
            return Err(Error::InvalidConfig(format!(
                "non-i.i.d. runs need num_clients ({}) to be a multiple of {class_count}",
                self.num_clients
            )));
        }
        self.net_spec.validate()
    }
}

/// Per-round uplink success indicators `β_{i,t}`.
#[derive(Clone, Debug)]
pub enum UplinkModel {
    /// i.i.d. Bernoulli erasures with a fixed outage probability.
    Bernoulli { p_out: f64 },
    /// Each client draws a fresh SIR realization every round.
    Geometry(NetworkConfig),
}

impl UplinkModel {
    /// Success mask for round `t`, from streams derived from `(seed, t)`.
    pub fn mask(&self, seed: u64, round: usize, k: usize) -> Result<Vec<bool>> {
        match self {
            UplinkModel::Bernoulli { p_out } => {
                let mut rng = rng_for(seed, domain::MASK, &[round as u64]);
                Ok(sample_outage_mask(*p_out, k, &mut rng))
            }
            UplinkModel::Geometry(net) => (0..k)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(seed, domain::GEO_MASK, &[round as u64, i as u64]);
                    sample_uplink_sir(net, &mut rng).map(|s| s.sir > net.eta)
                })
                .collect(),
        }
    }
}

/// `k` independent upload indicators, each `true` with probability `1 − p_out`.
pub fn sample_outage_mask<R: Rng + ?Sized>(p_out: f64, k: usize, rng: &mut R) -> Vec<bool> {
    let success = 1.0 - p_out;
    (0..k).map(|_| rng.random::<f64>() < success).collect()
}

/// Normalised aggregation weights `β_i·|D_i| / Σ_j β_j·|D_j|`, or `None` if
/// nothing was received.
pub fn aggregation_weights(sizes: &[usize], mask: &[bool]) -> Option<Vec<f64>> {
    let total: usize = sizes.iter().zip(mask).filter(|(_, &b)| b).map(|(s, _)| s).sum();
    if total == 0 {
        return None;
    }
    Some(
        sizes
            .iter()
            .zip(mask)
            .map(|(&s, &b)| if b { s as f64 / total as f64 } else { 0.0 })
            .collect(),
    )
}

/// Size-weighted mean of the received gradients; `None` when every upload
/// failed, in which case the server keeps its model.
pub fn aggregate(gradients: &[ModelVector], sizes: &[usize], mask: &[bool]) -> Result<Option<ModelVector>> {
    if gradients.len() != sizes.len() || sizes.len() != mask.len() {
        return Err(Error::LengthMismatch(format!(
            "{} gradients, {} sizes, {} mask entries",
            gradients.len(),
            sizes.len(),
            mask.len()
        )));
    }
    if let Some(g) = gradients.iter().find(|g| g.len() != gradients[0].len()) {
        return Err(Error::LengthMismatch(format!(
            "gradient lengths {} and {}",
            gradients[0].len(),
            g.len()
        )));
    }
    let Some(weights) = aggregation_weights(sizes, mask) else {
        return Ok(None);
    };
    let received: Vec<(f64, &ModelVector)> = weights.into_iter().zip(gradients).filter(|(w, _)| *w > 0.0).collect();
    combine(&received).map(Some)
}

fn combine(received: &[(f64, &ModelVector)]) -> Result<ModelVector> {
    let mut acc = ModelVector::zeros(received[0].1.layout().to_vec());
    for (w, g) in received {
        acc.add_scaled(*w, g)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub mask: Vec<bool>,
    pub participating_size: usize,
    /// Accuracy on the union of the clients' test shares.
    pub global_accuracy: f64,
    /// Accuracy on the union of the clients' training sets.
    pub train_accuracy: f64,
    pub aggregated: bool,
}

#[derive(Clone, Debug)]
pub struct TrainingTrace {
    pub config: FlConfig,
    pub initial_accuracy: f64,
    pub rounds: Vec<RoundLog>,
    pub initial_model: ModelVector,
    pub final_model: ModelVector,
    pub final_accuracy: f64,
}

/// Runs training with i.i.d. Bernoulli erasures at the configured `p_out`.
/// `from-geometry` must be resolved beforehand (see [`OutageSpec::resolve`]).
pub fn run_training(fl: &FlConfig, data: &Partition, eval_set: &LabeledDataset) -> Result<TrainingTrace> {
    let OutageSpec::Probability(p_out) = fl.p_out else {
        return Err(Error::InvalidConfig(
            "resolve p_out = \"from-geometry\" before training".into(),
        ));
    };
    run_training_with(fl, &UplinkModel::Bernoulli { p_out }, data, eval_set)
}

pub fn run_training_with(
    fl: &FlConfig,
    uplink: &UplinkModel,
    data: &Partition,
    eval_set: &LabeledDataset,
) -> Result<TrainingTrace> {
    let clients = &data.client_datasets;
    let class_count = eval_set.class_count;
    fl.validate(class_count)?;
    if let UplinkModel::Bernoulli { p_out } = uplink {
        check((0.0..=1.0).contains(p_out), "p_out", *p_out, "must lie in [0,1]")?;
    }
    if clients.len() != fl.num_clients {
        return Err(Error::LengthMismatch(format!(
            "{} client datasets for {} clients",
            clients.len(),
            fl.num_clients
        )));
    }
    if eval_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sizes: Vec<usize> = clients.iter().map(LabeledDataset::len).collect();
    if sizes.iter().any(|&s| s != sizes[0] || s == 0) {
        return Err(Error::InvalidConfig(
            "client datasets must be non-empty and of equal size".into(),
        ));
    }
    let train_union = LabeledDataset::union(clients, class_count);
    let lr = fl.net_spec.learning_rate;
    let seed = fl.master_seed;

    let initial_model = init_model(&fl.net_spec);
    let mut model = initial_model.clone();
    let initial_accuracy = evaluate(&model, eval_set)?;
    let mut accuracy = (initial_accuracy, evaluate(&model, &train_union)?);
    let mut rounds = Vec::with_capacity(fl.rounds);

    for t in 1..=fl.rounds {
        let mask = uplink.mask(seed, t, fl.num_clients)?;
        let weights = aggregation_weights(&sizes, &mask);
        let participating_size: usize = sizes.iter().zip(&mask).filter(|(_, &b)| b).map(|(s, _)| s).sum();
        if let Some(weights) = weights {
            // An erased upload never reaches the server, so only clients whose
            // upload succeeds need to run their local pass.
            let received: Vec<(f64, ModelVector)> = (0..fl.num_clients)
                .into_par_iter()
                .filter(|&i| mask[i])
                .map(|i| {
                    let mut rng = rng_for(seed, domain::LOCAL, &[t as u64, i as u64]);
                    let mut order: Vec<usize> = (0..sizes[i]).collect();
                    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                    local_pass(&model, &clients[i], &order, lr).map(|g| (weights[i], g))
                })
                .collect::<Result<_>>()?;
            let refs: Vec<(f64, &ModelVector)> = received.iter().map(|(w, g)| (*w, g)).collect();
            let step = combine(&refs)?;
            model.add_scaled(1.0, &step)?;
            accuracy = (evaluate(&model, eval_set)?, evaluate(&model, &train_union)?);
        }
        rounds.push(RoundLog {
            round: t,
            mask,
            participating_size,
            global_accuracy: accuracy.0,
            train_accuracy: accuracy.1,
            aggregated: participating_size > 0,
        });
    }
    Ok(TrainingTrace {
        config: fl.clone(),
        initial_accuracy,
        rounds,
        initial_model,
        final_accuracy: accuracy.0,
        final_model: model,
    })
}
