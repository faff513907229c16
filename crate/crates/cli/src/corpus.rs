//! Per-run client data: a class-balanced pool drawn for each seed, then
//! split 2:1 and dealt to the clients.

use uavfl::data::{
    federate, load_mnist_dir, stratified_subset, synthesize_digits, FederatedData, LabeledDataset, PartitionMode,
    SyntheticSpec,
};

use crate::config::{DataSection, DataSource, FlSection};
use crate::error::{CliError, CliResult};

const CLASSES: usize = 10;

pub enum Corpus {
    Synthetic(SyntheticSpec),
    Loaded(LabeledDataset),
}

impl Corpus {
    pub fn open(data: &DataSection) -> CliResult<Self> {
        match data.source {
            DataSource::Synthetic => Ok(Corpus::Synthetic(SyntheticSpec {
                noise: data.synthetic_noise,
                max_shift: data.synthetic_shift,
            })),
            DataSource::Mnist => {
                let dir = data
                    .dir
                    .as_ref()
                    .ok_or_else(|| CliError::Config("mnist source needs a data directory".into()))?;
                Ok(Corpus::Loaded(load_mnist_dir(dir)?))
            }
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            Corpus::Synthetic(_) => CLASSES,
            Corpus::Loaded(ds) => ds.class_count,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Corpus::Synthetic(_) => uavfl::data::GLYPH_SIDE * uavfl::data::GLYPH_SIDE,
            Corpus::Loaded(ds) => ds.dim(),
        }
    }

    /// Client training sets and test shares for `k` clients under `seed`.
    pub fn federated(&self, fl: &FlSection, k: usize, mode: PartitionMode, seed: u64) -> CliResult<FederatedData> {
        let c = self.class_count();
        let per_class = pool_per_class(k, c, fl.samples_per_client, fl.test_samples_per_client);
        let pool = match self {
            Corpus::Synthetic(spec) => synthesize_digits(per_class, *spec, seed)?,
            Corpus::Loaded(ds) => stratified_subset(ds, per_class, seed)?,
        };
        Ok(federate(
            &pool,
            k,
            fl.samples_per_client,
            fl.test_samples_per_client,
            mode,
            seed,
        )?)
    }
}

/// Smallest per-class pool whose 2:1 split covers every client in either
/// partition mode.
pub fn pool_per_class(k: usize, classes: usize, train: usize, test: usize) -> usize {
    k.div_ceil(classes) * 3 * test.max(train.div_ceil(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_covers_both_modes() {
        let fl = FlSection::default();
        let corpus = Corpus::Synthetic(SyntheticSpec {
            noise: 0.3,
            max_shift: 2,
        });
        for k in [1, 7, 10, 30, 50] {
            let fed = corpus.federated(&fl, k, PartitionMode::Iid, 3).unwrap();
            assert_eq!(fed.train.client_datasets.len(), k);
            assert_eq!(fed.test_union.len(), 10 * k);
        }
        for k in [10, 50] {
            let fed = corpus.federated(&fl, k, PartitionMode::NonIid, 3).unwrap();
            assert_eq!(fed.train_union.len(), 20 * k);
        }
        assert_eq!(pool_per_class(30, 10, 20, 10), 90);
    }
}
