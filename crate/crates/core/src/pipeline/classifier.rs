//! PointNet-style shape classifier: a shared per-point MLP, a max pool over
//! points and a dense head with a softmax over the shape categories.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::AutoEncoder;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, ShapeCategory};
use crate::nn::{Adam, AdamConfig, Checkpoint, Layer, Matrix, Sequential};

use super::dataset::LabeledCloud;

const NUM_CLASSES: usize = ShapeCategory::ALL.len();

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "classifier: batch_size and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: Sequential<f32>,
    trained: bool,
}

impl Classifier {
    /// Randomly initialized; refuses to classify until trained or loaded.
    pub fn untrained(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Sequential::mlp(
            &[3, 64, 128, 256],
            Layer::Relu,
            Some(Layer::Relu),
            true,
            &mut rng,
        );
        net.layers.push(Layer::MaxPoolOverPoints);
        let head = Sequential::mlp(&[256, 128, NUM_CLASSES], Layer::Relu, None, false, &mut rng);
        net.layers.extend(head.layers);
        Self {
            net,
            trained: false,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn logits(&self, cloud: &PointCloud) -> Result<Vec<f32>> {
        if !self.trained {
            return Err(Error::Invalid("classifier is untrained".into()));
        }
        Ok(self
            .net
            .forward(&AutoEncoder::<f32>::cloud_matrix(cloud))?
            .into_vec())
    }

    /// Highest-logit category; ties go to the lower category index.
    pub fn classify(&self, cloud: &PointCloud) -> Result<ShapeCategory> {
        let logits = self.logits(cloud)?;
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        Ok(ShapeCategory::from_index(best).expect("one logit per category"))
    }

    pub fn save_to(&self, ck: &mut Checkpoint) -> Result<()> {
        if !self.trained {
            return Err(Error::Invalid("classifier is untrained".into()));
        }
        ck.add_network("classifier", &self.net)?;
        Ok(())
    }

    pub fn load_from(ck: &Checkpoint) -> Result<Self> {
        let mut c = Self::untrained(0);
        ck.load_network("classifier", &mut c.net)?;
        c.trained = true;
        Ok(c)
    }
}

/// Softmax cross-entropy of `logits` against class `label` and its gradient.
pub fn softmax_cross_entropy(logits: &[f32], label: usize) -> (f64, Vec<f64>) {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &l| m.max(l as f64));
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() - (logits[label] as f64 - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, e)| e / z - if i == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

/// Adam on the mean cross-entropy; returns the per-epoch mean loss.
pub fn train_classifier(
    classifier: &mut Classifier,
    data: &[LabeledCloud],
    config: &ClassifierConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(AdamConfig::new(config.learning_rate, 0.9, 0.999));
    let inputs: Vec<Matrix<f32>> = data
        .iter()
        .map(|l| AutoEncoder::<f32>::cloud_matrix(&l.cloud))
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            classifier.net.zero_grad();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let trace = classifier.net.forward_trace(&inputs[i])?;
                let (loss, grad) =
                    softmax_cross_entropy(trace.output().as_slice(), data[i].category.index());
                total += loss;
                let dy = Matrix::from_vec(
                    1,
                    NUM_CLASSES,
                    grad.iter().map(|g| (g * scale) as f32).collect(),
                )?;
                classifier.net.backward(&trace, &dy)?;
            }
            opt.step(classifier.net.params_mut())?;
        }
        let mean = total / data.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    classifier.trained = true;
    Ok(history)
}

/// Fraction of `(cloud, label)` pairs classified correctly.
pub fn evaluate_accuracy<'a>(
    classifier: &Classifier,
    items: impl IntoIterator<Item = (&'a PointCloud, ShapeCategory)>,
) -> Result<f64> {
    let (mut hits, mut n) = (0usize, 0usize);
    for (cloud, label) in items {
        hits += (classifier.classify(cloud)? == label) as usize;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_shape;
    use crate::nn::gradcheck::{check_vector, FD_STEP};

    #[test]
    fn untrained_classifier_refuses() {
        let c = Classifier::untrained(1);
        let p = sample_shape(ShapeCategory::Car, 32, 1).unwrap();
        assert!(c.classify(&p).is_err());
        assert!(c.save_to(&mut Checkpoint::new()).is_err());
    }

    #[test]
    fn cross_entropy_gradient() {
        let logits = [0.3f32, -1.2, 2.0, 0.5];
        let (loss, grad) = softmax_cross_entropy(&logits, 2);
        assert!(loss > 0.0);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        let point: Vec<f64> = logits.iter().map(|&l| l as f64).collect();
        let f = |x: &[f64]| {
            let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            x.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m - x[2]
        };
        let r = check_vector(&point, &grad, f, FD_STEP, "logits");
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn learns_a_tiny_problem() {
        let data: Vec<LabeledCloud> = ShapeCategory::ALL
            .iter()
            .flat_map(|&c| {
                (0..4).map(move |i| LabeledCloud {
                    category: c,
                    cloud: sample_shape(c, 64, 10 * c.index() as u64 + i).unwrap(),
                })
            })
            .collect();
        let mut clf = Classifier::untrained(3);
        let cfg = ClassifierConfig {
            epochs: 40,
            batch_size: 4,
            learning_rate: 3e-3,
        };
        let h = train_classifier(&mut clf, &data, &cfg, 4, |_, _| {}).unwrap();
        assert!(h.last().unwrap() < &(0.5 * h[0]), "{h:?}");
        let acc = evaluate_accuracy(&clf, data.iter().map(|l| (&l.cloud, l.category))).unwrap();
        assert!(acc >= 0.9, "train accuracy {acc}");

        let mut ck = Checkpoint::new();
        clf.save_to(&mut ck).unwrap();
        let back = Classifier::load_from(&Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap())
            .unwrap();
        assert_eq!(back, clf);
    }
}
