//! Permutation-invariant point-cloud autoencoder.
//!
//! The encoder applies a shared per-point dense stack followed by max pooling
//! over points, so it accepts clouds of any size and ignores point order. The
//! decoder maps a global feature vector back to a fixed number of points.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{chamfer_loss_grad, Point, PointCloud};
use crate::nn::{Adam, AdamConfig, Checkpoint, Layer, Matrix, NnError, Scalar, Sequential, Trace};

/// Dimension of the global feature vector.
pub const GFV_DIM: usize = 128;

/// Global feature vector produced by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Gfv(Vec<f32>);

impl Gfv {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.len() != GFV_DIM {
            return Err(NnError::ShapeMismatch {
                expected: vec![GFV_DIM],
                found: vec![values.len()],
            }
            .into());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite.into());
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; GFV_DIM])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn to_matrix(&self) -> Matrix<f32> {
        Matrix::from_vec(1, GFV_DIM, self.0.clone()).expect("fixed dimension")
    }

    pub fn distance_sq(&self, other: &Gfv) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeConfig {
    pub encoder_channels: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    /// Output point count `M`; the decoder head has `3 M` units.
    pub num_points: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            encoder_channels: vec![64, 128, 128, 256, 128],
            decoder_widths: vec![256, 256],
            num_points: 512,
            epochs: 300,
            batch_size: 32,
            learning_rate: 5e-4,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.last() != Some(&GFV_DIM) {
            return Err(Error::Config(format!(
                "last encoder channel must be {GFV_DIM}, got {:?}",
                self.encoder_channels
            )));
        }
        if self.num_points == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "num_points and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder<T = f32> {
    pub encoder: Sequential<T>,
    pub decoder: Sequential<T>,
    num_points: usize,
}

impl<T: Scalar> AutoEncoder<T> {
    pub fn new(config: &AeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc_widths = vec![3];
        enc_widths.extend(&config.encoder_channels);
        let mut encoder =
            Sequential::mlp(&enc_widths, Layer::Relu, Some(Layer::Relu), true, &mut rng);
        encoder.layers.push(Layer::MaxPoolOverPoints);
        let mut dec_widths = vec![GFV_DIM];
        dec_widths.extend(&config.decoder_widths);
        dec_widths.push(3 * config.num_points);
        let decoder = Sequential::mlp(&dec_widths, Layer::Relu, None, false, &mut rng);
        Ok(Self {
            encoder,
            decoder,
            num_points: config.num_points,
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn cloud_matrix(cloud: &PointCloud) -> Matrix<T> {
        Matrix::from_vec(
            cloud.len(),
            3,
            cloud.points().iter().flatten().map(|&c| T::of(c)).collect(),
        )
        .expect("three columns")
    }

    /// `1 x GFV_DIM` encoding of a cloud.
    pub fn encode_matrix(&self, cloud: &PointCloud) -> Result<Matrix<T>> {
        if cloud.is_empty() {
            return Err(NnError::EmptyInput.into());
        }
        Ok(self.encoder.forward(&Self::cloud_matrix(cloud))?)
    }

    /// Decodes a `B x GFV_DIM` batch into `B x 3M` coordinates.
    pub fn decode_matrix(&self, gfvs: &Matrix<T>) -> Result<Matrix<T>> {
        if !gfvs.is_finite() {
            return Err(NnError::NonFinite.into());
        }
        Ok(self.decoder.forward(gfvs)?)
    }

    pub fn cast<U: Scalar>(&self) -> AutoEncoder<U> {
        AutoEncoder {
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            num_points: self.num_points,
        }
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.decoder.zero_grad();
    }

    /// Batch-mean Chamfer reconstruction loss; accumulates gradients into both
    /// networks and returns the per-sample losses.
    pub fn loss_and_grad(&mut self, batch: &[&PointCloud]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let traces: Vec<Trace<T>> = batch
            .iter()
            .map(|c| self.encoder.forward_trace(&Self::cloud_matrix(c)))
            .collect::<Result<_, _>>()?;
        let mut codes = Matrix::zeros(batch.len(), GFV_DIM);
        for (i, t) in traces.iter().enumerate() {
            codes.row_mut(i).copy_from_slice(t.output().row(0));
        }
        let dec_trace = self.decoder.forward_trace(&codes)?;
        let out = dec_trace.output();
        let scale = 1.0 / batch.len() as f64;
        let mut d_out = Matrix::zeros(out.rows(), out.cols());
        let mut losses = Vec::with_capacity(batch.len());
        for (i, target) in batch.iter().enumerate() {
            let pred = row_points(out.row(i));
            let (loss, grad) = chamfer_loss_grad(&pred, target)?;
            losses.push(loss);
            for (d, g) in d_out.row_mut(i).iter_mut().zip(grad.iter().flatten()) {
                *d = T::of(g * scale);
            }
        }
        let d_codes = self.decoder.backward(&dec_trace, &d_out)?;
        for (i, t) in traces.iter().enumerate() {
            let dy = Matrix::from_vec(1, GFV_DIM, d_codes.row(i).to_vec())?;
            self.encoder.backward(t, &dy)?;
        }
        Ok(losses)
    }
}

fn row_points<T: Scalar>(row: &[T]) -> Vec<Point> {
    row.chunks_exact(3)
        .map(|c| [c[0].as_f64(), c[1].as_f64(), c[2].as_f64()])
        .collect()
}

impl AutoEncoder<f32> {
    pub fn encode(&self, cloud: &PointCloud) -> Result<Gfv> {
        Ok(Gfv(self.encode_matrix(cloud)?.into_vec()))
    }

    pub fn decode(&self, gfv: &Gfv) -> Result<PointCloud> {
        let out = self.decode_matrix(&gfv.to_matrix())?;
        Ok(PointCloud::new(row_points(out.row(0)))?)
    }

    pub fn reconstruct(&self, cloud: &PointCloud) -> Result<PointCloud> {
        self.decode(&self.encode(cloud)?)
    }

    pub fn save_to(&self, ck: &mut Checkpoint) -> Result<()> {
        ck.add_network("encoder", &self.encoder)?;
        ck.add_network("decoder", &self.decoder)?;
        Ok(())
    }

    pub fn load_from(config: &AeConfig, ck: &Checkpoint) -> Result<Self> {
        let mut ae = Self::new(config, 0)?;
        ck.load_network("encoder", &mut ae.encoder)?;
        ck.load_network("decoder", &mut ae.decoder)?;
        Ok(ae)
    }
}

/// Mini-batch Adam on the Chamfer reconstruction loss.
///
/// Returns the per-epoch mean loss (raw Chamfer sum per shape). `on_epoch`
/// observes `(epoch, mean_loss)` after every epoch, 1-based.
pub fn train_ae(
    ae: &mut AutoEncoder<f32>,
    data: &[PointCloud],
    config: &AeConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adam_cfg = AdamConfig::new(config.learning_rate, 0.9, 0.999);
    let mut enc_opt = Adam::new(adam_cfg);
    let mut dec_opt = Adam::new(adam_cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PointCloud> = chunk.iter().map(|&i| &data[i]).collect();
            ae.zero_grad();
            let losses = ae.loss_and_grad(&batch)?;
            total += losses.iter().sum::<f64>();
            enc_opt.step(ae.encoder.params_mut())?;
            dec_opt.step(ae.decoder.params_mut())?;
        }
        let mean = total / data.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{corrupt_cloud, sample_shape, CorruptionSpec, ShapeCategory};
    use rand::seq::SliceRandom;

    fn small() -> AeConfig {
        AeConfig {
            encoder_channels: vec![16, GFV_DIM],
            decoder_widths: vec![32],
            num_points: 64,
            epochs: 3,
            batch_size: 2,
            learning_rate: 1e-3,
        }
    }

    #[test]
    fn encoder_is_permutation_invariant() {
        let ae = AutoEncoder::<f32>::new(&AeConfig::default(), 1).unwrap();
        let c = sample_shape(ShapeCategory::Chair, 256, 3).unwrap();
        let mut pts = c.points().to_vec();
        pts.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
        let shuffled = PointCloud::new(pts).unwrap();
        assert_eq!(ae.encode(&c).unwrap(), ae.encode(&shuffled).unwrap());
    }

    #[test]
    fn encodes_partial_clouds_of_any_size() {
        let ae = AutoEncoder::<f32>::new(&AeConfig::default(), 1).unwrap();
        let c = sample_shape(ShapeCategory::Airplane, 2048, 3).unwrap();
        let partial = corrupt_cloud(&c, &CorruptionSpec::new(0.7, 1).unwrap()).unwrap();
        assert_eq!(partial.len(), 614);
        let g = ae.encode(&partial).unwrap();
        assert_eq!(g.as_slice().len(), GFV_DIM);
        let one = PointCloud::new(vec![[0.1, 0.2, 0.3]]).unwrap();
        assert!(ae.encode(&one).is_ok());
    }

    #[test]
    fn decode_contract() {
        let ae = AutoEncoder::<f32>::new(&small(), 2).unwrap();
        let a = ae.decode(&Gfv::zeros()).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, ae.decode(&Gfv::zeros()).unwrap());
        let bad = Matrix::from_vec(1, GFV_DIM, vec![f32::NAN; GFV_DIM]).unwrap();
        assert!(ae.decode_matrix(&bad).is_err());
        assert!(Gfv::new(vec![0.0; 3]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.encoder_channels = vec![16, 64];
        assert!(AutoEncoder::<f32>::new(&c, 0).is_err());
    }

    #[test]
    fn training_is_deterministic_and_rejects_empty() {
        let data: Vec<PointCloud> = (0..4)
            .map(|i| sample_shape(ShapeCategory::ALL[i], 64, i as u64).unwrap())
            .collect();
        let cfg = small();
        let run = || {
            let mut ae = AutoEncoder::new(&cfg, 5).unwrap();
            train_ae(&mut ae, &data, &cfg, 6, |_, _| {}).unwrap()
        };
        let a = run();
        assert_eq!(a.len(), 3);
        assert_eq!(a, run());
        let mut ae = AutoEncoder::new(&cfg, 5).unwrap();
        assert!(matches!(
            train_ae(&mut ae, &[], &cfg, 0, |_, _| {}),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = small();
        let ae = AutoEncoder::<f32>::new(&cfg, 8).unwrap();
        let mut ck = Checkpoint::new();
        ae.save_to(&mut ck).unwrap();
        let ck = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(AutoEncoder::load_from(&cfg, &ck).unwrap(), ae);
    }
}
