//! The encoder/decoder network.
//!
//! Encoder: `depth` levels of two same-padded 3x3 convolutions (leaky ReLU)
//! followed by 2x2 max pooling. Bottleneck: the bottom feature map is
//! flattened through one square fully connected layer and reshaped back.
//! Decoder: 2x2 stride-2 up-convolutions, skip concatenation with the
//! matching encoder level, and two 3x3 convolutions (ReLU). A linear 1x1
//! head flattens to one value per grid cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{Padding, Scalar, Tape, Tensor, Var};

/// Resolved layer plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub n: usize,
    pub depth: usize,
    pub base: usize,
    pub dense_width: usize,
}

impl UNetSpec {
    fn channels_at(&self, level: usize) -> usize {
        self.base << level
    }

    fn bottom_side(&self) -> usize {
        self.n >> self.depth
    }
}

const LEAKY_SLOPE: f64 = 0.2;

/// One network's parameters plus its layer plan.
#[derive(Debug, Clone)]
pub struct UNet<T> {
    spec: UNetSpec,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> UNet<T> {
    /// He fan-in initialization, deterministic per seed.
    pub fn init(spec: UNetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut push_conv = |names: &mut Vec<String>, tensors: &mut Vec<Tensor<T>>,
                             rng: &mut ChaCha8Rng,
                             name: &str,
                             co: usize,
                             ci: usize,
                             k: usize| {
            let fan_in = (ci * k * k) as f64;
            let std = (2.0 / fan_in).sqrt();
            let len = co * ci * k * k;
            let data: Vec<T> = (0..len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::from_f64(z * std)
                })
                .collect();
            names.push(format!("{name}.w"));
            tensors.push(Tensor::from_vec(&[co, ci, k, k], data).expect("sized above"));
            names.push(format!("{name}.b"));
            tensors.push(Tensor::zeros(&[co]));
        };

        let mut ci = spec.in_channels;
        for level in 0..spec.depth {
            let co = spec.channels_at(level);
            push_conv(&mut names, &mut tensors, &mut rng, &format!("enc{level}.conv1"), co, ci, 3);
            push_conv(&mut names, &mut tensors, &mut rng, &format!("enc{level}.conv2"), co, co, 3);
            ci = co;
        }

        // square dense bottleneck
        let f = spec.dense_width;
        let std = (2.0 / f as f64).sqrt();
        let data: Vec<T> = (0..f * f)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::from_f64(z * std)
            })
            .collect();
        names.push("bottleneck.dense.w".into());
        tensors.push(Tensor::from_vec(&[f, f], data).expect("sized above"));
        names.push("bottleneck.dense.b".into());
        tensors.push(Tensor::zeros(&[f]));

        let mut c_up = spec.channels_at(spec.depth - 1);
        for level in (0..spec.depth).rev() {
            let c = spec.channels_at(level);
            push_conv(&mut names, &mut tensors, &mut rng, &format!("dec{level}.up"), c_up, c, 2);
            push_conv(&mut names, &mut tensors, &mut rng, &format!("dec{level}.conv1"), c, 2 * c, 3);
            push_conv(&mut names, &mut tensors, &mut rng, &format!("dec{level}.conv2"), c, c, 3);
            c_up = c;
        }

        push_conv(&mut names, &mut tensors, &mut rng, "head", 1, spec.base, 1);
        Self { spec, names, tensors }
    }

    pub fn from_parts(spec: UNetSpec, names: Vec<String>, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let reference = Self::init(spec, 0);
        if names != reference.names {
            return Err(Error::Config("checkpoint tensor names do not match the architecture".into()));
        }
        for (have, want) in tensors.iter().zip(&reference.tensors) {
            if have.shape() != want.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint tensor shape {:?} does not match expected {:?}",
                    have.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Self { spec, names, tensors })
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Push the parameters onto a tape and run the forward pass; returns
    /// the flat `[n*n]` raw head output and the parameter vars (in tensor
    /// order) for gradient extraction.
    pub fn forward_on(&self, tape: &mut Tape<T>, input: Var, trainable: bool) -> Result<(Var, Vec<Var>)> {
        let spec = &self.spec;
        if tape.value(input).shape() != [spec.in_channels, spec.n, spec.n] {
            return Err(Error::ShapeMismatch(format!(
                "input shape {:?}, network expects [{}, {}, {}]",
                tape.value(input).shape(),
                spec.in_channels,
                spec.n,
                spec.n
            )));
        }
        let vars: Vec<Var> = self.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect();
        let mut next = vars.iter().copied();
        let mut take = || next.next().expect("parameter list matches the plan");

        let mut x = input;
        let mut skips = Vec::with_capacity(spec.depth);
        for _ in 0..spec.depth {
            for _ in 0..2 {
                let (w, b) = (take(), take());
                x = tape.conv2d(x, w, 1, Padding::Same)?;
                x = tape.bias_channel(x, b)?;
                x = tape.leaky_relu(x, LEAKY_SLOPE);
            }
            skips.push(x);
            x = tape.maxpool2(x)?;
        }

        let (dw, db) = (take(), take());
        let flat = tape.reshape(x, &[spec.dense_width])?;
        let dense = tape.dense(flat, dw, db)?;
        let act = tape.leaky_relu(dense, LEAKY_SLOPE);
        let bottom = spec.bottom_side();
        x = tape.reshape(act, &[spec.channels_at(spec.depth - 1), bottom, bottom])?;

        for level in (0..spec.depth).rev() {
            let (uw, ub) = (take(), take());
            x = tape.conv2d_transpose(x, uw, 2)?;
            x = tape.bias_channel(x, ub)?;
            x = tape.relu(x);
            x = tape.concat_channels(x, skips[level])?;
            for _ in 0..2 {
                let (w, b) = (take(), take());
                x = tape.conv2d(x, w, 1, Padding::Same)?;
                x = tape.bias_channel(x, b)?;
                x = tape.relu(x);
            }
        }

        let (hw, hb) = (take(), take());
        x = tape.conv2d(x, hw, 1, Padding::Same)?;
        x = tape.bias_channel(x, hb)?;
        let out = tape.reshape(x, &[spec.n * spec.n])?;
        Ok((out, vars))
    }
}
