use crate::bottleneck::{CodingTables, FactorizedDensity};
use crate::error::{dim_err, Error, Result};
use crate::model::TcnConfig;
use crate::numerics::{Graph, ParamId, ParamStore, RngState, Tensor, Var};

#[derive(Debug, Clone)]
pub(crate) struct ConvLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub dilation: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub convs: Vec<ConvLayer>,
    pub residual: ConvLayer,
}

/// Outputs of one training forward pass.
pub struct TrainOutputs {
    /// Reconstruction from the noise-quantized latent.
    pub x_hat: Var,
    /// Reconstruction from the unquantized latent, same decoder.
    pub x_tilde: Var,
    /// Estimated code length of the quantized latent in bits.
    pub rate: Var,
    pub latent: Var,
}

/// Dilated causal convolutional encoder, linear latent projection, optional
/// entropy bottleneck and a mirrored transposed-convolution decoder.
///
/// Every block computes `residual(h) + conv_L(relu(… relu(conv_1(h))))`
/// where `residual` is a 1×1 convolution. Decoder block `m` mirrors encoder
/// block `B−1−m`: the same weight shapes, applied as transposed
/// convolutions in reverse layer order.
#[derive(Debug, Clone)]
pub struct TcnAutoencoder {
    config: TcnConfig,
    params: ParamStore,
    pub(crate) encoder: Vec<Block>,
    pub(crate) decoder: Vec<Block>,
    to_latent: (ParamId, ParamId),
    from_latent: (ParamId, ParamId),
    density: Option<FactorizedDensity>,
    /// Channel normaliser applied to absolute residuals at detection time.
    pub omega: Vec<f64>,
    /// Integer PMF tables for entropy coding, tabulated after training.
    pub coding_tables: Option<CodingTables>,
}

fn kaiming_uniform(shape: &[usize], fan_in: usize, gain: f64, rng: &mut RngState) -> Tensor {
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;
// the two summed branches of a block each get half the variance
const BRANCH_GAIN: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl TcnAutoencoder {
    pub fn new(config: TcnConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let (c, w, k, t) = (
            config.input_channels,
            config.channel_width,
            config.kernel_width,
            config.window_length,
        );
        let lpb = config.layers_per_block;

        let mut encoder = Vec::with_capacity(config.blocks);
        for l in 0..config.blocks {
            let d = config.dilation(l);
            let in0 = if l == 0 { c } else { w };
            let mut convs = Vec::with_capacity(lpb);
            for j in 0..lpb {
                let cin = if j == 0 { in0 } else { w };
                let gain = if j + 1 < lpb { RELU_GAIN } else { BRANCH_GAIN };
                let prefix = format!("encoder.block{l}.conv{j}");
                let weight = params.register(
                    format!("{prefix}.weight"),
                    kaiming_uniform(&[w, cin, k], cin * k, gain, rng),
                )?;
                let bias = params.register(format!("{prefix}.bias"), Tensor::zeros(&[w]))?;
                convs.push(ConvLayer { weight, bias, dilation: d });
            }
            let prefix = format!("encoder.block{l}.residual");
            let weight = params.register(
                format!("{prefix}.weight"),
                kaiming_uniform(&[w, in0, 1], in0, BRANCH_GAIN, rng),
            )?;
            let bias = params.register(format!("{prefix}.bias"), Tensor::zeros(&[w]))?;
            encoder.push(Block {
                convs,
                residual: ConvLayer { weight, bias, dilation: 1 },
            });
        }

        let flat = w * t;
        let n = config.latent_dim;
        let to_latent = (
            params.register("latent.encode.weight", kaiming_uniform(&[n, flat], flat, 1.0, rng))?,
            params.register("latent.encode.bias", Tensor::zeros(&[n]))?,
        );
        let from_latent = (
            params.register("latent.decode.weight", kaiming_uniform(&[flat, n], n, 1.0, rng))?,
            params.register("latent.decode.bias", Tensor::zeros(&[flat]))?,
        );

        let mut decoder = Vec::with_capacity(config.blocks);
        for m in 0..config.blocks {
            let l = config.blocks - 1 - m;
            let d = config.dilation(l);
            let out_last = if l == 0 { c } else { w };
            let mut convs = Vec::with_capacity(lpb);
            // layer j of this block mirrors encoder layer lpb-1-j
            for j in 0..lpb {
                let mirrored = lpb - 1 - j;
                let cout = if mirrored == 0 { out_last } else { w };
                let gain = if j + 1 < lpb { RELU_GAIN } else { BRANCH_GAIN };
                let prefix = format!("decoder.block{m}.conv{j}");
                let weight = params.register(
                    format!("{prefix}.weight"),
                    kaiming_uniform(&[w, cout, k], w * k, gain, rng),
                )?;
                let bias = params.register(format!("{prefix}.bias"), Tensor::zeros(&[cout]))?;
                convs.push(ConvLayer { weight, bias, dilation: d });
            }
            let prefix = format!("decoder.block{m}.residual");
            let weight = params.register(
                format!("{prefix}.weight"),
                kaiming_uniform(&[w, out_last, 1], w, BRANCH_GAIN, rng),
            )?;
            let bias = params.register(format!("{prefix}.bias"), Tensor::zeros(&[out_last]))?;
            decoder.push(Block {
                convs,
                residual: ConvLayer { weight, bias, dilation: 1 },
            });
        }

        let density = if config.bottleneck_enabled {
            Some(FactorizedDensity::new(
                &mut params,
                "bottleneck",
                n,
                &config.density_filters,
                config.likelihood_floor,
                rng,
            )?)
        } else {
            None
        };

        Ok(TcnAutoencoder {
            omega: vec![1.0; c],
            config,
            params,
            encoder,
            decoder,
            to_latent,
            from_latent,
            density,
            coding_tables: None,
        })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn density(&self) -> Option<&FactorizedDensity> {
        self.density.as_ref()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.config.input_channels, self.config.window_length];
        if x.shape() != want {
            return dim_err(format!("input window {:?}, model expects {:?}", x.shape(), want));
        }
        Ok(())
    }

    fn block_forward(
        g: &mut Graph,
        block: &Block,
        h: Var,
        transposed: bool,
        trace: &mut Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let mut a = h;
        for (j, layer) in block.convs.iter().enumerate() {
            if j > 0 {
                a = g.relu(a);
            }
            let (w, b) = (g.param(layer.weight), g.param(layer.bias));
            a = if transposed {
                g.conv_transpose1d(a, w, b, layer.dilation)?
            } else {
                g.conv1d(a, w, b, layer.dilation)?
            };
            if let Some(t) = trace.as_deref_mut() {
                t.push(a);
            }
        }
        let (w, b) = (g.param(block.residual.weight), g.param(block.residual.bias));
        let r = if transposed {
            g.conv_transpose1d(h, w, b, 1)?
        } else {
            g.conv1d(h, w, b, 1)?
        };
        let out = g.add(a, r)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(out);
        }
        Ok(out)
    }

    fn conv_stack(&self, g: &mut Graph, x: Var, mut trace: Option<&mut Vec<Var>>) -> Result<Var> {
        let mut h = x;
        for block in &self.encoder {
            h = Self::block_forward(g, block, h, false, &mut trace)?;
        }
        Ok(h)
    }

    /// Latent `y` for the `C × T` window held by `x`.
    pub fn encode_var(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.check_input(g.value(x))?;
        let h = self.conv_stack(g, x, None)?;
        let flat = g.reshape(h, vec![self.config.channel_width * self.config.window_length])?;
        let (w, b) = (g.param(self.to_latent.0), g.param(self.to_latent.1));
        g.linear(flat, w, b)
    }

    /// `C × T` reconstruction from a latent of length `latent_dim`.
    pub fn decode_var(&self, g: &mut Graph, z: Var) -> Result<Var> {
        if g.value(z).shape() != [self.config.latent_dim] {
            return dim_err(format!(
                "latent shape {:?}, model expects [{}]",
                g.value(z).shape(),
                self.config.latent_dim
            ));
        }
        let (w, b) = (g.param(self.from_latent.0), g.param(self.from_latent.1));
        let flat = g.linear(z, w, b)?;
        let mut h = g.reshape(flat, vec![self.config.channel_width, self.config.window_length])?;
        for block in &self.decoder {
            h = Self::block_forward(g, block, h, true, &mut None)?;
        }
        Ok(h)
    }

    pub fn encode(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let xv = g.input(x.clone());
        let y = self.encode_var(&mut g, xv)?;
        Ok(g.value(y).data().to_vec())
    }

    pub fn decode(&self, z: &[f64]) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let zv = g.input(Tensor::vector(z.to_vec()));
        let x = self.decode_var(&mut g, zv)?;
        Ok(g.value(x).clone())
    }

    /// Every convolution output and block output of the encoder stack, in
    /// execution order, for `x` (pre-linear).
    pub fn encoder_activations(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut g = Graph::new(&self.params);
        let xv = g.input(x.clone());
        let mut trace = Vec::new();
        self.conv_stack(&mut g, xv, Some(&mut trace))?;
        Ok(trace.into_iter().map(|v| g.value(v).clone()).collect())
    }

    /// Rate-distortion training pass with the given quantization noise
    /// (one `Uniform(−½, ½)` draw per latent entry).
    pub fn forward_train(&self, g: &mut Graph, x: Var, noise: &[f64]) -> Result<TrainOutputs> {
        let density = self.density.as_ref().ok_or_else(|| {
            Error::Contract("forward_train needs the bottleneck; use forward_ae".into())
        })?;
        if noise.len() != self.config.latent_dim {
            return dim_err("noise length must equal latent_dim");
        }
        let y = self.encode_var(g, x)?;
        let u = g.input(Tensor::vector(noise.to_vec()));
        let z = g.add(y, u)?;
        let x_hat = self.decode_var(g, z)?;
        let x_tilde = self.decode_var(g, y)?;
        let dv = density.prepare(g);
        let rate = density.rate_bits_var(g, &dv, z)?;
        Ok(TrainOutputs {
            x_hat,
            x_tilde,
            rate,
            latent: y,
        })
    }

    /// Plain autoencoder pass `g(f(x))` with no quantization.
    pub fn forward_ae(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y = self.encode_var(g, x)?;
        self.decode_var(g, y)
    }

    /// Rounded integer latent of `x`. Errors in autoencoder mode.
    pub fn latent_symbols(&self, x: &Tensor) -> Result<Vec<i64>> {
        if !self.config.bottleneck_enabled {
            return Err(Error::Contract("autoencoder mode has no quantized latent".into()));
        }
        Ok(self.encode(x)?.iter().map(|v| v.round() as i64).collect())
    }

    /// Inference reconstruction: rounded latent through the decoder, or the
    /// unquantized latent when the bottleneck is disabled. Consumes no
    /// randomness.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.encode(x)?;
        if self.config.bottleneck_enabled {
            let z: Vec<f64> = y.iter().map(|v| v.round()).collect();
            self.decode(&z)
        } else {
            self.decode(&y)
        }
    }

    pub fn decode_symbols(&self, symbols: &[i64]) -> Result<Tensor> {
        let z: Vec<f64> = symbols.iter().map(|&s| s as f64).collect();
        self.decode(&z)
    }

    /// Number of convolution weight scalars in the encoder and decoder stacks.
    pub fn conv_weight_counts(&self) -> (usize, usize) {
        let count = |blocks: &[Block]| -> usize {
            blocks
                .iter()
                .flat_map(|b| b.convs.iter().chain(std::iter::once(&b.residual)))
                .map(|l| self.params.value(l.weight).len())
                .sum()
        };
        (count(&self.encoder), count(&self.decoder))
    }

    /// Dilation of every encoder block, as built.
    pub fn block_dilations(&self) -> Vec<usize> {
        self.encoder.iter().map(|b| b.convs[0].dilation).collect()
    }
}
