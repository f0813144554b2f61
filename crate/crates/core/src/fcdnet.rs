//! FCDNet: grouped-conv residual stage, depthwise-separable residual stage,
//! two-path downsampling blocks, and a GAP + FC classifier.

use frucforge_nn::checkpoint::Checkpoint;
use frucforge_nn::norm::BatchNormConfig;
use frucforge_nn::ops::softmax;
use frucforge_nn::{
    depthwise_separable, AvgPool, BatchNorm, Conv2d, ConvGeometry, GlobalAvgPool, Layer, LayerSpec, Linear, Mode,
    ParamBreakdown, ParamStore, Relu, Residual, Scalar, Sequential, Tensor, TwoPath,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{invalid, Error, Result};

/// Block 3 widths that give 218,010 parameters with bias-free convolutions,
/// BN affine terms, and a biased classifier.
pub const FULL_BLOCK3_PLAN: [usize; 4] = [48, 74, 128, 215];

pub const CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub input_planes: usize,
    pub groups: usize,
    pub crop_size: usize,
    pub block1_count: usize,
    pub block1_channels: usize,
    pub block2_count: usize,
    pub block2_channels: usize,
    /// Output channels of each Block 3; Block 4 keeps the last width.
    pub block3_plan: Vec<usize>,
    pub seed: u64,
}

impl NetConfig {
    pub fn full() -> Self {
        Self {
            input_planes: 5,
            groups: 5,
            crop_size: 256,
            block1_count: 5,
            block1_channels: 60,
            block2_count: 5,
            block2_channels: 30,
            block3_plan: FULL_BLOCK3_PLAN.to_vec(),
            seed: 0,
        }
    }

    /// Reduced network for single-core training: 64px crops, two units in
    /// each residual stage, three downsampling blocks, narrow channels.
    pub fn desk() -> Self {
        Self {
            input_planes: 5,
            groups: 5,
            crop_size: 64,
            block1_count: 2,
            block1_channels: 10,
            block2_count: 2,
            block2_channels: 8,
            block3_plan: vec![12, 16, 24],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_planes", self.input_planes),
            ("groups", self.groups),
            ("crop_size", self.crop_size),
            ("block1_channels", self.block1_channels),
            ("block2_channels", self.block2_channels),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return invalid(format!("{name} must be positive"));
        }
        if !self.input_planes.is_multiple_of(self.groups) || !self.block1_channels.is_multiple_of(self.groups) {
            return invalid(format!(
                "groups {} must divide input planes {} and block 1 channels {}",
                self.groups, self.input_planes, self.block1_channels
            ));
        }
        if self.block3_plan.is_empty() || self.block3_plan.contains(&0) {
            return invalid("block 3 channel plan needs at least one positive width");
        }
        let factor = 1usize << self.block3_plan.len();
        if !self.crop_size.is_multiple_of(factor) {
            return invalid(format!(
                "crop size {} is not divisible by 2^{} for the block 3 stages",
                self.crop_size,
                self.block3_plan.len()
            ));
        }
        Ok(())
    }

    pub fn final_channels(&self) -> usize {
        *self.block3_plan.last().unwrap_or(&self.block2_channels)
    }

    pub fn manifest(&self) -> Vec<(String, String)> {
        let plan: Vec<String> = self.block3_plan.iter().map(|c| c.to_string()).collect();
        [
            ("input_planes", self.input_planes.to_string()),
            ("groups", self.groups.to_string()),
            ("crop_size", self.crop_size.to_string()),
            ("block1_count", self.block1_count.to_string()),
            ("block1_channels", self.block1_channels.to_string()),
            ("block2_count", self.block2_count.to_string()),
            ("block2_channels", self.block2_channels.to_string()),
            ("block3_plan", plan.join(",")),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_manifest(ck: &Checkpoint) -> Result<Self> {
        let get = |key: &str| {
            ck.manifest_value(key)
                .ok_or_else(|| Error::Invalid(format!("checkpoint manifest lacks `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Invalid(format!("checkpoint manifest `{key}` is not a number")))
        };
        let plan = get("block3_plan")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Invalid("checkpoint manifest `block3_plan` is malformed".into()))?;
        let cfg = Self {
            input_planes: num("input_planes")?,
            groups: num("groups")?,
            crop_size: num("crop_size")?,
            block1_count: num("block1_count")?,
            block1_channels: num("block1_channels")?,
            block2_count: num("block2_count")?,
            block2_channels: num("block2_channels")?,
            block3_plan: plan,
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::Invalid("checkpoint manifest `seed` is not a number".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which optional terms a parameter count includes. FC weights and bias are
/// always counted; BN running statistics never are.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Convention {
    pub conv_bias: bool,
    pub bn_affine: bool,
}

impl Convention {
    /// What the network as built carries.
    pub const BUILT: Convention = Convention {
        conv_bias: false,
        bn_affine: true,
    };
}

/// Parameter count from channel arithmetic alone.
pub fn analytic_param_count(cfg: &NetConfig, conv: Convention) -> usize {
    let b = conv.conv_bias as usize;
    let bn = |c: usize| if conv.bn_affine { 2 * c } else { 0 };
    let convp = |cin: usize, cout: usize, k: usize, g: usize| cout * (cin / g) * k * k + b * cout;
    let ds = |cin: usize, cout: usize| convp(cin, cin, 3, cin) + convp(cin, cout, 1, 1);
    let (c1, c2) = (cfg.block1_channels, cfg.block2_channels);
    let mut total = convp(cfg.input_planes, c1, 3, cfg.groups);
    total += cfg.block1_count * 2 * (bn(c1) + convp(c1, c1, 3, cfg.groups));
    total += convp(c1, c2, 1, 1);
    total += cfg.block2_count * 2 * (bn(c2) + ds(c2, c2));
    let mut c = c2;
    for &o in &cfg.block3_plan {
        total += convp(c, o, 1, 1) + bn(o) + ds(c, o) + bn(o);
        c = o;
    }
    total + ds(c, c) + bn(c) + c * CLASSES + CLASSES
}

/// Multiply-accumulates of one stack: per convolution, output elements ×
/// `k²·in/groups`; per FC layer, `in × out`.
pub fn analytic_macs(cfg: &NetConfig) -> u64 {
    let s = cfg.crop_size as u64;
    let conv = |hw: u64, cin: usize, cout: usize, k: u64, g: usize| hw * cout as u64 * k * k * (cin / g) as u64;
    let ds = |hw: u64, cin: usize, cout: usize| conv(hw, cin, cin, 3, cin) + conv(hw, cin, cout, 1, 1);
    let (c1, c2) = (cfg.block1_channels, cfg.block2_channels);
    let full = s * s;
    let mut total = conv(full, cfg.input_planes, c1, 3, cfg.groups);
    total += cfg.block1_count as u64 * 2 * conv(full, c1, c1, 3, cfg.groups);
    total += conv(full, c1, c2, 1, 1);
    total += cfg.block2_count as u64 * 2 * ds(full, c2, c2);
    let (mut c, mut side) = (c2, s);
    for &o in &cfg.block3_plan {
        let half = (side / 2) * (side / 2);
        total += conv(half, c, o, 1, 1) + ds(side * side, c, o);
        c = o;
        side /= 2;
    }
    total + ds(side * side, c, c) + (c * CLASSES) as u64
}

pub struct FcdNet<T: Scalar> {
    config: NetConfig,
    body: Sequential<T>,
    store: ParamStore<T>,
}

fn bn<T: Scalar>(name: &str, c: usize, store: &mut ParamStore<T>) -> Result<BatchNorm<T>> {
    Ok(BatchNorm::new(name, c, BatchNormConfig::default(), store)?)
}

impl<T: Scalar> FcdNet<T> {
    pub fn build(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let s = &mut store;
        let r = &mut rng;
        let (c1, c2, g) = (config.block1_channels, config.block2_channels, config.groups);
        let mut body = Sequential::new();

        body.push(Conv2d::new(
            "b1.adjust",
            ConvGeometry::new(config.input_planes, c1, 3).with_groups(g),
            false,
            s,
            r,
        )?);
        for u in 0..config.block1_count {
            let mut unit = Sequential::new();
            for j in 0..2 {
                let p = format!("b1.{u}.{j}");
                unit.push(bn(&format!("{p}.bn"), c1, s)?);
                unit.push(Relu::new());
                unit.push(Conv2d::new(
                    &format!("{p}.conv"),
                    ConvGeometry::new(c1, c1, 3).with_groups(g),
                    false,
                    s,
                    r,
                )?);
            }
            body.push(Residual::new(unit));
        }

        body.push(Conv2d::new("b2.adjust", ConvGeometry::pointwise(c1, c2), false, s, r)?);
        for u in 0..config.block2_count {
            let mut unit = Sequential::new();
            for j in 0..2 {
                let p = format!("b2.{u}.{j}");
                unit.push(bn(&format!("{p}.bn"), c2, s)?);
                unit.push(Relu::new());
                unit.push(depthwise_separable(&format!("{p}.ds"), c2, c2, 3, s, r)?);
            }
            body.push(Residual::new(unit));
        }

        let mut c = c2;
        for (i, &o) in config.block3_plan.iter().enumerate() {
            let p = format!("b3.{i}");
            let path_a = Sequential::new()
                .with(Conv2d::new(
                    &format!("{p}.a.pw"),
                    ConvGeometry::pointwise(c, o).with_stride(2),
                    false,
                    s,
                    r,
                )?)
                .with(bn(&format!("{p}.a.bn"), o, s)?);
            let path_b = depthwise_separable(&format!("{p}.b.ds"), c, o, 3, s, r)?
                .with(bn(&format!("{p}.b.bn"), o, s)?)
                .with(Relu::new())
                .with(AvgPool::new(2, 2));
            body.push(TwoPath::new(path_a, path_b));
            c = o;
        }

        body.push(depthwise_separable("b4.ds", c, c, 3, s, r)?);
        body.push(bn("b4.bn", c, s)?);
        body.push(Relu::new());
        body.push(GlobalAvgPool::new());
        body.push(Linear::new("fc", c, CLASSES, s, r)?);

        Ok(Self {
            config: config.clone(),
            body,
            store,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Layer chain and parameters, for checks that drive the layers directly.
    pub fn parts_mut(&mut self) -> (&mut Sequential<T>, &mut ParamStore<T>) {
        (&mut self.body, &mut self.store)
    }

    pub fn input_dims(&self, batch: usize) -> [usize; 4] {
        [
            batch,
            self.config.input_planes,
            self.config.crop_size,
            self.config.crop_size,
        ]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [b, c, h, w] = x.dims4()?;
        if [b, c, h, w] != self.input_dims(b) || b == 0 {
            return invalid(format!(
                "network expects (B, {}, {}, {}) input, got {:?}",
                self.config.input_planes,
                self.config.crop_size,
                self.config.crop_size,
                x.shape()
            ));
        }
        Ok(())
    }

    /// Unnormalized class scores, shape `(B, 2)`.
    pub fn forward_logits(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(&x)?;
        Ok(self.body.forward(&mut self.store, x, mode)?)
    }

    /// Class probabilities (original, forged), shape `(B, 2)`.
    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let logits = self.forward_logits(x, mode)?;
        Ok(softmax(&logits)?)
    }

    /// Accumulates parameter gradients from `d loss / d logits` of the last forward.
    pub fn backward(&mut self, grad_logits: Tensor<T>) -> Result<()> {
        self.body.backward(&mut self.store, grad_logits)?;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    pub fn param_breakdown(&self) -> ParamBreakdown {
        self.store.breakdown()
    }

    pub fn macs_per_stack(&self) -> Result<u64> {
        Ok(self.body.macs(&self.input_dims(1))?)
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        self.body.specs(&mut out);
        out.push(LayerSpec::Softmax);
        out
    }

    /// Output shape after each top-level layer for a batch of one.
    pub fn trace_dims(&self) -> Result<Vec<Vec<usize>>> {
        Ok(self.body.trace_dims(&self.input_dims(1))?)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(self.config.manifest(), &self.store)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = NetConfig::from_manifest(ck)?;
        let mut net = Self::build(&config)?;
        ck.load_into(&mut net.store)?;
        Ok(net)
    }

    /// Same architecture and weights in another element type.
    pub fn cast<U: Scalar>(&self) -> Result<FcdNet<U>> {
        let mut net = FcdNet::<U>::build(&self.config)?;
        net.store = self.store.cast();
        Ok(net)
    }
}

/// Parameter count implied by the layer list, computed from the specs alone.
pub fn count_from_specs(specs: &[LayerSpec]) -> usize {
    specs
        .iter()
        .map(|s| match s {
            LayerSpec::Conv2d { geometry, bias, .. } => {
                geometry.weight_len() + if *bias { geometry.out_channels } else { 0 }
            }
            LayerSpec::BatchNorm { channels, .. } => 2 * channels,
            LayerSpec::FullyConnected {
                in_features,
                out_features,
                bias,
                ..
            } => in_features * out_features + if *bias { *out_features } else { 0 },
            _ => 0,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetConfig {
        NetConfig {
            input_planes: 5,
            groups: 5,
            crop_size: 16,
            block1_count: 1,
            block1_channels: 10,
            block2_count: 1,
            block2_channels: 6,
            block3_plan: vec![8, 12],
            seed: 1,
        }
    }

    #[test]
    fn counts_agree_three_ways() {
        for cfg in [tiny(), NetConfig::desk(), NetConfig::full()] {
            let net = FcdNet::<f32>::build(&cfg).unwrap();
            assert_eq!(net.param_count(), analytic_param_count(&cfg, Convention::BUILT));
            assert_eq!(net.param_count(), count_from_specs(&net.layer_specs()));
            assert_eq!(net.macs_per_stack().unwrap(), analytic_macs(&cfg));
        }
    }

    #[test]
    fn full_plan_hits_target() {
        let net = FcdNet::<f32>::build(&NetConfig::full()).unwrap();
        assert_eq!(net.param_count(), 218_010);
    }

    #[test]
    fn spatial_trace() {
        let mut cfg = NetConfig::desk();
        cfg.block3_plan = vec![16, 24, 32, 40];
        let net = FcdNet::<f32>::build(&cfg).unwrap();
        let sides: Vec<usize> = net
            .trace_dims()
            .unwrap()
            .iter()
            .filter(|d| d.len() == 4)
            .map(|d| d[2])
            .collect();
        let (b1, b2) = (1 + cfg.block1_count, 1 + cfg.block2_count);
        assert!(sides[..b1 + b2].iter().all(|&s| s == 64));
        assert_eq!(&sides[b1 + b2..b1 + b2 + 4], &[32, 16, 8, 4]);
    }

    #[test]
    fn invalid_configs() {
        let mut c = tiny();
        c.block1_channels = 12;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.crop_size = 18;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.block3_plan.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn wrong_plane_count_rejected() {
        let mut net = FcdNet::<f32>::build(&tiny()).unwrap();
        assert!(net.forward(Tensor::zeros(&[1, 4, 16, 16]), Mode::Eval).is_err());
        let p = net.forward(Tensor::zeros(&[3, 5, 16, 16]), Mode::Eval).unwrap();
        for row in p.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let net = FcdNet::<f32>::build(&tiny()).unwrap();
        let ck = Checkpoint::decode(&net.checkpoint().encode()).unwrap();
        let back = FcdNet::<f32>::from_checkpoint(&ck).unwrap();
        assert_eq!(back.config(), net.config());
        for ((a, pa), (b, pb)) in net.store().iter().zip(back.store().iter()) {
            assert_eq!(a, b);
            assert_eq!(pa.value, pb.value);
        }
    }
}
