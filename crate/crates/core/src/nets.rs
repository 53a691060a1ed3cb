//! Builders for the two residual recovery architectures: linearization nets
//! (one channel in) and matching nets (per-channel convolutions followed by
//! feature interleaving).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvLayer, Net, NetKind, ResidualBlock};

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub kind: NetKind,
    /// 1 for linearization, N >= 2 channel count for matching.
    pub n_inputs: usize,
    pub base_channels: usize,
    /// End-of-block feature widths, strictly nondecreasing.
    pub pyramid: Vec<usize>,
    pub kernel_width: usize,
    pub rng_seed: u64,
    pub global_skip: bool,
}

impl NetSpec {
    pub fn linearization(rng_seed: u64) -> Self {
        Self {
            kind: NetKind::Linearization,
            n_inputs: 1,
            base_channels: 32,
            pyramid: vec![34, 38, 44, 52],
            kernel_width: 3,
            rng_seed,
            global_skip: true,
        }
    }

    pub fn matching(n_inputs: usize, rng_seed: u64) -> Self {
        Self {
            kind: NetKind::Matching,
            n_inputs,
            ..Self::linearization(rng_seed)
        }
    }

    pub fn build(&self) -> Result<Net> {
        build(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be >= 1".into()));
        }
        if self.kernel_width % 2 == 0 || self.kernel_width == 0 {
            return Err(Error::Config("kernel_width must be odd".into()));
        }
        if self.pyramid.is_empty() {
            return Err(Error::Config("pyramid must have at least one block".into()));
        }
        if self.pyramid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("pyramid must be nondecreasing".into()));
        }
        match self.kind {
            NetKind::Linearization if self.n_inputs != 1 => {
                Err(Error::Config("linearization net takes exactly 1 input".into()))
            }
            NetKind::Matching if self.n_inputs < 2 => {
                Err(Error::Config("matching net needs n_inputs >= 2".into()))
            }
            _ => Ok(()),
        }
    }
}

fn he_uniform(layer: &mut ConvLayer, rng: &mut ChaCha8Rng) {
    let fan_in = (layer.in_ch * layer.kernel) as f64;
    let limit = (6.0 / fan_in).sqrt();
    for w in layer.weights.iter_mut() {
        *w = rng.gen_range(-limit..limit);
    }
    // Biases start at zero.
}

fn build(spec: &NetSpec) -> Result<Net> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let k = spec.kernel_width;
    let mut input_convs = Vec::with_capacity(spec.n_inputs);
    for _ in 0..spec.n_inputs {
        let mut l = ConvLayer::zeros(1, spec.base_channels, k, Activation::None);
        he_uniform(&mut l, &mut rng);
        input_convs.push(l);
    }
    let mut blocks = Vec::with_capacity(spec.pyramid.len());
    let mut in_ch = spec.base_channels;
    for &j in &spec.pyramid {
        let mut conv1 = ConvLayer::zeros(in_ch, j, k, Activation::Relu);
        let mut conv2 = ConvLayer::zeros(j, j, k, Activation::Relu);
        he_uniform(&mut conv1, &mut rng);
        he_uniform(&mut conv2, &mut rng);
        // Shortcut projection only where the width changes.
        let projection = if in_ch != j {
            let mut p = ConvLayer::zeros(in_ch, j, 1, Activation::None);
            he_uniform(&mut p, &mut rng);
            Some(p)
        } else {
            None
        };
        blocks.push(ResidualBlock {
            conv1,
            conv2,
            projection,
        });
        in_ch = j;
    }
    // Zero-initialized output layer makes the whole net exactly the identity
    // (or plain interleave) at step 0.
    let output_conv = ConvLayer::zeros(in_ch, 1, k, Activation::None);
    Ok(Net {
        kind: spec.kind,
        input_convs,
        blocks,
        output_conv,
        global_skip: spec.global_skip,
    })
}

pub fn build_linearization_net(spec: &NetSpec) -> Result<Net> {
    if spec.kind != NetKind::Linearization {
        return Err(Error::Config("spec kind must be Linearization".into()));
    }
    build(spec)
}

pub fn build_matching_net(spec: &NetSpec) -> Result<Net> {
    if spec.kind != NetKind::Matching {
        return Err(Error::Config("spec kind must be Matching".into()));
    }
    build(spec)
}

/// One line per layer: role, kernel width, channel map, activation.
pub fn describe(net: &Net) -> String {
    let mut s = String::new();
    let kind = match net.kind {
        NetKind::Linearization => "linearization",
        NetKind::Matching => "matching",
    };
    s.push_str(&format!("{} net, {} input(s)\n", kind, net.n_inputs()));
    for (m, l) in net.input_convs.iter().enumerate() {
        s.push_str(&format!(
            "input[{m}] conv k{} {}->{} linear\n",
            l.kernel, l.in_ch, l.out_ch
        ));
    }
    if net.n_inputs() > 1 {
        s.push_str(&format!("interleave x{}\n", net.n_inputs()));
    }
    for (i, b) in net.blocks.iter().enumerate() {
        s.push_str(&format!(
            "block[{i}] conv k{} {}->{} relu\n",
            b.conv1.kernel, b.conv1.in_ch, b.conv1.out_ch
        ));
        s.push_str(&format!(
            "block[{i}] conv k{} {}->{} relu\n",
            b.conv2.kernel, b.conv2.in_ch, b.conv2.out_ch
        ));
        match &b.projection {
            Some(p) => s.push_str(&format!(
                "block[{i}] shortcut conv k1 {}->{} linear\n",
                p.in_ch, p.out_ch
            )),
            None => s.push_str(&format!("block[{i}] shortcut identity\n")),
        }
    }
    let o = &net.output_conv;
    s.push_str(&format!(
        "output conv k{} {}->{} linear\n",
        o.kernel, o.in_ch, o.out_ch
    ));
    if net.global_skip {
        s.push_str("global skip: add raw input\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linearization_channel_sequence() {
        let net = build_linearization_net(&NetSpec::linearization(1)).unwrap();
        let widths: Vec<(usize, usize)> = net.layers().iter().map(|l| (l.in_ch, l.out_ch)).collect();
        assert_eq!(
            widths,
            vec![
                (1, 32),
                (32, 34),
                (34, 34),
                (32, 34), // projection
                (34, 38),
                (38, 38),
                (34, 38),
                (38, 44),
                (44, 44),
                (38, 44),
                (44, 52),
                (52, 52),
                (44, 52),
                (52, 1),
            ]
        );
    }

    #[test]
    fn zero_init_output_is_identity() {
        let net = build_linearization_net(&NetSpec::linearization(3)).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = net.forward(&[x.clone()]).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_zero_init_is_interleave() {
        let net = build_matching_net(&NetSpec::matching(2, 5)).unwrap();
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| -(i as f64)).collect();
        let y = net.forward(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(y.len(), 40);
        let expect = crate::signal::interleave_seqs(&[a, b]);
        for (u, v) in y.iter().zip(&expect) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_output_length() {
        let net = build_matching_net(&NetSpec::matching(2, 5)).unwrap();
        let x = vec![vec![0.5; 1000], vec![0.25; 1000]];
        assert_eq!(net.forward(&x).unwrap().len(), 2000);
    }

    #[test]
    fn eight_channel_builds_and_runs() {
        let net = build_matching_net(&NetSpec::matching(8, 9)).unwrap();
        let inputs: Vec<Vec<f64>> = (0..8).map(|m| vec![m as f64 * 0.1; 16]).collect();
        assert_eq!(net.forward(&inputs).unwrap().len(), 128);
    }

    #[test]
    fn param_count_regression() {
        // Independent per-layer arithmetic: (in*k + 1) * out per conv layer.
        let net = build_linearization_net(&NetSpec::linearization(0)).unwrap();
        let mut expect = (1 * 3 + 1) * 32 + (52 * 3 + 1) * 1;
        let mut prev = 32;
        for j in [34usize, 38, 44, 52] {
            expect += (prev * 3 + 1) * j + (j * 3 + 1) * j + (prev * 1 + 1) * j;
            prev = j;
        }
        assert_eq!(net.n_params(), expect);
        assert_eq!(net.n_params(), 47869); // frozen regression constant

        let matching = build_matching_net(&NetSpec::matching(2, 0)).unwrap();
        assert_eq!(matching.n_params(), 47869 + (1 * 3 + 1) * 32);
    }

    #[test]
    fn length_agnostic_forward() {
        let net = build_linearization_net(&NetSpec::linearization(7)).unwrap();
        for l in [7usize, 100, 1000] {
            let x = vec![0.1; l];
            assert_eq!(net.forward(&[x]).unwrap().len(), l);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = NetSpec::linearization(0);
        s.pyramid = vec![40, 38];
        assert!(build_linearization_net(&s).is_err());
        let s2 = NetSpec::matching(1, 0);
        assert!(build_matching_net(&s2).is_err());
        assert!(build_matching_net(&NetSpec::linearization(0)).is_err());
    }

    #[test]
    fn no_projection_when_widths_match() {
        let mut s = NetSpec::linearization(0);
        s.pyramid = vec![32, 40];
        let net = build_linearization_net(&s).unwrap();
        assert!(net.blocks[0].projection.is_none());
        assert!(net.blocks[1].projection.is_some());
    }

    #[test]
    fn describe_golden() {
        let net = build_linearization_net(&NetSpec::linearization(0)).unwrap();
        let d = describe(&net);
        assert!(d.contains("input[0] conv k3 1->32 linear"));
        assert!(d.contains("block[3] conv k3 52->52 relu"));
        assert!(d.contains("output conv k3 52->1 linear"));
    }
}
