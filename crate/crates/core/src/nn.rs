//! Minimal 1-D convolutional network engine: forward pass, hand-written
//! reverse-mode gradients, and adaptive-gradient optimizers.
//!
//! Only what the residual linearization/matching models need: SAME
//! convolutions with kernel width 3, 1x1 projections, ReLU, feature-wise
//! interleaving, and a global input skip. All math is f64.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

/// Real matrix of feature channels, row-major `[channels x length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_seq(seq: &[f64]) -> Self {
        Self {
            channels: 1,
            len: seq.len(),
            data: seq.to_vec(),
        }
    }

    pub fn row(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.len..(ch + 1) * self.len]
    }

    pub fn row_mut(&mut self, ch: usize) -> &mut [f64] {
        &mut self.data[ch * self.len..(ch + 1) * self.len]
    }
}

/// One convolution layer; weights are `[out_ch][in_ch][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, activation: Activation) -> Self {
        assert!(kernel % 2 == 1, "kernel width must be odd");
        Self {
            in_ch,
            out_ch,
            kernel,
            activation,
            weights: vec![0.0; out_ch * in_ch * kernel],
            bias: vec![0.0; out_ch],
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn w(&self, o: usize, i: usize) -> &[f64] {
        let base = (o * self.in_ch + i) * self.kernel;
        &self.weights[base..base + self.kernel]
    }
}

/// Zero-padded SAME cross-correlation plus bias and optional ReLU.
pub fn conv1d_same(x: &FeatureMap, layer: &ConvLayer) -> Result<FeatureMap> {
    if x.channels != layer.in_ch {
        return Err(Error::Shape(format!(
            "input has {} channels, layer expects {}",
            x.channels, layer.in_ch
        )));
    }
    let len = x.len;
    let mut out = FeatureMap::zeros(layer.out_ch, len);
    for o in 0..layer.out_ch {
        let row = out.row_mut(o);
        row.fill(layer.bias[o]);
        for i in 0..layer.in_ch {
            let xr = x.row(i);
            accumulate_conv(row, xr, layer.w(o, i));
        }
        if layer.activation == Activation::Relu {
            for v in row.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// row[t] += sum_k w[k] * x[t + k - r], zero padded.
#[inline]
fn accumulate_conv(row: &mut [f64], x: &[f64], w: &[f64]) {
    let len = x.len();
    match w.len() {
        1 => {
            let w0 = w[0];
            for t in 0..len {
                row[t] += w0 * x[t];
            }
        }
        3 => {
            let (w0, w1, w2) = (w[0], w[1], w[2]);
            if len == 0 {
                return;
            }
            row[0] += w1 * x[0] + if len > 1 { w2 * x[1] } else { 0.0 };
            for t in 1..len.saturating_sub(1) {
                row[t] += w0 * x[t - 1] + w1 * x[t] + w2 * x[t + 1];
            }
            if len > 1 {
                row[len - 1] += w0 * x[len - 2] + w1 * x[len - 1];
            }
        }
        k => {
            let r = k / 2;
            for t in 0..len {
                let mut acc = 0.0;
                for (j, &wj) in w.iter().enumerate() {
                    let idx = t as isize + j as isize - r as isize;
                    if idx >= 0 && (idx as usize) < len {
                        acc += wj * x[idx as usize];
                    }
                }
                row[t] += acc;
            }
        }
    }
}

/// dx[t] += sum_k w[k] * dy[t - k + r] (transpose of accumulate_conv).
#[inline]
fn accumulate_conv_transpose(dx: &mut [f64], dy: &[f64], w: &[f64]) {
    let len = dy.len();
    match w.len() {
        1 => {
            let w0 = w[0];
            for t in 0..len {
                dx[t] += w0 * dy[t];
            }
        }
        3 => {
            // Transpose of [w0 w1 w2] correlation is correlation with the
            // reversed kernel.
            let (w0, w1, w2) = (w[2], w[1], w[0]);
            if len == 0 {
                return;
            }
            dx[0] += w1 * dy[0] + if len > 1 { w2 * dy[1] } else { 0.0 };
            for t in 1..len.saturating_sub(1) {
                dx[t] += w0 * dy[t - 1] + w1 * dy[t] + w2 * dy[t + 1];
            }
            if len > 1 {
                dx[len - 1] += w0 * dy[len - 2] + w1 * dy[len - 1];
            }
        }
        k => {
            let r = k / 2;
            for t in 0..len {
                let mut acc = 0.0;
                for (j, &wj) in w.iter().enumerate() {
                    let idx = t as isize - j as isize + r as isize;
                    if idx >= 0 && (idx as usize) < len {
                        acc += wj * dy[idx as usize];
                    }
                }
                dx[t] += acc;
            }
        }
    }
}

/// dw[k] = sum_t dy[t] * x[t + k - r], zero padded.
#[inline]
fn kernel_grad(dy: &[f64], x: &[f64], k: usize, dw: &mut [f64]) {
    let len = x.len();
    let r = k / 2;
    if k == 3 && len >= 2 {
        let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for t in 1..len - 1 {
            let d = dy[t];
            g0 += d * x[t - 1];
            g1 += d * x[t];
            g2 += d * x[t + 1];
        }
        g1 += dy[0] * x[0] + dy[len - 1] * x[len - 1];
        g2 += dy[0] * x[1];
        g0 += dy[len - 1] * x[len - 2];
        dw[0] += g0;
        dw[1] += g1;
        dw[2] += g2;
        return;
    }
    for (j, dwj) in dw.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in 0..len {
            let idx = t as isize + j as isize - r as isize;
            if idx >= 0 && (idx as usize) < len {
                acc += dy[t] * x[idx as usize];
            }
        }
        *dwj += acc;
    }
}

/// Backward pass through one conv layer. `y` is the layer output (after
/// activation), `dy` its gradient. Returns the input gradient and fills
/// `dw`/`db` slices laid out like the layer's own parameters.
fn conv1d_backward(
    layer: &ConvLayer,
    x: &FeatureMap,
    y: &FeatureMap,
    dy: &FeatureMap,
    dw: &mut [f64],
    db: &mut [f64],
) -> FeatureMap {
    let len = x.len;
    let k = layer.kernel;
    // ReLU gate: gradient is zero wherever the output was clipped.
    let gated;
    let dy_eff = if layer.activation == Activation::Relu {
        let mut g = dy.clone();
        for (gv, &out) in g.data.iter_mut().zip(&y.data) {
            if out <= 0.0 {
                *gv = 0.0;
            }
        }
        gated = g;
        &gated
    } else {
        dy
    };
    let mut dx = FeatureMap::zeros(layer.in_ch, len);
    for o in 0..layer.out_ch {
        let dyo = dy_eff.row(o);
        db[o] += dyo.iter().sum::<f64>();
        for i in 0..layer.in_ch {
            let base = (o * layer.in_ch + i) * k;
            kernel_grad(dyo, x.row(i), k, &mut dw[base..base + k]);
            accumulate_conv_transpose(dx.row_mut(i), dyo, layer.w(o, i));
        }
    }
    dx
}

/// Feature-wise round-robin interleave of equal-shape maps.
pub fn interleave(maps: &[FeatureMap]) -> Result<FeatureMap> {
    let n = maps.len();
    if n == 0 {
        return Err(Error::Shape("interleave of zero maps".into()));
    }
    let (ch, len) = (maps[0].channels, maps[0].len);
    for m in maps {
        if m.channels != ch || m.len != len {
            return Err(Error::Shape("interleave requires equal shapes".into()));
        }
    }
    let mut out = FeatureMap::zeros(ch, n * len);
    for j in 0..ch {
        let row = out.row_mut(j);
        for (m, map) in maps.iter().enumerate() {
            for (t, &v) in map.row(j).iter().enumerate() {
                row[t * n + m] = v;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`interleave`].
pub fn deinterleave(map: &FeatureMap, n: usize) -> Result<Vec<FeatureMap>> {
    if map.len % n != 0 {
        return Err(Error::Shape(format!(
            "length {} not divisible by {n}",
            map.len
        )));
    }
    let len = map.len / n;
    let mut out = vec![FeatureMap::zeros(map.channels, len); n];
    for j in 0..map.channels {
        let row = map.row(j);
        for (m, part) in out.iter_mut().enumerate() {
            let prow = part.row_mut(j);
            for (t, p) in prow.iter_mut().enumerate() {
                *p = row[t * n + m];
            }
        }
    }
    Ok(out)
}

/// Two conv+ReLU layers plus an optional 1x1 shortcut projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub projection: Option<ConvLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Linearization,
    Matching,
}

/// The residual recovery model: input conv(s), residual blocks, output conv,
/// global input skip. Matching nets interleave per-input feature maps after
/// the individual input convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub kind: NetKind,
    pub input_convs: Vec<ConvLayer>,
    pub blocks: Vec<ResidualBlock>,
    pub output_conv: ConvLayer,
    pub global_skip: bool,
}

/// Activations cached by a training forward pass.
pub struct ForwardCache {
    inputs: Vec<FeatureMap>,
    input_conv_out: Vec<FeatureMap>,
    /// Per block: (input, hidden after conv1, conv2 activation pre-add).
    block_io: Vec<(FeatureMap, FeatureMap, FeatureMap)>,
    final_features: FeatureMap,
    out_map: FeatureMap,
    pub output: Vec<f64>,
}

impl Net {
    pub fn n_inputs(&self) -> usize {
        self.input_convs.len()
    }

    /// Canonical layer order: input convs, per block conv1/conv2/projection,
    /// output conv.
    pub fn layers(&self) -> Vec<&ConvLayer> {
        let mut v: Vec<&ConvLayer> = self.input_convs.iter().collect();
        for b in &self.blocks {
            v.push(&b.conv1);
            v.push(&b.conv2);
            if let Some(p) = &b.projection {
                v.push(p);
            }
        }
        v.push(&self.output_conv);
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer> {
        let mut v: Vec<&mut ConvLayer> = self.input_convs.iter_mut().collect();
        for b in &mut self.blocks {
            v.push(&mut b.conv1);
            v.push(&mut b.conv2);
            if let Some(p) = &mut b.projection {
                v.push(p);
            }
        }
        v.push(&mut self.output_conv);
        v
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|l| l.n_params()).sum()
    }

    /// Flattened parameters in canonical order (weights then bias per layer).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} params, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut off = 0;
        for l in self.layers_mut() {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Total receptive-field half-width in output samples.
    pub fn receptive_radius(&self) -> usize {
        // The interleave stretches the input-conv radius by the channel count.
        let n = self.n_inputs();
        let input_r = (self.input_convs[0].kernel / 2) * n;
        let mut r = input_r;
        for b in &self.blocks {
            r += b.conv1.kernel / 2 + b.conv2.kernel / 2;
        }
        r + self.output_conv.kernel / 2
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.len() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "net expects {} input sequences, got {}",
                self.n_inputs(),
                inputs.len()
            )));
        }
        let len = inputs[0].len();
        if len < self.input_convs[0].kernel {
            return Err(Error::Shape(format!(
                "input length {len} shorter than kernel"
            )));
        }
        if inputs.iter().any(|s| s.len() != len) {
            return Err(Error::Shape("input sequences must share a length".into()));
        }
        Ok(())
    }

    /// Forward pass with cached activations for [`Net::backward`].
    pub fn forward_training(&self, inputs: &[Vec<f64>]) -> Result<ForwardCache> {
        self.check_inputs(inputs)?;
        let in_maps: Vec<FeatureMap> = inputs.iter().map(|s| FeatureMap::from_seq(s)).collect();
        let conv_outs: Vec<FeatureMap> = self
            .input_convs
            .iter()
            .zip(&in_maps)
            .map(|(l, m)| conv1d_same(m, l))
            .collect::<Result<_>>()?;
        let merged = if conv_outs.len() == 1 {
            conv_outs[0].clone()
        } else {
            interleave(&conv_outs)?
        };
        let mut block_io = Vec::with_capacity(self.blocks.len());
        let mut cur = merged;
        for b in &self.blocks {
            let hidden = conv1d_same(&cur, &b.conv1)?;
            let act2 = conv1d_same(&hidden, &b.conv2)?;
            let mut out = act2.clone();
            match &b.projection {
                Some(p) => {
                    let proj = conv1d_same(&cur, p)?;
                    for (o, pv) in out.data.iter_mut().zip(&proj.data) {
                        *o += pv;
                    }
                }
                None => {
                    for (o, xv) in out.data.iter_mut().zip(&cur.data) {
                        *o += xv;
                    }
                }
            }
            block_io.push((cur, hidden, act2));
            cur = out;
        }
        let final_features = cur;
        let out_map = conv1d_same(&final_features, &self.output_conv)?;
        let mut output = out_map.row(0).to_vec();
        if self.global_skip {
            if self.n_inputs() == 1 {
                for (o, &x) in output.iter_mut().zip(inputs[0].iter()) {
                    *o += x;
                }
            } else {
                let skip = crate::signal::interleave_seqs(inputs);
                for (o, &x) in output.iter_mut().zip(skip.iter()) {
                    *o += x;
                }
            }
        }
        Ok(ForwardCache {
            inputs: in_maps,
            input_conv_out: conv_outs,
            block_io,
            final_features,
            out_map,
            output,
        })
    }

    /// Forward pass without gradient bookkeeping.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward_training(inputs)?.output)
    }

    /// Exact reverse-mode gradients of a scalar loss w.r.t. every parameter,
    /// given d(loss)/d(output). Returns them flattened in canonical order.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &[f64]) -> Result<Vec<f64>> {
        if loss_grad.len() != cache.output.len() {
            return Err(Error::Shape(format!(
                "loss_grad length {} != output length {}",
                loss_grad.len(),
                cache.output.len()
            )));
        }
        let mut grads = vec![0.0; self.n_params()];
        // Slice offsets per layer in canonical order.
        let offsets: Vec<(usize, usize)> = {
            let mut v = Vec::new();
            let mut off = 0;
            for l in self.layers() {
                v.push((off, off + l.weights.len()));
                off += l.n_params();
            }
            v
        };
        let n_in = self.n_inputs();
        let out_idx = offsets.len() - 1;

        // Output conv.
        let dy_out = FeatureMap {
            channels: 1,
            len: loss_grad.len(),
            data: loss_grad.to_vec(),
        };
        let (ws, we) = offsets[out_idx];
        let (wslice, rest) = grads[ws..].split_at_mut(we - ws);
        let mut d_cur = {
            let db = &mut rest[..self.output_conv.bias.len()];
            conv1d_backward(
                &self.output_conv,
                &cache.final_features,
                &cache.out_map,
                &dy_out,
                wslice,
                db,
            )
        };

        // Residual blocks in reverse.
        let mut layer_idx = out_idx;
        for (bi, b) in self.blocks.iter().enumerate().rev() {
            let (bx, bh, act2) = &cache.block_io[bi];
            let has_proj = b.projection.is_some();
            let n_layers = if has_proj { 3 } else { 2 };
            layer_idx -= n_layers;
            // conv2 (its input is the hidden map).
            let (c2s, c2e) = offsets[layer_idx + 1];
            let d_hidden = {
                let (wslice, rest) = grads[c2s..].split_at_mut(c2e - c2s);
                let db = &mut rest[..b.conv2.bias.len()];
                conv1d_backward(&b.conv2, bh, act2, &d_cur, wslice, db)
            };
            // conv1.
            let (c1s, c1e) = offsets[layer_idx];
            let mut d_block_in = {
                let (wslice, rest) = grads[c1s..].split_at_mut(c1e - c1s);
                let db = &mut rest[..b.conv1.bias.len()];
                conv1d_backward(&b.conv1, bx, bh, &d_hidden, wslice, db)
            };
            // Shortcut path.
            match &b.projection {
                Some(p) => {
                    let (ps, pe) = offsets[layer_idx + 2];
                    let (wslice, rest) = grads[ps..].split_at_mut(pe - ps);
                    let db = &mut rest[..p.bias.len()];
                    // Projection has no activation, so the output argument is
                    // never consulted; d_cur has the right shape.
                    let d_proj_in = conv1d_backward(p, bx, &d_cur, &d_cur, wslice, db);
                    for (d, pv) in d_block_in.data.iter_mut().zip(&d_proj_in.data) {
                        *d += pv;
                    }
                }
                None => {
                    for (d, pv) in d_block_in.data.iter_mut().zip(&d_cur.data) {
                        *d += pv;
                    }
                }
            }
            d_cur = d_block_in;
        }

        // Interleave node and input convs.
        let d_merged = d_cur;
        let d_conv_outs: Vec<FeatureMap> = if n_in == 1 {
            vec![d_merged]
        } else {
            deinterleave(&d_merged, n_in)?
        };
        for (m, (layer, d_out)) in self.input_convs.iter().zip(&d_conv_outs).enumerate() {
            let (s, e) = offsets[m];
            let (wslice, rest) = grads[s..].split_at_mut(e - s);
            let db = &mut rest[..layer.bias.len()];
            conv1d_backward(
                layer,
                &cache.inputs[m],
                &cache.input_conv_out[m],
                d_out,
                wslice,
                db,
            );
        }
        Ok(grads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptAlgorithm {
    Adam,
    AdaGrad,
}

/// Adaptive-gradient optimizer state; accumulator shapes mirror the flat
/// parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub algorithm: OptAlgorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(algorithm: OptAlgorithm, learning_rate: f64, n_params: usize) -> Self {
        Self {
            algorithm,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer expects {} params, got {}/{} (params/grads)",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        match self.algorithm {
            OptAlgorithm::Adam => {
                let b1 = self.beta1;
                let b2 = self.beta2;
                let bc1 = 1.0 - b1.powi(self.step as i32);
                let bc2 = 1.0 - b2.powi(self.step as i32);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let mh = self.m[i] / bc1;
                    let vh = self.v[i] / bc2;
                    params[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
                }
            }
            OptAlgorithm::AdaGrad => {
                for i in 0..params.len() {
                    let g = grads[i];
                    self.v[i] += g * g;
                    params[i] -= self.learning_rate * g / (self.v[i].sqrt() + self.epsilon);
                }
            }
        }
        Ok(())
    }

    /// Sidecar serialization so a resumed run continues the exact trajectory.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"PADO")?;
        w.write_all(&1u16.to_le_bytes())?;
        w.write_all(&[match self.algorithm {
            OptAlgorithm::Adam => 0u8,
            OptAlgorithm::AdaGrad => 1u8,
        }])?;
        w.write_all(&self.learning_rate.to_le_bytes())?;
        w.write_all(&self.beta1.to_le_bytes())?;
        w.write_all(&self.beta2.to_le_bytes())?;
        w.write_all(&self.epsilon.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&(self.m.len() as u64).to_le_bytes())?;
        for &x in self.m.iter().chain(self.v.iter()) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"PADO" {
            return Err(Error::Format {
                offset: 0,
                msg: "bad optimizer magic".into(),
            });
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != 1 {
            return Err(Error::Format {
                offset: 4,
                msg: "unsupported optimizer version".into(),
            });
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let algorithm = match b1[0] {
            0 => OptAlgorithm::Adam,
            1 => OptAlgorithm::AdaGrad,
            other => {
                return Err(Error::Format {
                    offset: 6,
                    msg: format!("unknown optimizer algorithm {other}"),
                })
            }
        };
        let mut b8 = [0u8; 8];
        let mut f = || -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let learning_rate = f()?;
        let beta1 = f()?;
        let beta2 = f()?;
        let epsilon = f()?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let step = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                v.push(f64::from_le_bytes(b));
            }
            Ok(v)
        };
        let m = read_vec(n)?;
        let v = read_vec(n)?;
        Ok(Self {
            algorithm,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step,
            m,
            v,
        })
    }
}

const CHECKPOINT_VERSION: u16 = 1;

/// Checkpoint serialization: magic "PADN", version u16, net-kind u8,
/// n_inputs u8, layer count u16, then per layer {in_ch u32, out_ch u32,
/// kernel u32, activation u8, weights f64 LE in [out][in][tap] order, bias
/// f64 LE}.
pub fn write_checkpoint<W: Write>(net: &Net, w: &mut W) -> Result<()> {
    w.write_all(b"PADN")?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[match net.kind {
        NetKind::Linearization => 0u8,
        NetKind::Matching => 1u8,
    }])?;
    w.write_all(&[net.n_inputs() as u8])?;
    let layers = net.layers();
    w.write_all(&(layers.len() as u16).to_le_bytes())?;
    for l in layers {
        w.write_all(&(l.in_ch as u32).to_le_bytes())?;
        w.write_all(&(l.out_ch as u32).to_le_bytes())?;
        w.write_all(&(l.kernel as u32).to_le_bytes())?;
        w.write_all(&[match l.activation {
            Activation::None => 0u8,
            Activation::Relu => 1u8,
        }])?;
        for &x in l.weights.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
        for &x in l.bias.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(net: &Net, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(net, &mut f)
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| Error::Format {
            offset: at,
            msg: "unexpected end of file".into(),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Net> {
    let mut r = CountingReader {
        inner: r,
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"PADN" {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"PADN\""),
        });
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"),
        });
    }
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let kind = match b1[0] {
        0 => NetKind::Linearization,
        1 => NetKind::Matching,
        other => {
            return Err(Error::Format {
                offset: 6,
                msg: format!("unknown net kind {other}"),
            })
        }
    };
    r.read_exact(&mut b1)?;
    let n_inputs = b1[0] as usize;
    if n_inputs == 0 {
        return Err(Error::Format {
            offset: 7,
            msg: "n_inputs must be >= 1".into(),
        });
    }
    r.read_exact(&mut b2)?;
    let n_layers = u16::from_le_bytes(b2) as usize;
    if n_layers < n_inputs + 1 {
        return Err(Error::Format {
            offset: 8,
            msg: format!("layer count {n_layers} too small for {n_inputs} inputs"),
        });
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let in_ch = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let out_ch = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let kernel = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b1)?;
        let activation = match b1[0] {
            0 => Activation::None,
            1 => Activation::Relu,
            other => {
                return Err(Error::Format {
                    offset: r.offset - 1,
                    msg: format!("unknown activation {other}"),
                })
            }
        };
        let mut layer = ConvLayer::zeros(in_ch, out_ch, kernel, activation);
        let mut b8 = [0u8; 8];
        for x in layer.weights.iter_mut() {
            r.read_exact(&mut b8)?;
            *x = f64::from_le_bytes(b8);
        }
        for x in layer.bias.iter_mut() {
            r.read_exact(&mut b8)?;
            *x = f64::from_le_bytes(b8);
        }
        layers.push(layer);
    }
    // Reassemble structure: n_inputs input convs, then blocks of
    // conv1/conv2[/k1 projection], then the output conv.
    let mut it = layers.into_iter();
    let input_convs: Vec<ConvLayer> = (&mut it).take(n_inputs).collect();
    let mut rest: Vec<ConvLayer> = it.collect();
    let output_conv = rest.pop().ok_or(Error::Format {
        offset: 8,
        msg: "missing output layer".into(),
    })?;
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < rest.len() {
        if i + 1 >= rest.len() {
            return Err(Error::Format {
                offset: r.offset,
                msg: "dangling residual-block layer".into(),
            });
        }
        let conv1 = rest[i].clone();
        let conv2 = rest[i + 1].clone();
        i += 2;
        let projection = if i < rest.len() && rest[i].kernel == 1 {
            let p = rest[i].clone();
            i += 1;
            Some(p)
        } else {
            None
        };
        blocks.push(ResidualBlock {
            conv1,
            conv2,
            projection,
        });
    }
    Ok(Net {
        kind,
        input_convs,
        blocks,
        output_conv,
        global_skip: true,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Net> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_with(in_ch: usize, out_ch: usize, k: usize, act: Activation, w: &[f64], b: &[f64]) -> ConvLayer {
        let mut l = ConvLayer::zeros(in_ch, out_ch, k, act);
        l.weights.copy_from_slice(w);
        l.bias.copy_from_slice(b);
        l
    }

    #[test]
    fn conv_identity_kernel() {
        let l = layer_with(1, 1, 3, Activation::None, &[0.0, 1.0, 0.0], &[0.0]);
        let x = FeatureMap::from_seq(&[1.0, -2.0, 3.0, 4.5]);
        let y = conv1d_same(&x, &l).unwrap();
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn conv_hand_example() {
        let l = layer_with(1, 1, 3, Activation::None, &[1.0, 1.0, 1.0], &[0.0]);
        let x = FeatureMap::from_seq(&[1.0, 2.0, 3.0]);
        let y = conv1d_same(&x, &l).unwrap();
        assert_eq!(y.data, vec![3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_zero_weights_bias() {
        let l = layer_with(1, 2, 3, Activation::None, &[0.0; 6], &[2.5, -1.0]);
        let x = FeatureMap::from_seq(&[1.0, 2.0, 3.0, 4.0]);
        let y = conv1d_same(&x, &l).unwrap();
        assert_eq!(y.row(0), &[2.5; 4]);
        assert_eq!(y.row(1), &[-1.0; 4]);
    }

    #[test]
    fn conv_channel_mismatch() {
        let l = ConvLayer::zeros(2, 1, 3, Activation::None);
        let x = FeatureMap::from_seq(&[1.0, 2.0]);
        assert!(conv1d_same(&x, &l).is_err());
    }

    #[test]
    fn relu_clips() {
        let l = layer_with(1, 1, 1, Activation::Relu, &[1.0], &[0.0]);
        let x = FeatureMap::from_seq(&[-1.0, 2.0]);
        let y = conv1d_same(&x, &l).unwrap();
        assert_eq!(y.data, vec![0.0, 2.0]);
    }

    #[test]
    fn interleave_pattern() {
        let a = FeatureMap::from_seq(&[1.0, 3.0, 5.0]);
        let b = FeatureMap::from_seq(&[2.0, 4.0, 6.0]);
        let out = interleave(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(out.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let back = deinterleave(&out, 2).unwrap();
        assert_eq!(back[0], a);
        assert_eq!(back[1], b);
    }

    #[test]
    fn interleave_constant_maps() {
        let c = FeatureMap {
            channels: 2,
            len: 4,
            data: vec![7.0; 8],
        };
        let out = interleave(&[c.clone(), c.clone(), c]).unwrap();
        assert_eq!(out.len, 12);
        assert!(out.data.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn interleave_shape_error() {
        let a = FeatureMap::from_seq(&[1.0, 2.0]);
        let b = FeatureMap::from_seq(&[1.0, 2.0, 3.0]);
        assert!(interleave(&[a, b]).is_err());
    }

    #[test]
    fn optimizer_zero_grad_is_identity() {
        let mut p = vec![1.0, -2.0];
        let mut opt = Optimizer::new(OptAlgorithm::Adam, 0.1, 2);
        opt.apply(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // With bias correction, the first Adam step is lr * g/|g| for any
        // nonzero constant gradient (up to epsilon).
        let mut p = vec![0.0];
        let mut opt = Optimizer::new(OptAlgorithm::Adam, 1e-3, 1);
        opt.apply(&mut p, &[42.0]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9, "got {}", p[0]);
    }

    #[test]
    fn adam_quadratic_bowl() {
        // f(theta) = theta^2, grad = 2 theta.
        let mut p: Vec<f64> = vec![3.0];
        let mut opt = Optimizer::new(OptAlgorithm::Adam, 0.1, 1);
        let mut prev = p[0].abs();
        for step in 0..100 {
            let g = 2.0 * p[0];
            opt.apply(&mut p, &[g]).unwrap();
            // Monotone descent after warmup, until the iterate reaches the
            // oscillation floor near the optimum.
            if step >= 5 && prev > 0.3 {
                assert!(p[0].abs() <= prev + 1e-12, "step {step}");
            }
            prev = p[0].abs();
        }
        assert!(p[0].abs() < 0.5);
    }

    #[test]
    fn adagrad_descends() {
        let mut p = vec![2.0];
        let mut opt = Optimizer::new(OptAlgorithm::AdaGrad, 0.5, 1);
        for _ in 0..200 {
            let g = 2.0 * p[0];
            opt.apply(&mut p, &[g]).unwrap();
        }
        assert!(p[0].abs() < 0.5, "got {}", p[0]);
    }

    #[test]
    fn optimizer_roundtrip() {
        let mut opt = Optimizer::new(OptAlgorithm::Adam, 1e-3, 3);
        let mut p = vec![1.0, 2.0, 3.0];
        opt.apply(&mut p, &[0.1, -0.2, 0.3]).unwrap();
        let mut buf = Vec::new();
        opt.write_to(&mut buf).unwrap();
        let back = Optimizer::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(opt, back);
    }
}
