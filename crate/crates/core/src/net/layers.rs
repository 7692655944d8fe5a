//! Named parameter storage and the conv / up-conv / batch-norm building blocks.

use m2b_tensor::{init, BatchNormMode, ConvSpec, Element, RunningStats, Tape, Tensor, Var};
use rand::Rng;

use crate::Result;

pub(crate) const INIT_STD: f64 = 0.02;

/// Which optimizer group a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Audio,
    Visual,
}

/// Trainable tensors and batch-norm running statistics, in creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub(crate) names: Vec<String>,
    pub(crate) values: Vec<Tensor<T>>,
    pub(crate) groups: Vec<ParamGroup>,
    pub(crate) bn_names: Vec<String>,
    pub(crate) stats: Vec<RunningStats<T>>,
}

impl<T: Element> ParamSet<T> {
    pub(crate) fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
            groups: Vec::new(),
            bn_names: Vec::new(),
            stats: Vec::new(),
        }
    }

    fn add(&mut self, name: String, value: Tensor<T>, group: ParamGroup) -> usize {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        self.groups.push(group);
        self.values.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub fn bn_names(&self) -> &[String] {
        &self.bn_names
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }
}

/// Batch-norm statistics access for one forward pass.
pub(crate) enum Stats<'a, T> {
    Train(&'a mut [RunningStats<T>]),
    Eval(&'a [RunningStats<T>]),
}

/// One forward pass: the tape, the parameter variables and the statistics mode.
pub(crate) struct Ctx<'a, T> {
    pub tape: &'a mut Tape<T>,
    pub vars: Vec<Var>,
    pub stats: Stats<'a, T>,
}

impl<'a, T: Element> Ctx<'a, T> {
    pub(crate) fn train(tape: &'a mut Tape<T>, params: &'a mut ParamSet<T>) -> Self {
        let vars = params.values.iter().map(|v| tape.param(v.clone())).collect();
        Ctx {
            tape,
            vars,
            stats: Stats::Train(&mut params.stats),
        }
    }

    pub(crate) fn eval(tape: &'a mut Tape<T>, params: &'a ParamSet<T>) -> Self {
        let vars = params.values.iter().map(|v| tape.constant(v.clone())).collect();
        Ctx {
            tape,
            vars,
            stats: Stats::Eval(&params.stats),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv {
    w: usize,
    b: Option<usize>,
    spec: ConvSpec,
    transpose: bool,
}

impl Conv {
    /// `transpose` selects an up-convolution with weight `[in, out, k, k]`.
    pub(crate) fn new<T: Element, R: Rng>(
        ps: &mut ParamSet<T>,
        name: &str,
        group: ParamGroup,
        cin: usize,
        cout: usize,
        spec: ConvSpec,
        transpose: bool,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let shape = if transpose {
            [cin, cout, spec.kernel, spec.kernel]
        } else {
            [cout, cin, spec.kernel, spec.kernel]
        };
        let w = ps.add(format!("{name}.weight"), init::normal(&shape, INIT_STD, rng), group);
        let b = bias.then(|| ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]), group));
        Conv { w, b, spec, transpose }
    }

    pub(crate) fn apply<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.vars[self.w], self.b.map(|i| ctx.vars[i]));
        Ok(if self.transpose {
            ctx.tape.conv_transpose2d(x, w, b, self.spec)?
        } else {
            ctx.tape.conv2d(x, w, b, self.spec)?
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BatchNorm {
    gamma: usize,
    beta: usize,
    stats: usize,
}

impl BatchNorm {
    pub(crate) fn new<T: Element>(ps: &mut ParamSet<T>, name: &str, group: ParamGroup, channels: usize) -> Self {
        let gamma = ps.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one()), group);
        let beta = ps.add(format!("{name}.beta"), Tensor::zeros(&[channels]), group);
        ps.bn_names.push(name.to_string());
        ps.stats.push(RunningStats::new(channels));
        BatchNorm {
            gamma,
            beta,
            stats: ps.stats.len() - 1,
        }
    }

    pub(crate) fn apply<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (g, b) = (ctx.vars[self.gamma], ctx.vars[self.beta]);
        let mode = match &mut ctx.stats {
            Stats::Train(s) => BatchNormMode::Train(&mut s[self.stats]),
            Stats::Eval(s) => BatchNormMode::Eval(&s[self.stats]),
        };
        Ok(ctx.tape.batch_norm2d(x, g, b, mode)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Activation {
    Relu,
    LeakyRelu,
}

/// Convolution, batch norm, activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Block {
    conv: Conv,
    bn: BatchNorm,
    act: Activation,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<T: Element, R: Rng>(
        ps: &mut ParamSet<T>,
        name: &str,
        group: ParamGroup,
        cin: usize,
        cout: usize,
        transpose: bool,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        // batch norm supplies the shift, so the convolution carries no bias
        let conv = Conv::new(
            ps,
            &format!("{name}.conv"),
            group,
            cin,
            cout,
            ConvSpec::default(),
            transpose,
            false,
            rng,
        );
        let bn = BatchNorm::new(ps, &format!("{name}.bn"), group, cout);
        Block { conv, bn, act }
    }

    pub(crate) fn apply<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.apply(ctx, x)?;
        let y = self.bn.apply(ctx, y)?;
        Ok(match self.act {
            Activation::Relu => ctx.tape.relu(y),
            Activation::LeakyRelu => ctx.tape.leaky_relu(y, T::from_f64(0.2)),
        })
    }
}
