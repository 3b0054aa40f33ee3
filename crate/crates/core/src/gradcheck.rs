//! Central finite-difference verification of analytic gradients.
//!
//! A fragment is reduced to a scalar by contracting its output with a fixed,
//! seeded cotangent. Each probed entry is differenced at step `h`. A mismatch
//! is confirmed against a second difference at `h/2`; if the two estimates
//! disagree the probe straddles a ReLU kink, the step is shrunk tenfold and
//! after three attempts the probe is reported as skipped.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::{conv2d_backward, conv2d_forward, ConvLayer};
use crate::tensor::{Scalar, Tensor};

/// Gradients produced by a backward pass. `inputs[i]` is `None` for inputs
/// that are not differentiated (e.g. G-buffers).
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub inputs: Vec<Option<Tensor<T>>>,
    pub params: Vec<Tensor<T>>,
}

/// Anything with a forward map and its analytic adjoint.
pub trait Differentiable<T: Scalar> {
    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;
    fn forward(&self, inputs: &[Tensor<T>]) -> Result<Tensor<T>>;
    fn backward(&self, inputs: &[Tensor<T>], grad_out: &Tensor<T>) -> Result<Gradients<T>>;
}

impl<T: Scalar> Differentiable<T> for ConvLayer<T> {
    fn param_names(&self) -> Vec<String> {
        ConvLayer::params(self).iter().map(|(n, _)| n.to_string()).collect()
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        ConvLayer::params(self).into_iter().map(|(_, t)| t).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        ConvLayer::params_mut(self).into_iter().map(|(_, t)| t).collect()
    }

    fn forward(&self, inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
        conv2d_forward(&inputs[0], self)
    }

    fn backward(&self, inputs: &[Tensor<T>], grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        let (input, params) = conv2d_backward(&inputs[0], self, grad_out)?.into_param_grads();
        Ok(Gradients {
            inputs: vec![Some(input)],
            params,
        })
    }
}

type ForwardFn<T> = Box<dyn Fn(&[Tensor<T>]) -> Result<Tensor<T>>>;
type BackwardFn<T> = Box<dyn Fn(&[Tensor<T>], &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>>>;

/// Parameter-free fragment built from a forward and a backward closure.
pub struct FnFragment<T> {
    forward: ForwardFn<T>,
    backward: BackwardFn<T>,
}

impl<T: Scalar> FnFragment<T> {
    pub fn new(
        forward: impl Fn(&[Tensor<T>]) -> Result<Tensor<T>> + 'static,
        backward: impl Fn(&[Tensor<T>], &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> + 'static,
    ) -> Self {
        FnFragment {
            forward: Box::new(forward),
            backward: Box::new(backward),
        }
    }
}

impl<T: Scalar> Differentiable<T> for FnFragment<T> {
    fn param_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }

    fn forward(&self, inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
        (self.forward)(inputs)
    }

    fn backward(&self, inputs: &[Tensor<T>], grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        Ok(Gradients {
            inputs: (self.backward)(inputs, grad_out)?,
            params: Vec::new(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor for the relative error of tiny gradients.
    pub floor: f64,
    /// Probe at most this many entries per block (all when `None`).
    pub max_probes: Option<usize>,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-4,
            tolerance: 1e-5,
            floor: 1e-6,
            max_probes: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl BlockReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance && self.skipped * 10 <= self.checked + self.skipped
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed(self.tolerance))
    }

    pub fn failing(&self) -> Vec<&BlockReport> {
        self.blocks.iter().filter(|b| !b.passed(self.tolerance)).collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn block(&self, name: &str) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<40} {:>8} {:>8} {:>12}  status",
            "block", "checked", "skipped", "max_rel_err"
        )?;
        for b in &self.blocks {
            let status = if b.passed(self.tolerance) { "ok" } else { "FAIL" };
            write!(
                f,
                "{:<40} {:>8} {:>8} {:>12.3e}  {status}",
                b.name, b.checked, b.skipped, b.max_rel_error
            )?;
            if !b.passed(self.tolerance) {
                write!(
                    f,
                    " (index {}: analytic {:.6e}, numeric {:.6e})",
                    b.worst_index, b.worst_analytic, b.worst_numeric
                )?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "tolerance {:.1e}: {}",
            self.tolerance,
            if self.passed() { "all blocks pass" } else { "FAILED" }
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

enum Target {
    Input(usize),
    Param(usize),
}

/// Check every parameter block and every differentiable input of `fragment`.
pub fn gradcheck<T: Scalar, D: Differentiable<T>>(
    fragment: &mut D,
    inputs: &[Tensor<T>],
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let out = fragment.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cot = Tensor::from_fn(out.shape(), |_, _, _, _| T::lit(rng.gen_range(-1.0..1.0)));
    let grads = fragment.backward(inputs, &cot)?;

    let mut inputs = inputs.to_vec();
    let mut blocks = Vec::new();
    let names = fragment.param_names();

    let mut targets: Vec<(String, Target, Tensor<T>)> = Vec::new();
    for (i, g) in grads.inputs.into_iter().enumerate() {
        if let Some(g) = g {
            targets.push((format!("input[{i}]"), Target::Input(i), g));
        }
    }
    for (i, g) in grads.params.into_iter().enumerate() {
        let name = names.get(i).cloned().unwrap_or_else(|| format!("param[{i}]"));
        targets.push((name, Target::Param(i), g));
    }

    for (name, target, analytic) in targets {
        let len = analytic.data().len();
        let indices: Vec<usize> = match opts.max_probes {
            Some(k) if k < len => {
                let mut v = sample(&mut rng, len, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        let mut report = BlockReport {
            name,
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for idx in indices {
            let a = analytic.data()[idx].as_f64();
            let numeric = probe(fragment, &mut inputs, &target, idx, a, &cot, opts)?;
            match numeric {
                None => report.skipped += 1,
                Some(n) => {
                    report.checked += 1;
                    let e = relative_error(a, n, opts.floor);
                    if report.checked == 1 || e > report.max_rel_error {
                        report.max_rel_error = e;
                        report.worst_index = idx;
                        report.worst_analytic = a;
                        report.worst_numeric = n;
                    }
                }
            }
        }
        blocks.push(report);
    }
    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        blocks,
    })
}

fn objective<T: Scalar, D: Differentiable<T>>(fragment: &D, inputs: &[Tensor<T>], cot: &Tensor<T>) -> Result<f64> {
    let out = fragment.forward(inputs)?;
    Ok(out
        .data()
        .iter()
        .zip(cot.data())
        .map(|(&o, &c)| o.as_f64() * c.as_f64())
        .sum())
}

fn central<T: Scalar, D: Differentiable<T>>(
    fragment: &mut D,
    inputs: &mut [Tensor<T>],
    target: &Target,
    idx: usize,
    h: f64,
    cot: &Tensor<T>,
) -> Result<f64> {
    let original = read(fragment, inputs, target, idx);
    write(fragment, inputs, target, idx, original + T::lit(h));
    let plus = objective(fragment, inputs, cot);
    write(fragment, inputs, target, idx, original - T::lit(h));
    let minus = objective(fragment, inputs, cot);
    write(fragment, inputs, target, idx, original);
    Ok((plus? - minus?) / (2.0 * h))
}

fn probe<T: Scalar, D: Differentiable<T>>(
    fragment: &mut D,
    inputs: &mut [Tensor<T>],
    target: &Target,
    idx: usize,
    analytic: f64,
    cot: &Tensor<T>,
    opts: &GradcheckOptions,
) -> Result<Option<f64>> {
    let mut h = opts.step;
    for _ in 0..3 {
        let coarse = central(fragment, inputs, target, idx, h, cot)?;
        if relative_error(analytic, coarse, opts.floor) <= opts.tolerance {
            return Ok(Some(coarse));
        }
        let fine = central(fragment, inputs, target, idx, h * 0.5, cot)?;
        if relative_error(coarse, fine, opts.floor) <= opts.tolerance {
            return Ok(Some(fine));
        }
        h *= 0.1;
    }
    Ok(None)
}

fn read<T: Scalar, D: Differentiable<T>>(fragment: &D, inputs: &[Tensor<T>], target: &Target, idx: usize) -> T {
    match *target {
        Target::Input(i) => inputs[i].data()[idx],
        Target::Param(p) => fragment.params()[p].data()[idx],
    }
}

fn write<T: Scalar, D: Differentiable<T>>(
    fragment: &mut D,
    inputs: &mut [Tensor<T>],
    target: &Target,
    idx: usize,
    v: T,
) {
    match *target {
        Target::Input(i) => inputs[i].data_mut()[idx] = v,
        Target::Param(p) => fragment.params_mut()[p].data_mut()[idx] = v,
    }
}
