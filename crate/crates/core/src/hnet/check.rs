use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::HNetConfig;
use super::model::HNetModel;
use crate::error::Result;
use crate::gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
use crate::tensor::Tensor;

/// Finite-difference check of a seeded 64-bit model on random `lr x lr`
/// inputs. Biases are offset so few activations sit exactly on a ReLU kink.
pub fn gradcheck_model(config: &HNetConfig, lr: usize, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut model = HNetModel::<f64>::new(config.clone(), opts.seed)?;
    let names: Vec<String> = model.params().into_iter().map(|p| p.0).collect();
    for (name, p) in names.iter().zip(model.params_mut()) {
        if name.ends_with("bias") {
            p.data_mut().fill(0.05);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC0FFEE);
    let mut rand = |s: [usize; 4]| Tensor::<f64>::from_fn(s, |_, _, _, _| rng.gen_range(0.0..1.0));
    let mut inputs = vec![rand([1, 3, lr, lr]), rand([1, config.g_lr_width(), lr, lr])];
    if config.uses_hr() {
        inputs.push(rand([1, config.g_hr_width(), lr * config.r, lr * config.r]));
    }
    if config.use_history {
        for _ in 0..config.history_frames {
            inputs.push(rand([1, config.frame_channels(), lr, lr]));
        }
    }
    gradcheck(&mut model, &inputs, opts)
}
