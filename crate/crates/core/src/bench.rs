//! Per-stage inference timing at a fixed HR output size.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{FuseError, Result};
use crate::hnet::{HNetConfig, HNetInput, HNetModel, StageMacs, Variant};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub encoder_ms: f64,
    pub fusion_ms: f64,
    pub head_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub name: String,
    pub r: usize,
    pub variant: Variant,
    pub hr_width: usize,
    pub hr_height: usize,
    pub runs: usize,
    /// Per-stage medians.
    pub median: StageTimes,
    /// Interquartile range of the total divided by its median.
    pub total_rel_iqr: f64,
    pub macs: StageMacs,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchRatios {
    /// Full over lite median total at r = 4.
    pub lite_speedup_r4: Option<f64>,
    /// Full r = 4 over full r = 8 median total.
    pub full_r8_speedup: Option<f64>,
    /// Fusion-stage MACs at r = 8 over r = 4.
    pub fusion_mac_ratio_r8_r4: Option<f64>,
    /// Fusion-stage median time at r = 8 over r = 4.
    pub fusion_time_ratio_r8_r4: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    pub ratios: BenchRatios,
}

/// Random inputs matching `config` at the given HR size.
pub fn random_input(config: &HNetConfig, hr_w: usize, hr_h: usize, seed: u64) -> Result<HNetInput<f32>> {
    let r = config.r;
    if r == 0 || hr_w % r != 0 || hr_h % r != 0 {
        return Err(FuseError::Alignment {
            op: "bench",
            shape: Shape::new(1, 3, hr_h, hr_w),
            factor: r,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(0.0f32, 1.0);
    let mut rand = |c: usize, h: usize, w: usize| {
        let s = Shape::new(1, c, h, w);
        Tensor::from_vec(s, (0..s.numel()).map(|_| dist.sample(&mut rng)).collect()).expect("sized")
    };
    let (h, w) = (hr_h / r, hr_w / r);
    let ld_lr = rand(3, h, w);
    let g_lr = rand(config.g_lr_width(), h, w);
    let g_hr = config.uses_hr().then(|| rand(config.g_hr_width(), hr_h, hr_w));
    let history = (0..if config.use_history { config.history_frames } else { 0 })
        .map(|_| rand(config.frame_channels(), h, w))
        .collect();
    Ok(HNetInput {
        ld_lr,
        g_lr,
        g_hr,
        history,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Time `runs` forward passes after `warmup` untimed ones.
pub fn bench_model(
    name: &str,
    model: &HNetModel<f32>,
    hr_w: usize,
    hr_h: usize,
    warmup: usize,
    runs: usize,
) -> Result<BenchResult> {
    if runs == 0 {
        return Err(FuseError::Config("bench needs at least one timed run".into()));
    }
    let config = model.config();
    let input = random_input(config, hr_w, hr_h, 0)?;
    let mut enc = Vec::with_capacity(runs);
    let mut fus = Vec::with_capacity(runs);
    let mut head = Vec::with_capacity(runs);
    let mut total = Vec::with_capacity(runs);
    for i in 0..warmup + runs {
        let t0 = Instant::now();
        let (_, outs) = model.encoder_forward(&input)?;
        let t1 = Instant::now();
        let (_, adapter, blocks) = model.fusion_forward(outs.last().expect("encoder output"), input.g_hr.as_ref())?;
        let t2 = Instant::now();
        let f_f = blocks.last().map(|b| &b.1).unwrap_or(&adapter);
        let (_, out) = model.head_forward(&outs[0], f_f)?;
        let t3 = Instant::now();
        std::hint::black_box(&out);
        if i >= warmup {
            let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
            enc.push(ms(t0, t1));
            fus.push(ms(t1, t2));
            head.push(ms(t2, t3));
            total.push(ms(t0, t3));
        }
    }
    let med_total = median(&mut total);
    let iqr = quantile(&total, 0.75) - quantile(&total, 0.25);
    Ok(BenchResult {
        name: name.to_string(),
        r: config.r,
        variant: config.variant,
        hr_width: hr_w,
        hr_height: hr_h,
        runs,
        median: StageTimes {
            encoder_ms: median(&mut enc),
            fusion_ms: median(&mut fus),
            head_ms: median(&mut head),
            total_ms: med_total,
        },
        total_rel_iqr: iqr / med_total,
        macs: model.stage_macs(hr_h, hr_w),
    })
}

impl BenchReport {
    fn find(&self, variant: Variant, r: usize) -> Option<&BenchResult> {
        self.results.iter().find(|b| b.variant == variant && b.r == r)
    }

    /// Fill in the comparison ratios from whichever results are present.
    pub fn compute_ratios(&mut self) {
        let full4 = self.find(Variant::Full, 4);
        let full8 = self.find(Variant::Full, 8);
        let lite4 = self.find(Variant::Lite, 4);
        self.ratios = BenchRatios {
            lite_speedup_r4: full4.zip(lite4).map(|(f, l)| f.median.total_ms / l.median.total_ms),
            full_r8_speedup: full4.zip(full8).map(|(a, b)| a.median.total_ms / b.median.total_ms),
            fusion_mac_ratio_r8_r4: full4.zip(full8).map(|(a, b)| b.macs.fusion() as f64 / a.macs.fusion() as f64),
            fusion_time_ratio_r8_r4: full4.zip(full8).map(|(a, b)| b.median.fusion_ms / a.median.fusion_ms),
        };
    }
}

/// Bench the full model at r = 4 and 8 and the lite model at r = 4.
pub fn bench_standard(hr_w: usize, hr_h: usize, warmup: usize, runs: usize, seed: u64) -> Result<BenchReport> {
    let cases = [
        ("full-r4", HNetConfig::full(4)),
        ("full-r8", HNetConfig::full(8)),
        ("lite-r4", HNetConfig::lite(4)),
    ];
    let mut report = BenchReport::default();
    for (name, cfg) in cases {
        let model = HNetModel::<f32>::new(cfg, seed)?;
        let res = bench_model(name, &model, hr_w, hr_h, warmup, runs)?;
        log::info!("{name}: median {:.2} ms", res.median.total_ms);
        report.results.push(res);
    }
    report.compute_ratios();
    Ok(report)
}
