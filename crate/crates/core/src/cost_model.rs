//! Analytic latency models for generation, training and weight transfer.
//!
//! Decode cost is driven by [`PtlProfile`], the per-token (per decode step)
//! latency as a function of batch size. It is flat-ish while the instance is
//! memory-bandwidth bound and turns steeply linear once compute bound.

use crate::error::{param, Result, SimError};
use crate::scheduler::{self, ScoreRule};
use crate::workload::{summarize, Workload};

/// GPUs per machine; hardware cost is quoted per machine.
pub const GPUS_PER_MACHINE: u32 = 8;

const GB: f64 = 1e9;

/// Two-segment continuous piecewise-linear decode-step latency (ms).
///
/// `ptl(b) = t0 + k0*b` for `b < b_star`, `t1 + k1*b` otherwise, with `t1`
/// derived so both segments meet at `b_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtlProfile {
    t0: f64,
    k0: f64,
    b_star: f64,
    k1: f64,
    t1: f64,
}

impl PtlProfile {
    pub fn new(t0: f64, k0: f64, b_star: f64, k1: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(param(format!("t0 must be > 0, got {t0}")));
        }
        if !(k0 > 0.0 && k0 < k1 && k1.is_finite()) {
            return Err(param(format!("need 0 < k0 < k1, got k0={k0}, k1={k1}")));
        }
        if !(b_star >= 1.0 && b_star.is_finite()) {
            return Err(param(format!("b_star must be >= 1, got {b_star}")));
        }
        Ok(Self {
            t0,
            k0,
            b_star,
            k1,
            t1: t0 + (k0 - k1) * b_star,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn k0(&self) -> f64 {
        self.k0
    }
    pub fn b_star(&self) -> f64 {
        self.b_star
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// Step latency at batch size `bs` (treated as at least 1).
    #[inline]
    pub fn at(&self, bs: u32) -> f64 {
        let b = f64::from(bs.max(1));
        if b < self.b_star {
            self.t0 + self.k0 * b
        } else {
            // anchored at the breakpoint so both segments agree there exactly
            self.t0 + self.k0 * self.b_star + self.k1 * (b - self.b_star)
        }
    }

    /// Profile of a TP group of `tp` GPUs. Effective memory bandwidth grows by
    /// `tp * (1 - overhead)`, shrinking the memory-bound intercept and slope.
    pub fn with_tp(&self, tp: u32, overhead: f64) -> Result<Self> {
        if tp == 0 {
            return Err(param("tp size must be >= 1"));
        }
        if !(0.0..1.0).contains(&overhead) {
            return Err(param(format!("tp overhead must be in [0, 1), got {overhead}")));
        }
        if tp == 1 {
            return Ok(*self);
        }
        let speedup = f64::from(tp) * (1.0 - overhead);
        if speedup <= 1.0 {
            return Ok(*self);
        }
        Self::new(self.t0 / speedup, self.k0 / speedup, self.b_star, self.k1)
    }

    /// Re-targets a profile measured on `reference` to `target` hardware:
    /// the memory-bound line scales with HBM bandwidth, the compute-bound line
    /// with BF16 throughput, and the breakpoint moves to where they cross.
    pub fn for_hardware(&self, reference: &HardwareSpec, target: &HardwareSpec) -> Result<Self> {
        let mem = reference.hbm_bandwidth / target.hbm_bandwidth;
        let comp = reference.bf16_tflops / target.bf16_tflops;
        let (t0, k0) = (self.t0 * mem, self.k0 * mem);
        let (t1, k1) = (self.t1 * comp, self.k1 * comp);
        if k1 <= k0 {
            return Err(param(format!(
                "hardware {} leaves no compute-bound regime (k0={k0}, k1={k1})",
                target.name
            )));
        }
        let b_star = ((t0 - t1) / (k1 - k0)).max(1.0);
        Self::new(t0, k0, b_star, k1)
    }
}

impl PtlProfile {
    /// Re-targets a profile measured with `reference` to `target`: the
    /// memory-bound intercept scales with weight bytes, its slope with KV bytes
    /// per token, and the compute-bound line with parameter count.
    pub fn for_model(&self, reference: &ModelShape, target: &ModelShape) -> Result<Self> {
        let w = target.weight_bytes() / reference.weight_bytes();
        let kv = target.kv_bytes_per_sample(1) as f64 / reference.kv_bytes_per_sample(1) as f64;
        let p = target.params / reference.params;
        let (t0, k0) = (self.t0 * w, self.k0 * kv);
        let (t1, k1) = (self.t1 * p, self.k1 * p);
        if k1 <= k0 {
            return Err(param(format!(
                "model {} leaves no compute-bound regime (k0={k0}, k1={k1})",
                target.name
            )));
        }
        let b_star = ((t0 - t1) / (k1 - k0)).max(1.0);
        Self::new(t0, k0, b_star, k1)
    }
}

impl Default for PtlProfile {
    /// Decode profile of a mid-size model on one H800-class GPU.
    fn default() -> Self {
        Self::new(10.0, 0.1, 64.0, 0.3).expect("valid default profile")
    }
}

/// Per-token latency at batch size `bs`.
pub fn ptl(profile: &PtlProfile, bs: u32) -> Result<f64> {
    if bs < 1 {
        return Err(param("batch size must be >= 1"));
    }
    Ok(profile.at(bs))
}

/// Latency of one sample of `len` tokens decoded at batch size `bs`.
pub fn sample_latency(profile: &PtlProfile, bs: u32, len: u32) -> Result<f64> {
    if len < 1 {
        return Err(param("output length must be >= 1"));
    }
    Ok(ptl(profile, bs)? * f64::from(len))
}

/// `ptl(bs) * l_avg * ceil(m / bs)`: one instance processing `m` samples in
/// rounds of `bs`.
pub fn instance_generation_latency(profile: &PtlProfile, bs: u32, l_avg: f64, m: u32) -> Result<f64> {
    if m < 1 {
        return Err(param("sample count must be >= 1"));
    }
    let rounds = m.div_ceil(bs.max(1));
    Ok(ptl(profile, bs)? * (l_avg * f64::from(rounds)))
}

/// Per-GPU hardware characteristics.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareSpec {
    pub name: String,
    pub bf16_tflops: f64,
    /// TB/s
    pub hbm_bandwidth: f64,
    /// GB
    pub hbm_capacity: f64,
    /// Relative cost of one machine.
    pub cost_per_machine: f64,
}

impl HardwareSpec {
    pub fn h20() -> Self {
        Self {
            name: "H20".into(),
            bf16_tflops: 148.0,
            hbm_bandwidth: 4.0,
            hbm_capacity: 96.0,
            cost_per_machine: 1.0,
        }
    }

    pub fn h800() -> Self {
        Self {
            name: "H800".into(),
            bf16_tflops: 989.5,
            hbm_bandwidth: 3.35,
            hbm_capacity: 80.0,
            cost_per_machine: 2.85,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("bf16_tflops", self.bf16_tflops),
            ("hbm_bandwidth", self.hbm_bandwidth),
            ("hbm_capacity", self.hbm_capacity),
            ("cost_per_machine", self.cost_per_machine),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(format!("{}: {k} must be > 0", self.name)));
            }
        }
        Ok(())
    }

    /// Relative cost of `gpus` GPUs, rounded up to whole machines.
    pub fn cost_of(&self, gpus: u32) -> f64 {
        f64::from(gpus.div_ceil(GPUS_PER_MACHINE)) * self.cost_per_machine
    }
}

/// Transformer dimensions relevant to memory sizing.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub name: String,
    pub params: f64,
    pub layers: u32,
    pub kv_heads: u32,
    pub head_dim: u32,
    pub bytes_per_element: u32,
}

impl ModelShape {
    pub fn qwen2_5_7b() -> Self {
        Self {
            name: "Qwen2.5-7B".into(),
            params: 7.6e9,
            layers: 28,
            kv_heads: 8,
            head_dim: 128,
            bytes_per_element: 2,
        }
    }

    pub fn qwen2_5_72b() -> Self {
        Self {
            name: "Qwen2.5-72B".into(),
            params: 72.7e9,
            layers: 80,
            kv_heads: 8,
            head_dim: 128,
            bytes_per_element: 2,
        }
    }

    pub fn weight_bytes(&self) -> f64 {
        self.params * f64::from(self.bytes_per_element)
    }

    /// KV-cache bytes held by one sample of `len` tokens.
    pub fn kv_bytes_per_sample(&self, len: u64) -> u64 {
        2 * u64::from(self.layers)
            * u64::from(self.kv_heads)
            * u64::from(self.head_dim)
            * u64::from(self.bytes_per_element)
            * len
    }
}

/// Largest batch whose KV cache fits in `kv_budget_bytes` at `l_avg` tokens per sample.
pub fn max_batch_size_for_budget(kv_budget_bytes: f64, model: &ModelShape, l_avg: u64) -> Result<u32> {
    if l_avg < 1 {
        return Err(param("average length must be >= 1"));
    }
    if !(kv_budget_bytes > 0.0) {
        return Err(SimError::Capacity(format!(
            "{} leaves no room for KV cache",
            model.name
        )));
    }
    let per = model.kv_bytes_per_sample(l_avg) as f64;
    Ok(((kv_budget_bytes / per).floor() as u32).max(1))
}

/// Maximum batch size of one generation instance spanning `tp` GPUs.
///
/// KV budget = `hbm_capacity * tp - weights - reserve_frac * hbm_capacity * tp`.
pub fn max_batch_size(hw: &HardwareSpec, model: &ModelShape, tp: u32, l_avg: u64, reserve_frac: f64) -> Result<u32> {
    let capacity = hw.hbm_capacity * GB * f64::from(tp.max(1));
    let budget = capacity * (1.0 - reserve_frac) - model.weight_bytes();
    max_batch_size_for_budget(budget, model, l_avg)
}

/// Linear training-time model with a GPU-scaling cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainCostModel {
    /// ms * GPU per token
    pub a: f64,
    /// ms per training step
    pub c: f64,
    pub max_useful_gpus: u32,
}

impl TrainCostModel {
    pub fn new(a: f64, c: f64, max_useful_gpus: u32) -> Result<Self> {
        if !(a > 0.0) || !(c >= 0.0) || max_useful_gpus == 0 {
            return Err(param(format!(
                "train model needs a > 0, c >= 0, cap >= 1 (a={a}, c={c}, cap={max_useful_gpus})"
            )));
        }
        Ok(Self { a, c, max_useful_gpus })
    }

    /// Derives `a` from model size and hardware throughput:
    /// `flops_per_param_token * params / (tflops * mfu)`.
    pub fn from_hardware(
        model: &ModelShape,
        hw: &HardwareSpec,
        flops_per_param_token: f64,
        mfu: f64,
        c: f64,
        max_useful_gpus: u32,
    ) -> Result<Self> {
        if !(mfu > 0.0 && mfu <= 1.0) {
            return Err(param(format!("mfu must be in (0, 1], got {mfu}")));
        }
        let flops = flops_per_param_token * model.params;
        let a = flops / (hw.bf16_tflops * 1e12 * mfu) * 1e3;
        Self::new(a, c, max_useful_gpus)
    }

    /// Per-token cost (ms) on `gpus` GPUs, without the fixed step overhead.
    pub fn ms_per_token(&self, gpus: u32) -> f64 {
        self.a / f64::from(gpus.clamp(1, self.max_useful_gpus))
    }
}

/// `a * tokens / min(gpus, cap) + c`
pub fn training_time(tm: &TrainCostModel, total_tokens: u64, gpus: u32) -> Result<f64> {
    if gpus < 1 {
        return Err(param("training needs at least one GPU"));
    }
    Ok(tm.ms_per_token(gpus) * total_tokens as f64 + tm.c)
}

/// Point-to-point link used for weight synchronization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub bandwidth_gbps: f64,
    pub bytes_per_param: u32,
}

impl LinkSpec {
    pub fn new(bandwidth_gbps: f64, bytes_per_param: u32) -> Result<Self> {
        if !(bandwidth_gbps > 0.0) || !bandwidth_gbps.is_finite() {
            return Err(param(format!("link bandwidth must be > 0, got {bandwidth_gbps}")));
        }
        if ![1, 2, 4].contains(&bytes_per_param) {
            return Err(param(format!(
                "bytes_per_param must be 1, 2 or 4, got {bytes_per_param}"
            )));
        }
        Ok(Self {
            bandwidth_gbps,
            bytes_per_param,
        })
    }
}

/// Seconds to push `param_count` parameters over `link`.
pub fn weight_transfer_time(param_count: f64, link: &LinkSpec) -> Result<f64> {
    if !(param_count >= 1.0) {
        return Err(param("param_count must be >= 1"));
    }
    if !(link.bandwidth_gbps > 0.0) {
        return Err(param("link bandwidth must be > 0"));
    }
    Ok(param_count * f64::from(link.bytes_per_param) * 8.0 / (link.bandwidth_gbps * 1e9))
}

/// Least-squares fit of a continuous two-segment profile to
/// `(batch_size, ms_per_token)` measurements. The breakpoint is scanned over
/// the observed batch sizes.
pub fn fit_profile(points: &[(u32, f64)]) -> Result<PtlProfile> {
    if points.len() < 4 {
        return Err(SimError::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|&(b, y)| b == 0 || !y.is_finite()) {
        return Err(SimError::Fit("batch sizes must be >= 1 and latencies finite".into()));
    }
    let mut sizes: Vec<u32> = points.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(SimError::Fit(format!(
            "need at least 3 distinct batch sizes, got {}",
            sizes.len()
        )));
    }

    let mut best: Option<(f64, PtlProfile)> = None;
    // at least two distinct sizes at or below the breakpoint, one above
    for &c in &sizes[1..sizes.len() - 1] {
        let cf = f64::from(c);
        let mut ata = [[0.0f64; 3]; 3];
        let mut aty = [0.0f64; 3];
        for &(b, y) in points {
            let b = f64::from(b);
            let row = [1.0, b.min(cf), (b - cf).max(0.0)];
            for i in 0..3 {
                for j in 0..3 {
                    ata[i][j] += row[i] * row[j];
                }
                aty[i] += row[i] * y;
            }
        }
        let Some([t0, k0, k1]) = solve3(ata, aty) else {
            continue;
        };
        let Ok(profile) = PtlProfile::new(t0, k0, cf, k1) else {
            continue;
        };
        let sse: f64 = points.iter().map(|&(b, y)| (profile.at(b) - y).powi(2)).sum();
        if best.as_ref().is_none_or(|(s, _)| sse < *s) {
            best = Some((sse, profile));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| SimError::Fit("no breakpoint yields 0 < k0 < k1 and t0 > 0".into()))
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (v, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Parses `batch_size,ms_per_token` CSV (header and `#` lines skipped).
pub fn parse_profile_csv(text: &str) -> Result<Vec<(u32, f64)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("batch_size") {
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let (Some(b), Some(y), None) = (it.next(), it.next(), it.next()) else {
            return Err(SimError::Fit(format!(
                "line {}: expected batch_size,ms_per_token",
                i + 1
            )));
        };
        let b = b.parse().map_err(|e| SimError::Fit(format!("line {}: {e}", i + 1)))?;
        let y = y.parse().map_err(|e| SimError::Fit(format!("line {}: {e}", i + 1)))?;
        out.push((b, y));
    }
    Ok(out)
}

/// Dispatch policy used when estimating generation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchPolicy {
    Random,
    SkewnessAware,
}

/// Everything needed to turn a workload and a GPU count into a generation time.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSetup {
    /// Single-GPU profile on `hw`.
    pub profile: PtlProfile,
    pub hw: HardwareSpec,
    pub model: ModelShape,
    pub tp_overhead: f64,
    pub activation_reserve: f64,
    pub alpha: f64,
    pub scoring: ScoreRule,
    pub seed: u64,
    /// Overrides the memory-derived batch cap.
    pub max_bs_override: Option<u32>,
    pub prefill_ms_per_prompt_token: f64,
}

impl GenerationSetup {
    pub fn new(profile: PtlProfile, hw: HardwareSpec, model: ModelShape) -> Self {
        Self {
            profile,
            hw,
            model,
            tp_overhead: 0.15,
            activation_reserve: 0.10,
            alpha: 0.2,
            scoring: ScoreRule::Max,
            seed: 0,
            max_bs_override: None,
            prefill_ms_per_prompt_token: 0.0,
        }
    }

    /// Profile and batch cap of one instance with `tp` GPUs serving `w`.
    pub fn instance(&self, tp: u32, w: &Workload) -> Result<(PtlProfile, u32)> {
        let profile = self.profile.with_tp(tp, self.tp_overhead)?;
        let max_bs = match self.max_bs_override {
            Some(b) => b.max(1),
            None => {
                let l_avg = summarize(w)?.mean.ceil() as u64;
                max_batch_size(&self.hw, &self.model, tp, l_avg.max(1), self.activation_reserve)?
            }
        };
        Ok((profile, max_bs))
    }
}

/// Simulated generation makespan (ms) of `w` on `gen_gpus` GPUs split into
/// TP groups of `tp_size`.
pub fn generation_time_estimate(
    setup: &GenerationSetup,
    gen_gpus: u32,
    tp_size: u32,
    w: &Workload,
    policy: DispatchPolicy,
) -> Result<f64> {
    if tp_size == 0 || gen_gpus < tp_size || !gen_gpus.is_multiple_of(tp_size) {
        return Err(param(format!(
            "{gen_gpus} GPUs cannot be split into TP groups of {tp_size}"
        )));
    }
    let dp = (gen_gpus / tp_size) as usize;
    if w.is_empty() {
        return Ok(0.0);
    }
    let (profile, max_bs) = setup.instance(tp_size, w)?;
    let timelines = scheduler::generate(
        w,
        dp,
        policy,
        setup.alpha,
        setup.scoring,
        &profile,
        max_bs,
        setup.seed,
        setup.prefill_ms_per_prompt_token,
    )?;
    Ok(timelines.iter().map(|t| t.makespan).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> PtlProfile {
        PtlProfile::new(20.0, 0.05, 128.0, 0.4).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn ptl_evaluation() {
        let p = example();
        assert!(close(ptl(&p, 1).unwrap(), 20.05));
        assert!(close(p.t1(), -24.8));
        let left = p.t0() + p.k0() * 128.0;
        assert!(close(left, 26.4));
        assert!(close(ptl(&p, 128).unwrap(), 26.4));
        assert!(close(ptl(&p, 200).unwrap(), 55.2));
        assert!(ptl(&p, 0).is_err());
    }

    #[test]
    fn profile_invariants_enforced() {
        assert!(PtlProfile::new(0.0, 0.1, 10.0, 1.0).is_err());
        assert!(PtlProfile::new(1.0, 0.5, 10.0, 0.5).is_err());
        assert!(PtlProfile::new(1.0, 0.0, 10.0, 0.5).is_err());
        assert!(PtlProfile::new(1.0, 0.1, 0.5, 0.5).is_err());
    }

    #[test]
    fn sample_and_instance_latency_formulas() {
        // constant-looking profile: ptl(b) = 50 for the sizes used below
        let p = PtlProfile::new(49.9, 0.1, 1000.0, 1.0).unwrap();
        assert!(close(sample_latency(&p, 1, 100).unwrap(), 5000.0));
        assert!(sample_latency(&p, 1, 0).is_err());
        let a = sample_latency(&p, 4, 300).unwrap();
        let b = sample_latency(&p, 4, 600).unwrap();
        assert!(close(2.0 * a, b));

        let q = PtlProfile::new(37.2, 0.1, 1000.0, 1.0).unwrap(); // ptl(128) = 50
        assert!(close(
            instance_generation_latency(&q, 128, 1000.0, 300).unwrap(),
            150_000.0
        ));
        assert!(close(
            instance_generation_latency(&q, 128, 1000.0, 128).unwrap(),
            q.at(128) * 1000.0
        ));
        assert!(instance_generation_latency(&q, 128, 1000.0, 0).is_err());
    }

    #[test]
    fn kv_sizing() {
        let m = ModelShape::qwen2_5_7b();
        let per = m.kv_bytes_per_sample(8192);
        assert_eq!(per, 939_524_096);
        assert_eq!(max_batch_size_for_budget(60e9, &m, 8192).unwrap(), 63);
        assert_eq!(max_batch_size_for_budget(60e9, &m, 16384).unwrap(), 31);
        assert!(matches!(
            max_batch_size_for_budget(-1.0, &m, 10),
            Err(SimError::Capacity(_))
        ));
        // 72B weights do not fit on one 80 GB GPU
        let big = ModelShape::qwen2_5_72b();
        assert!(matches!(
            max_batch_size(&HardwareSpec::h800(), &big, 1, 1000, 0.1),
            Err(SimError::Capacity(_))
        ));
        assert!(max_batch_size(&HardwareSpec::h800(), &big, 4, 1000, 0.1).unwrap() > 1);
    }

    #[test]
    fn training_model() {
        let tm = TrainCostModel::new(1.0, 0.0, 64).unwrap();
        assert!(close(training_time(&tm, 1_000_000, 8).unwrap(), 125_000.0));
        let capped = TrainCostModel::new(1.0, 0.0, 8).unwrap();
        assert_eq!(
            training_time(&capped, 1000, 8).unwrap(),
            training_time(&capped, 1000, 32).unwrap()
        );
        assert!(close(
            2.0 * training_time(&tm, 500, 4).unwrap(),
            training_time(&tm, 1000, 4).unwrap()
        ));
        assert!(training_time(&tm, 1000, 0).is_err());
    }

    #[test]
    fn weight_transfer() {
        let l1 = LinkSpec::new(80.0, 1).unwrap();
        assert!(close(weight_transfer_time(72e9, &l1).unwrap(), 7.2));
        let l2 = LinkSpec::new(80.0, 2).unwrap();
        assert!(close(weight_transfer_time(72e9, &l2).unwrap(), 14.4));
        assert!(LinkSpec::new(0.0, 2).is_err());
        assert!(LinkSpec::new(10.0, 3).is_err());
        let zero = LinkSpec {
            bandwidth_gbps: 0.0,
            bytes_per_param: 1,
        };
        assert!(weight_transfer_time(1e9, &zero).is_err());
    }

    #[test]
    fn tp_scaling_lowers_memory_bound_terms() {
        let p = PtlProfile::default();
        let p4 = p.with_tp(4, 0.15).unwrap();
        assert!(close(p4.t0(), p.t0() / 3.4));
        assert!(close(p4.k0(), p.k0() / 3.4));
        assert_eq!(p4.k1(), p.k1());
        assert_eq!(p.with_tp(1, 0.15).unwrap(), p);
        assert!(p.with_tp(0, 0.15).is_err());
    }

    #[test]
    fn retargeting_hardware() {
        let p = PtlProfile::default();
        let same = p.for_hardware(&HardwareSpec::h800(), &HardwareSpec::h800()).unwrap();
        assert!(close(same.b_star(), p.b_star()));
        let h20 = p.for_hardware(&HardwareSpec::h800(), &HardwareSpec::h20()).unwrap();
        assert!(h20.t0() < p.t0());
        assert!(h20.k1() > p.k1());
        assert!(h20.b_star() < p.b_star());
    }

    #[test]
    fn retargeting_model() {
        let p = PtlProfile::default();
        let small = ModelShape::qwen2_5_7b();
        let same = p.for_model(&small, &small).unwrap();
        assert!(close(same.b_star(), p.b_star()));
        assert!(close(same.t0(), p.t0()));
        let big = p.for_model(&small, &ModelShape::qwen2_5_72b()).unwrap();
        let r = 72.7 / 7.6;
        assert!(close(big.t0(), 10.0 * r));
        assert!(close(big.k0(), 0.1 * 80.0 / 28.0));
        assert!(close(big.k1(), 0.3 * r));
        // both lines still meet at the new breakpoint
        let b = big.b_star();
        assert!(close(big.t0() + big.k0() * b, big.t1() + big.k1() * b));
    }

    #[test]
    fn fit_recovers_exact_profile() {
        let truth = PtlProfile::new(12.0, 0.07, 96.0, 0.35).unwrap();
        // grid contains the true breakpoint
        let pts: Vec<(u32, f64)> = (0..=32).map(|i| (8 * i).max(1)).map(|b| (b, truth.at(b))).collect();
        let fit = fit_profile(&pts).unwrap();
        for (a, b) in [
            (fit.t0(), truth.t0()),
            (fit.k0(), truth.k0()),
            (fit.b_star(), truth.b_star()),
            (fit.k1(), truth.k1()),
        ] {
            assert!((a - b).abs() <= 1e-6 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_profile(&[(1, 1.0), (2, 2.0), (3, 3.0)]),
            Err(SimError::Fit(_))
        ));
        assert!(matches!(
            fit_profile(&[(4, 1.0), (4, 2.0), (4, 3.0), (4, 4.0)]),
            Err(SimError::Fit(_))
        ));
    }

    #[test]
    fn profile_csv() {
        let pts = parse_profile_csv("batch_size,ms_per_token\n1,10.5\n# x\n2, 10.6\n").unwrap();
        assert_eq!(pts, vec![(1, 10.5), (2, 10.6)]);
        assert!(parse_profile_csv("1;2\n").is_err());
    }

    #[test]
    fn hardware_cost_rounds_to_machines() {
        let h = HardwareSpec::h800();
        assert!(close(h.cost_of(8), 2.85));
        assert!(close(h.cost_of(9), 5.7));
        assert!(h.validate().is_ok());
    }
}
