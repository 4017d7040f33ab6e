//! Few-step distribution-matching distillation on toy Gaussians.
//!
//! Diffusion time runs over `[0, 1000]` with the linear noising
//! `z_t = α_t·x0 + σ_t·ε`, `α_t = 1 − t/1000`, `σ_t = t/1000`. Teacher and
//! critic are analytic Gaussian denoisers, so every quantity here has a
//! closed form that tests can check directly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const T_MAX: f64 = 1000.0;

/// The fixed sampling trajectory `1000 → 750 → 500 → 250 → 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    steps: Vec<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            steps: vec![1000.0, 750.0, 500.0, 250.0, 0.0],
        }
    }
}

impl Schedule {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.first() != Some(&T_MAX) || steps.last() != Some(&0.0) {
            return Err(Error::InvalidArgument("schedule must start at 1000 and end at 0".into()));
        }
        if steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("schedule must be strictly decreasing".into()));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Times at which the generator is evaluated (all but the final 0).
    pub fn generator_times(&self) -> &[f64] {
        &self.steps[..self.steps.len() - 1]
    }
}

pub fn alpha(t: f64) -> f64 {
    1.0 - t / T_MAX
}

pub fn sigma(t: f64) -> f64 {
    t / T_MAX
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=T_MAX).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange(t))
    }
}

pub fn noisify(x0: &[f64], t: f64, eps: &[f64]) -> Result<Vec<f64>> {
    check_time(t)?;
    if x0.len() != eps.len() {
        return Err(Error::mismatch("noise length", x0.len(), eps.len()));
    }
    let (a, s) = (alpha(t), sigma(t));
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: f64,
    pub std: f64,
}

impl GaussianModel {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !mean.is_finite() || !std.is_finite() {
            return Err(Error::InvalidArgument(format!("gaussian needs finite mean and std > 0, got N({mean}, {std})")));
        }
        Ok(Self { mean, std })
    }

    /// MMSE denoiser for `x0 ~ N(μ, σ_d²)` under the linear noising.
    /// At `t = 0` the observation is the clean sample and is returned as is.
    pub fn posterior_mean(&self, z: f64, t: f64) -> f64 {
        if t == 0.0 {
            return z;
        }
        let (a, s) = (alpha(t), sigma(t));
        let v = self.std * self.std;
        (a * v * z + s * s * self.mean) / (a * a * v + s * s)
    }
}

pub fn gaussian_posterior_mean(z: &[f64], t: f64, model: &GaussianModel) -> Result<Vec<f64>> {
    check_time(t)?;
    Ok(z.iter().map(|&zi| model.posterior_mean(zi, t)).collect())
}

/// Predictions and step parameters for one generator update.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillState {
    pub student_pred: Vec<f64>,
    pub teacher_pred: Vec<f64>,
    pub critic_pred: Vec<f64>,
    pub eta: f64,
    pub sigma_norm: f64,
}

impl DistillState {
    pub fn validate(&self) -> Result<()> {
        let n = self.student_pred.len();
        if self.teacher_pred.len() != n {
            return Err(Error::mismatch("teacher prediction length", n, self.teacher_pred.len()));
        }
        if self.critic_pred.len() != n {
            return Err(Error::mismatch("critic prediction length", n, self.critic_pred.len()));
        }
        if !(self.sigma_norm > 0.0) {
            return Err(Error::NonPositiveNormalizer(self.sigma_norm));
        }
        Ok(())
    }

    /// The stop-gradient regression target `x̂_θ + η(x̂_ψ − x̂_φ)/σ_norm`.
    pub fn target(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(self
            .student_pred
            .iter()
            .zip(self.teacher_pred.iter().zip(&self.critic_pred))
            .map(|(x, (p, c))| x + self.eta * (p - c) / self.sigma_norm)
            .collect())
    }
}

/// Gradient of the generator loss with respect to the student prediction.
pub fn dmd_generator_gradient(state: &DistillState) -> Result<Vec<f64>> {
    state.validate()?;
    Ok(state
        .teacher_pred
        .iter()
        .zip(&state.critic_pred)
        .map(|(p, c)| -state.eta * (p - c) / state.sigma_norm)
        .collect())
}

/// `½‖x̂_θ − target‖²` with the target held fixed.
pub fn regression_loss(student_pred: &[f64], target: &[f64]) -> Result<f64> {
    if student_pred.len() != target.len() {
        return Err(Error::mismatch("target length", student_pred.len(), target.len()));
    }
    Ok(0.5 * student_pred.iter().zip(target).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

pub fn dmd_generator_loss(state: &DistillState) -> Result<f64> {
    regression_loss(&state.student_pred, &state.target()?)
}

/// Mean over elements of the squared residual.
pub fn critic_loss(critic_pred: &[f64], clean: &[f64]) -> Result<f64> {
    if critic_pred.len() != clean.len() {
        return Err(Error::mismatch("critic loss length", clean.len(), critic_pred.len()));
    }
    if clean.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = critic_pred.iter().zip(clean).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / clean.len() as f64)
}

/// Noise used between sampling steps.
pub enum Renoise<'a> {
    /// Reuse the initial noise at every step.
    Reuse,
    /// Draw fresh standard normal noise at every step.
    Resample(&'a mut dyn RngCore),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleStep {
    pub t: f64,
    pub input: Vec<f64>,
    pub prediction: Vec<f64>,
}

/// Runs the few-step sampler and returns the last prediction plus every
/// generator call in order.
pub fn sample_4step(
    mut generator: impl FnMut(&[f64], f64) -> Vec<f64>,
    schedule: &Schedule,
    z_init: &[f64],
    mut renoise: Renoise<'_>,
) -> Result<(Vec<f64>, Vec<SampleStep>)> {
    let mut z = z_init.to_vec();
    let mut trajectory = Vec::with_capacity(schedule.generator_times().len());
    let steps = schedule.steps();
    for k in 0..steps.len() - 1 {
        let t = steps[k];
        let pred = generator(&z, t);
        if pred.len() != z.len() {
            return Err(Error::mismatch("generator output length", z.len(), pred.len()));
        }
        let eps: Vec<f64> = match &mut renoise {
            Renoise::Reuse => z_init.to_vec(),
            Renoise::Resample(rng) => (0..z.len()).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let next = noisify(&pred, steps[k + 1], &eps)?;
        trajectory.push(SampleStep { t, input: z, prediction: pred });
        z = next;
    }
    let last = trajectory.last().map(|s| s.prediction.clone()).unwrap_or(z);
    Ok((last, trajectory))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum SigmaNorm {
    /// Batch mean of `|x̂_ψ − x̂_φ|` plus 1e-8.
    #[default]
    BatchMeanAbs,
    /// Batch mean of `|x − x̂_ψ|` plus 1e-8, the distance from the student
    /// sample to the teacher's denoised estimate.
    SampleDistance,
    Constant(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSampling {
    /// Uniform over the generator times of the schedule.
    #[default]
    Discrete,
    /// Uniform over `(0, 1000]`.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch: usize,
    pub eta: f64,
    pub lr: f64,
    pub sigma_norm: SigmaNorm,
    pub time_sampling: TimeSampling,
    /// Generator updates between critic refreshes.
    pub critic_refresh: usize,
    pub seed: u64,
    /// Convergence tolerance on both `|m − μ|` and `|s − σ_d|`.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iters: 2000,
            batch: 64,
            eta: 1.0,
            lr: 0.05,
            sigma_norm: SigmaNorm::default(),
            time_sampling: TimeSampling::default(),
            critic_refresh: 1,
            seed: 0,
            tol: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub m: f64,
    pub s: f64,
    pub gen_loss: f64,
    pub critic_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub m_final: f64,
    pub s_final: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub summary: TrainSummary,
    pub curve: Vec<CurvePoint>,
}

impl TrainResult {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("iter,m,s,gen_loss,critic_loss\n");
        for p in &self.curve {
            out.push_str(&format!("{},{},{},{},{}\n", p.iter, p.m, p.s, p.gen_loss, p.critic_loss));
        }
        out
    }
}

const DIVERGENCE_LIMIT: f64 = 1e3;

/// Alternating generator/critic training of the affine student `x = m + s·ξ`.
///
/// The critic is the analytic denoiser of the student's law as of its last
/// refresh. Iteration `i` draws from its own random stream, so the run is a
/// pure function of the config.
pub fn toy_dmd_train(teacher: GaussianModel, init: (f64, f64), cfg: &TrainConfig) -> Result<TrainResult> {
    let (mut m, mut s) = init;
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("initial student std must be positive, got {s}")));
    }
    if cfg.batch == 0 || cfg.critic_refresh == 0 {
        return Err(Error::InvalidArgument("batch and critic_refresh must be positive".into()));
    }
    if let SigmaNorm::Constant(c) = cfg.sigma_norm {
        if !(c > 0.0) {
            return Err(Error::NonPositiveNormalizer(c));
        }
    }
    let schedule = Schedule::default();
    let times = schedule.generator_times();
    let mut critic = GaussianModel { mean: m, std: s };
    let mut curve = Vec::with_capacity(cfg.iters + 1);
    curve.push(CurvePoint { iter: 0, m, s, gen_loss: 0.0, critic_loss: 0.0 });

    for iter in 0..cfg.iters {
        if iter % cfg.critic_refresh == 0 {
            critic = GaussianModel { mean: m, std: s.abs().max(1e-12) };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(iter as u64);

        let n = cfg.batch;
        let mut xi = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut psi = Vec::with_capacity(n);
        let mut phi = Vec::with_capacity(n);
        for _ in 0..n {
            let k: f64 = rng.sample(StandardNormal);
            let t = match cfg.time_sampling {
                TimeSampling::Discrete => times[rng.random_range(0..times.len())],
                TimeSampling::Uniform => T_MAX - rng.random_range(0.0..T_MAX),
            };
            let eps: f64 = rng.sample(StandardNormal);
            let sample = m + s * k;
            let z = alpha(t) * sample + sigma(t) * eps;
            xi.push(k);
            x.push(sample);
            psi.push(teacher.posterior_mean(z, t));
            phi.push(critic.posterior_mean(z, t));
        }

        let sigma_norm = match cfg.sigma_norm {
            SigmaNorm::BatchMeanAbs => psi.iter().zip(&phi).map(|(p, c)| (p - c).abs()).sum::<f64>() / n as f64 + 1e-8,
            SigmaNorm::SampleDistance => x.iter().zip(&psi).map(|(a, p)| (a - p).abs()).sum::<f64>() / n as f64 + 1e-8,
            SigmaNorm::Constant(c) => c,
        };
        let state = DistillState {
            student_pred: x,
            teacher_pred: psi,
            critic_pred: phi,
            eta: cfg.eta,
            sigma_norm,
        };
        let grad = dmd_generator_gradient(&state)?;
        let gen_loss = dmd_generator_loss(&state)? / n as f64;
        let c_loss = critic_loss(&state.critic_pred, &state.student_pred)?;

        let dm = grad.iter().sum::<f64>() / n as f64;
        let ds = grad.iter().zip(&xi).map(|(g, k)| g * k).sum::<f64>() / n as f64;
        m -= cfg.lr * dm;
        s -= cfg.lr * ds;
        if !m.is_finite() || !s.is_finite() || m.abs() > DIVERGENCE_LIMIT || s > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { iter: iter + 1, m, s });
        }
        curve.push(CurvePoint { iter: iter + 1, m, s, gen_loss, critic_loss: c_loss });
    }

    let converged = (m - teacher.mean).abs() < cfg.tol && (s - teacher.std).abs() < cfg.tol;
    Ok(TrainResult {
        summary: TrainSummary { m_final: m, s_final: s, converged },
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(rng: &mut impl Rng, n: usize) -> DistillState {
        let mut v = || (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        DistillState {
            student_pred: v(),
            teacher_pred: v(),
            critic_pred: v(),
            eta: 0.7,
            sigma_norm: 1.3,
        }
    }

    #[test]
    fn schedule_shape() {
        let s = Schedule::default();
        assert_eq!(s.steps(), &[1000.0, 750.0, 500.0, 250.0, 0.0]);
        for &t in s.steps() {
            assert_eq!(alpha(t) + sigma(t), 1.0);
        }
        assert!(Schedule::new(vec![1000.0, 500.0, 600.0, 0.0]).is_err());
        assert!(Schedule::new(vec![900.0, 0.0]).is_err());
    }

    #[test]
    fn noisify_endpoints() {
        assert_eq!(noisify(&[2.0, -1.0], 0.0, &[5.0, 5.0]).unwrap(), vec![2.0, -1.0]);
        assert_eq!(noisify(&[2.0, -1.0], 1000.0, &[5.0, 4.0]).unwrap(), vec![5.0, 4.0]);
        assert_eq!(noisify(&[2.0], 500.0, &[0.0]).unwrap(), vec![1.0]);
        assert!(matches!(noisify(&[0.0], 1000.5, &[0.0]), Err(Error::TimeOutOfRange(_))));
        assert!(noisify(&[0.0], -1.0, &[0.0]).is_err());
    }

    #[test]
    fn posterior_mean_limits() {
        let point = GaussianModel { mean: 1.5, std: 1e-9 };
        assert_relative_eq!(point.posterior_mean(-7.0, 300.0), 1.5, epsilon = 1e-9);
        let g = GaussianModel::new(0.3, 2.0).unwrap();
        assert_eq!(g.posterior_mean(9.0, 1000.0), 0.3);
        assert_eq!(g.posterior_mean(9.0, 0.0), 9.0);
        let unit = GaussianModel::new(0.0, 1.0).unwrap();
        // α = σ = 0.5: slope 0.5 / (0.25 + 0.25) = 1.
        assert_relative_eq!(unit.posterior_mean(1.0, 500.0), 1.0, epsilon = 1e-15);
        assert!(GaussianModel::new(0.0, 0.0).is_err());
    }

    /// Least-squares fit of x0 on z over a million joint samples. The
    /// Gaussian posterior mean is affine in z, so the fit recovers it.
    fn regress_posterior(model: GaussianModel, t: f64, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut sz, mut sx, mut szz, mut szx) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..samples {
            let x0 = model.mean + model.std * rng.sample::<f64, _>(StandardNormal);
            let z = alpha(t) * x0 + sigma(t) * rng.sample::<f64, _>(StandardNormal);
            sz += z;
            sx += x0;
            szz += z * z;
            szx += z * x0;
        }
        let n = samples as f64;
        let slope = (szx / n - sz / n * sx / n) / (szz / n - (sz / n).powi(2));
        (slope, sx / n - slope * sz / n)
    }

    #[test]
    fn posterior_mean_matches_monte_carlo() {
        let unit = GaussianModel::new(0.0, 1.0).unwrap();
        let (a, b) = regress_posterior(unit, 500.0, 1_000_000, 11);
        assert!((a + b - unit.posterior_mean(1.0, 500.0)).abs() < 1e-2, "{}", a + b);
    }

    #[test]
    fn posterior_mean_is_the_least_squares_critic() {
        for (model, t) in [
            (GaussianModel::new(2.0, 0.5).unwrap(), 750.0),
            (GaussianModel::new(-1.0, 1.7).unwrap(), 250.0),
        ] {
            let (a, b) = regress_posterior(model, t, 100_000, 5);
            for z in [-1.0, 0.0, 1.0, 2.5] {
                assert!((a * z + b - model.posterior_mean(z, t)).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn gradient_closed_form() {
        let st = DistillState {
            student_pred: vec![0.0, 0.0],
            teacher_pred: vec![0.5, 0.1],
            critic_pred: vec![0.3, 0.5],
            eta: 1.0,
            sigma_norm: 1.0,
        };
        let g = dmd_generator_gradient(&st).unwrap();
        assert_relative_eq!(g[0], -0.2, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let st = state(&mut rng, 6);
            let target = st.target().unwrap();
            let grad = dmd_generator_gradient(&st).unwrap();
            let h = 1e-4;
            for i in 0..6 {
                let mut plus = st.student_pred.clone();
                let mut minus = st.student_pred.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (regression_loss(&plus, &target).unwrap() - regression_loss(&minus, &target).unwrap()) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1e-3), "{fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn equal_teacher_and_critic_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = state(&mut rng, 5);
        st.critic_pred = st.teacher_pred.clone();
        assert!(dmd_generator_gradient(&st).unwrap().iter().all(|&g| g == 0.0));
        assert_eq!(dmd_generator_loss(&st).unwrap(), 0.0);
    }

    #[test]
    fn bad_state_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut st = state(&mut rng, 3);
        st.sigma_norm = 0.0;
        assert!(matches!(dmd_generator_gradient(&st), Err(Error::NonPositiveNormalizer(_))));
        st.sigma_norm = 1.0;
        st.critic_pred.pop();
        assert!(dmd_generator_gradient(&st).is_err());
    }

    #[test]
    fn positive_normalizer_keeps_sign_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut st = state(&mut rng, 8);
        st.sigma_norm = 1.0;
        let base = dmd_generator_gradient(&st).unwrap();
        st.sigma_norm = st.teacher_pred.iter().zip(&st.critic_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / 8.0 + 1e-8;
        let scaled = dmd_generator_gradient(&st).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert_eq!(a.signum(), b.signum());
        }
    }

    #[test]
    fn critic_loss_convention() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(critic_loss(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 12.5);
        assert_eq!(critic_loss(&[6.0, 8.0], &[0.0, 0.0]).unwrap(), 50.0);
        assert!(critic_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sampler_calls_generator_four_times() {
        let mut calls = Vec::new();
        let (x, traj) = sample_4step(
            |z, t| {
                calls.push(t);
                vec![4.25; z.len()]
            },
            &Schedule::default(),
            &[0.1, -0.3],
            Renoise::Reuse,
        )
        .unwrap();
        assert_eq!(calls, vec![1000.0, 750.0, 500.0, 250.0]);
        assert_eq!(traj.len(), 4);
        assert_eq!(x, vec![4.25, 4.25]);
    }

    #[test]
    fn scaling_denoiser_matches_hand_composition() {
        // x̂ = c·z with the initial noise reused:
        // z0 = e, x̂_k = c·z_k, z_{k+1} = α_{k+1}·c·z_k + σ_{k+1}·e.
        let c = 0.8;
        let e = 1.25;
        let z1 = 0.25 * c * e + 0.75 * e;
        let z2 = 0.5 * c * z1 + 0.5 * e;
        let z3 = 0.75 * c * z2 + 0.25 * e;
        let expected = c * z3;
        let (x, traj) = sample_4step(|z, _| z.iter().map(|v| c * v).collect(), &Schedule::default(), &[e], Renoise::Reuse).unwrap();
        assert_relative_eq!(x[0], expected, epsilon = 1e-14);
        assert_relative_eq!(traj[3].input[0], z3, epsilon = 1e-14);
    }

    #[test]
    fn stochastic_sampler_is_seeded() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_4step(|z, _| z.iter().map(|v| 0.5 * v).collect(), &Schedule::default(), &[1.0, 2.0], Renoise::Resample(&mut rng))
                .unwrap()
                .0
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn student_at_teacher_does_not_move() {
        let teacher = GaussianModel::new(2.0, 0.5).unwrap();
        let res = toy_dmd_train(teacher, (2.0, 0.5), &TrainConfig { iters: 50, ..Default::default() }).unwrap();
        for p in &res.curve {
            assert_eq!((p.m, p.s), (2.0, 0.5));
            assert_eq!(p.gen_loss, 0.0);
        }
        assert!(res.summary.converged);
    }

    #[test]
    fn trainer_is_deterministic_and_writes_csv() {
        let teacher = GaussianModel::new(1.0, 0.7).unwrap();
        let cfg = TrainConfig { iters: 30, ..Default::default() };
        let a = toy_dmd_train(teacher, (0.0, 1.0), &cfg).unwrap();
        let b = toy_dmd_train(teacher, (0.0, 1.0), &cfg).unwrap();
        assert_eq!(a, b);
        let csv = a.curve_csv();
        assert!(csv.starts_with("iter,m,s,gen_loss,critic_loss\n"));
        assert_eq!(csv.lines().count(), 32);
    }

    #[test]
    fn divergence_guard_trips() {
        let teacher = GaussianModel::new(2.0, 0.5).unwrap();
        let cfg = TrainConfig { lr: -1e4, sigma_norm: SigmaNorm::Constant(1e-6), iters: 100, ..Default::default() };
        assert!(matches!(toy_dmd_train(teacher, (0.0, 1.0), &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn invalid_trainer_inputs() {
        let teacher = GaussianModel::new(2.0, 0.5).unwrap();
        assert!(toy_dmd_train(teacher, (0.0, 0.0), &TrainConfig::default()).is_err());
        let cfg = TrainConfig { sigma_norm: SigmaNorm::Constant(-1.0), ..Default::default() };
        assert!(toy_dmd_train(teacher, (0.0, 1.0), &cfg).is_err());
    }
}
