//! Indirect-learning loop and the per-algorithm learners.
//!
//! Each sample: the predistorter (frozen copy `phi`) maps `s(n)` to the PA
//! inputs, the PA outputs are scaled by `1/G`, the postdistorter (trained copy
//! `phi~`) maps the scaled outputs back, and the learner runs one RPEM
//! recursion on the difference. Every `block_len` samples the trained copy
//! is published to the predistorter.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::rpem::{RpemBranch, RpemHyper};
use super::{Algorithm, IterationRecord, TrainRun, TrainSettings};
use crate::dpd::{CoeffShape, CoeffVec, GroupingScheme};
use crate::gmp::{BasisEvaluator, DelayLine, GmpConfig};
use crate::pa::{apply_pa, PaBank};
use crate::reshape::{self, ReshapeOp};
use crate::waveform::ComplexSignal;
use crate::{Error, Result};

const NOISE_STREAM: u64 = 3;

/// Samples per divergence check, independent of the copy period.
const DIVERGENCE_WINDOW: usize = 4096;

/// A window whose mean error exceeds this multiple of the first window's
/// mean counts as divergence.
const DIVERGENCE_FACTOR: f64 = 10.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[inline]
fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear-bypass starting point for a FF coefficient vector.
pub(crate) fn bypass_ff(s: usize, gmp: &GmpConfig) -> Vec<Complex64> {
    let q = gmp.q();
    let mut phi = vec![ZERO; q * s];
    let pos = gmp.bypass_position();
    for l in 0..s {
        phi[l * q + pos] = Complex64::new(1.0, 0.0);
    }
    phi
}

pub(crate) trait Learner {
    /// Number of feedback channels (postdistorter branches seen by the loop).
    fn channels(&self) -> usize;
    /// PA inputs from the published predistorter.
    fn predistort(&self, psi: &[Complex64], x: &mut [Complex64]);
    /// One recursion. `psi_fb` holds one basis vector per channel.
    fn update(
        &mut self,
        n: usize,
        psi_fb: &[Complex64],
        targets: &[Complex64],
        errors: &mut [Complex64],
    ) -> Result<()>;
    /// `phi <- phi~`.
    fn publish(&mut self);
    /// Trained coefficients in the output layout.
    fn snapshot(&self) -> CoeffVec;
}

pub(crate) struct FfLearner {
    q: usize,
    branches: Vec<RpemBranch>,
    phi: Vec<Complex64>,
    hyper: RpemHyper,
    projection: Option<(ReshapeOp, ReshapeOp)>,
}

impl FfLearner {
    pub fn new(s: usize, gmp: &GmpConfig, hyper: RpemHyper) -> Self {
        let q = gmp.q();
        let phi = bypass_ff(s, gmp);
        let branches = phi
            .chunks_exact(q)
            .map(|c| RpemBranch::new(c.to_vec(), &hyper))
            .collect();
        Self {
            q,
            branches,
            phi,
            hyper,
            projection: None,
        }
    }

    /// Method I: FF recursion followed by `phi~ <- M1 M2 phi~`.
    pub fn with_projection(
        s: usize,
        gmp: &GmpConfig,
        scheme: &GroupingScheme,
        hyper: RpemHyper,
    ) -> Self {
        let mut me = Self::new(s, gmp, hyper);
        me.projection = Some((reshape::build_m1(scheme), reshape::build_m2(scheme)));
        me.project();
        me.publish();
        me
    }

    fn trained(&self) -> Vec<Complex64> {
        self.branches
            .iter()
            .flat_map(|b| b.coeffs().iter().copied())
            .collect()
    }

    fn project(&mut self) {
        if let Some((m1, m2)) = &self.projection {
            let bar = m2
                .apply(&self.trained())
                .expect("layout fixed at construction");
            let full = m1.apply(&bar).expect("layout fixed at construction");
            for (b, chunk) in self.branches.iter_mut().zip(full.chunks_exact(self.q)) {
                b.coeffs_mut().copy_from_slice(chunk);
            }
        }
    }
}

impl Learner for FfLearner {
    fn channels(&self) -> usize {
        self.branches.len()
    }

    fn predistort(&self, psi: &[Complex64], x: &mut [Complex64]) {
        for (xl, c) in x.iter_mut().zip(self.phi.chunks_exact(self.q)) {
            *xl = dot(c, psi);
        }
    }

    fn update(
        &mut self,
        _n: usize,
        psi_fb: &[Complex64],
        targets: &[Complex64],
        errors: &mut [Complex64],
    ) -> Result<()> {
        for (l, b) in self.branches.iter_mut().enumerate() {
            let psi = &psi_fb[l * self.q..(l + 1) * self.q];
            let e = targets[l] - b.output(psi);
            errors[l] = e;
            b.step(psi, e, &self.hyper)?;
        }
        self.project();
        Ok(())
    }

    fn publish(&mut self) {
        self.phi = self.trained();
    }

    fn snapshot(&self) -> CoeffVec {
        match &self.projection {
            None => CoeffVec::new(CoeffShape::Ff, self.trained()),
            Some((_, m2)) => CoeffVec::new(
                CoeffShape::Lc,
                m2.apply(&self.trained())
                    .expect("layout fixed at construction"),
            ),
        }
    }
}

/// Shared state of the LC learners: the trained LC vector, its FF expansion
/// and the published predistorter.
struct LcCore {
    q: usize,
    m1: ReshapeOp,
    m2: ReshapeOp,
    phi_bar: Vec<Complex64>,
    phi_tilde: Vec<Complex64>,
    phi: Vec<Complex64>,
    hyper: RpemHyper,
}

impl LcCore {
    fn new(gmp: &GmpConfig, scheme: &GroupingScheme, hyper: RpemHyper) -> Self {
        let m1 = reshape::build_m1(scheme);
        let m2 = reshape::build_m2(scheme);
        let phi_bar = m2
            .apply(&bypass_ff(scheme.s(), gmp))
            .expect("layout fixed at construction");
        let phi_tilde = m1.apply(&phi_bar).expect("layout fixed at construction");
        Self {
            q: gmp.q(),
            m1,
            m2,
            phi: phi_tilde.clone(),
            phi_bar,
            phi_tilde,
            hyper,
        }
    }

    fn predistort(&self, psi: &[Complex64], x: &mut [Complex64]) {
        for (xl, c) in x.iter_mut().zip(self.phi.chunks_exact(self.q)) {
            *xl = dot(c, psi);
        }
    }

    /// Per-PA errors, their LC-layout average `M2 (E (x) 1_Q)` and the
    /// averaged basis vectors `M2 psi'`.
    fn errors(
        &self,
        psi_fb: &[Complex64],
        targets: &[Complex64],
        errors: &mut [Complex64],
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let q = self.q;
        let mut expanded = Vec::with_capacity(psi_fb.len());
        for (l, (t, c)) in targets
            .iter()
            .zip(self.phi_tilde.chunks_exact(q))
            .enumerate()
        {
            let e = t - dot(c, &psi_fb[l * q..(l + 1) * q]);
            errors[l] = e;
            expanded.extend(std::iter::repeat(e).take(q));
        }
        Ok((self.m2.apply(&expanded)?, self.m2.apply(psi_fb)?))
    }

    fn refresh(&mut self) {
        self.phi_tilde = self
            .m1
            .apply(&self.phi_bar)
            .expect("layout fixed at construction");
    }
}

/// Method II: one RPEM branch per reshaped block of `phi_bar'`.
pub(crate) struct LcMethod2 {
    core: LcCore,
    m3: ReshapeOp,
    sizes: Vec<usize>,
    branches: Vec<RpemBranch>,
}

impl LcMethod2 {
    pub fn new(gmp: &GmpConfig, scheme: &GroupingScheme, hyper: RpemHyper) -> Self {
        let core = LcCore::new(gmp, scheme, hyper);
        let m3 = reshape::build_m3(scheme);
        let prime = m3
            .apply(&core.phi_bar)
            .expect("layout fixed at construction");
        let sizes: Vec<usize> = scheme.branches().iter().map(Vec::len).collect();
        let mut branches = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &len in &sizes {
            branches.push(RpemBranch::new(prime[at..at + len].to_vec(), &hyper));
            at += len;
        }
        Self {
            core,
            m3,
            sizes,
            branches,
        }
    }
}

impl Learner for LcMethod2 {
    fn channels(&self) -> usize {
        self.core.phi.len() / self.core.q
    }

    fn predistort(&self, psi: &[Complex64], x: &mut [Complex64]) {
        self.core.predistort(psi, x);
    }

    fn update(
        &mut self,
        _n: usize,
        psi_fb: &[Complex64],
        targets: &[Complex64],
        errors: &mut [Complex64],
    ) -> Result<()> {
        let (e_bar, psi_bar) = self.core.errors(psi_fb, targets, errors)?;
        let e_prime = self.m3.apply(&e_bar)?;
        let psi_prime = self.m3.apply(&psi_bar)?;
        let mut at = 0;
        let mut prime = Vec::with_capacity(e_prime.len());
        for (b, &len) in self.branches.iter_mut().zip(&self.sizes) {
            b.step_hadamard(
                &psi_prime[at..at + len],
                &e_prime[at..at + len],
                &self.core.hyper,
            )?;
            prime.extend_from_slice(b.coeffs());
            at += len;
        }
        self.core.phi_bar = self.m3.apply_transpose(&prime)?;
        self.core.refresh();
        Ok(())
    }

    fn publish(&mut self) {
        self.core.phi = self.core.phi_tilde.clone();
    }

    fn snapshot(&self) -> CoeffVec {
        CoeffVec::new(CoeffShape::Lc, self.core.phi_bar.clone())
    }
}

/// Method III: cycles through the gather operators, training `T_1` length-`Q`
/// branches per operator with their own covariance and forgetting state.
pub(crate) struct LcMethod3 {
    core: LcCore,
    m4: Vec<ReshapeOp>,
    t1: usize,
    period: usize,
    branches: Vec<Vec<RpemBranch>>,
}

impl LcMethod3 {
    pub fn new(gmp: &GmpConfig, scheme: &GroupingScheme, hyper: RpemHyper, period: usize) -> Self {
        let core = LcCore::new(gmp, scheme, hyper);
        let m4 = reshape::build_m4_sequence(scheme);
        let t1 = scheme.t()[0];
        let q = gmp.q();
        let branches = m4
            .iter()
            .map(|op| {
                let head = op
                    .apply(&core.phi_bar)
                    .expect("layout fixed at construction");
                (0..t1)
                    .map(|b| RpemBranch::new(head[b * q..(b + 1) * q].to_vec(), &hyper))
                    .collect()
            })
            .collect();
        Self {
            core,
            m4,
            t1,
            period: period.max(1),
            branches,
        }
    }
}

impl Learner for LcMethod3 {
    fn channels(&self) -> usize {
        self.core.phi.len() / self.core.q
    }

    fn predistort(&self, psi: &[Complex64], x: &mut [Complex64]) {
        self.core.predistort(psi, x);
    }

    fn update(
        &mut self,
        n: usize,
        psi_fb: &[Complex64],
        targets: &[Complex64],
        errors: &mut [Complex64],
    ) -> Result<()> {
        let q = self.core.q;
        let t = (n / self.period) % self.m4.len();
        let op = &self.m4[t];
        let (e_bar, psi_bar) = self.core.errors(psi_fb, targets, errors)?;
        let width = self.t1 * q;
        let e_t = reshape::trunc(&op.apply(&e_bar)?, width)?;
        let psi_t = reshape::trunc(&op.apply(&psi_bar)?, width)?;
        let gathered = op.apply(&self.core.phi_bar)?;
        let mut head = Vec::with_capacity(width);
        for (b, branch) in self.branches[t].iter_mut().enumerate() {
            let span = b * q..(b + 1) * q;
            branch.coeffs_mut().copy_from_slice(&gathered[span.clone()]);
            branch.step_hadamard(&psi_t[span.clone()], &e_t[span], &self.core.hyper)?;
            head.extend_from_slice(branch.coeffs());
        }
        let merged = reshape::merge(&head, &gathered, width)?;
        self.core.phi_bar = op.apply_transpose(&merged)?;
        self.core.refresh();
        Ok(())
    }

    fn publish(&mut self) {
        self.core.phi = self.core.phi_tilde.clone();
    }

    fn snapshot(&self) -> CoeffVec {
        CoeffVec::new(CoeffShape::Lc, self.core.phi_bar.clone())
    }
}

/// One predistorter shared by every PA, trained on the averaged feedback.
pub(crate) struct SingleLearner {
    branch: RpemBranch,
    phi: Vec<Complex64>,
    hyper: RpemHyper,
}

impl SingleLearner {
    pub fn new(gmp: &GmpConfig, hyper: RpemHyper) -> Self {
        let phi = bypass_ff(1, gmp);
        Self {
            branch: RpemBranch::new(phi.clone(), &hyper),
            phi,
            hyper,
        }
    }
}

impl Learner for SingleLearner {
    fn channels(&self) -> usize {
        1
    }

    fn predistort(&self, psi: &[Complex64], x: &mut [Complex64]) {
        let v = dot(&self.phi, psi);
        x.fill(v);
    }

    fn update(
        &mut self,
        _n: usize,
        psi_fb: &[Complex64],
        targets: &[Complex64],
        errors: &mut [Complex64],
    ) -> Result<()> {
        let e = targets[0] - self.branch.output(psi_fb);
        errors[0] = e;
        self.branch.step(psi_fb, e, &self.hyper)?;
        Ok(())
    }

    fn publish(&mut self) {
        self.phi = self.branch.coeffs().to_vec();
    }

    fn snapshot(&self) -> CoeffVec {
        CoeffVec::new(CoeffShape::Single, self.branch.coeffs().to_vec())
    }
}

fn max_relative_delta(old: &[Complex64], new: &[Complex64]) -> f64 {
    let scale = new.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-12);
    let delta = old
        .iter()
        .zip(new)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    delta / scale
}

/// Runs the indirect-learning loop over `signal` with the given learner.
pub(crate) fn run_ila(
    algorithm: Algorithm,
    learner: &mut dyn Learner,
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    settings: &TrainSettings,
) -> Result<TrainRun> {
    settings.validate()?;
    let s = bank.len();
    let q = gmp.q();
    let d = gmp.latency();
    let channels = learner.channels();
    let averaged = channels == 1 && s > 1;
    if !(channels == s || averaged) {
        return Err(Error::shape("feedback channels", s, channels));
    }
    let needed = settings.block_len;
    if signal.len() < needed {
        return Err(Error::TooShort {
            needed,
            have: signal.len(),
        });
    }

    let gains: Vec<f64> = bank.params().iter().map(|p| p.linear_gain()).collect();
    let eval = BasisEvaluator::new(gmp);
    let mut s_line = DelayLine::new(gmp.memory());
    let mut y_lines: Vec<DelayLine> = (0..channels)
        .map(|_| DelayLine::new(gmp.memory()))
        .collect();
    let mut x_lines: Vec<DelayLine> = (0..channels).map(|_| DelayLine::new(d + 1)).collect();

    let mut noise = settings.noise_snr_db.map(|snr| {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.noise_seed);
        rng.set_stream(NOISE_STREAM);
        let sigma = (signal.mean_power() * 10f64.powf(-snr / 10.0) / 2.0).sqrt();
        (rng, Normal::new(0.0, sigma).expect("finite sigma"))
    });

    let mut psi = vec![ZERO; q];
    let mut psi_fb = vec![ZERO; channels * q];
    let mut x = vec![ZERO; s];
    let mut targets = vec![ZERO; channels];
    let mut errors = vec![ZERO; channels];
    let mut err_acc = vec![0.0; channels];

    let limit = signal
        .len()
        .min(settings.max_iters.saturating_mul(settings.block_len));
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut prev = learner.snapshot().into_data();
    // Samples before the first non-zero error can reach the learner: the
    // predistorter and the target line each add `d` samples of delay.
    let warm_up = gmp.memory() + d;
    let mut first_window: Option<f64> = None;
    let mut window_acc = 0.0;
    let mut converged = false;
    let mut used = 0;

    for (n, &sn) in signal.samples()[..limit].iter().enumerate() {
        s_line.push(sn);
        eval.eval_into(s_line.history(), &mut psi);
        learner.predistort(&psi, &mut x);

        let mut y_mean = ZERO;
        for l in 0..s {
            let mut y = apply_pa(x[l], l, bank) / gains[l];
            if let Some((rng, dist)) = noise.as_mut() {
                y += Complex64::new(dist.sample(rng), dist.sample(rng));
            }
            if averaged {
                y_mean += y;
            } else {
                y_lines[l].push(y);
                x_lines[l].push(x[l]);
            }
        }
        if averaged {
            y_lines[0].push(y_mean / s as f64);
            x_lines[0].push(x[0]);
        }
        for c in 0..channels {
            eval.eval_into(y_lines[c].history(), &mut psi_fb[c * q..(c + 1) * q]);
            targets[c] = x_lines[c].oldest();
        }

        learner.update(n, &psi_fb, &targets, &mut errors)?;
        for (acc, e) in err_acc.iter_mut().zip(&errors) {
            *acc += e.norm();
        }
        window_acc += errors.iter().map(|e| e.norm()).sum::<f64>() / channels as f64;
        used = n + 1;

        let mut diverged = false;
        if used % DIVERGENCE_WINDOW == 0 {
            let level = window_acc / DIVERGENCE_WINDOW as f64;
            window_acc = 0.0;
            let base = *first_window.get_or_insert(level.max(1e-6));
            diverged = !level.is_finite() || level > DIVERGENCE_FACTOR * base;
        }

        if used % settings.block_len == 0 {
            learner.publish();
            let now = learner.snapshot().into_data();
            let mean_abs_error: Vec<f64> = err_acc
                .iter()
                .map(|a| a / settings.block_len as f64)
                .collect();
            err_acc.fill(0.0);
            let record = IterationRecord {
                iteration: history.len(),
                samples: used,
                max_coeff_delta: max_relative_delta(&prev, &now),
                mean_abs_error,
            };
            prev = now;
            diverged |= !record.mean_error().is_finite();
            history.push(record);
        }
        if diverged {
            return Err(Error::Diverged { history });
        }
        if used % settings.block_len == 0
            && used >= warm_up + settings.convergence_window * settings.block_len
            && super::convergence_check(
                &history,
                settings.convergence_tol,
                settings.convergence_window,
            )
        {
            converged = true;
            break;
        }
    }
    learner.publish();

    Ok(TrainRun {
        algorithm,
        settings: settings.clone(),
        coeffs: learner.snapshot(),
        history,
        converged,
        samples_used: used,
    })
}
