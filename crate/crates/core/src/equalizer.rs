//! Symbol-spaced adaptive equalizers trained by LMS: linear FFE, decision
//! feedback (DFE) and third-order Volterra (VNLE).
//!
//! All three share one regressor-based engine, so a DFE without feedback taps
//! or a VNLE without nonlinear memory reproduces the FFE exactly.

use crate::error::{Error, Result};
use crate::tx::{SymbolFrame, LEVEL_AMPLITUDES};

/// Symbols excluded at each frame edge from error counting.
pub const EDGE_GUARD: usize = 100;

/// Epoch-to-epoch MSE growth treated as divergence.
const DIVERGENCE_GROWTH: f64 = 10.0;

/// Indices of symbols that count towards SNR and BER.
pub fn payload_range(n: usize, n_train: usize) -> std::ops::Range<usize> {
    let start = n_train.max(EDGE_GUARD);
    let end = n.saturating_sub(EDGE_GUARD);
    start..end.max(start)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfeConfig {
    pub n_taps: usize,
    pub mu: f64,
    pub epochs: usize,
    /// Keep adapting on slicer decisions after training.
    pub decision_directed: bool,
}

impl Default for FfeConfig {
    fn default() -> Self {
        Self {
            n_taps: 15,
            mu: 1e-3,
            epochs: 5,
            decision_directed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfeConfig {
    pub n_ff: usize,
    pub n_fb: usize,
    pub mu: f64,
    pub epochs: usize,
    pub decision_directed: bool,
}

impl Default for DfeConfig {
    fn default() -> Self {
        Self {
            n_ff: 15,
            n_fb: 3,
            mu: 1e-3,
            epochs: 5,
            decision_directed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VnleConfig {
    /// Linear memory.
    pub m1: usize,
    /// Second-order memory.
    pub m2: usize,
    /// Third-order memory.
    pub m3: usize,
    pub mu: f64,
    pub epochs: usize,
    pub decision_directed: bool,
}

impl Default for VnleConfig {
    fn default() -> Self {
        Self {
            m1: 15,
            m2: 7,
            m3: 5,
            mu: 1e-3,
            epochs: 5,
            decision_directed: false,
        }
    }
}

/// How the coefficient vector of [`Equalized`] is partitioned, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapLayout {
    pub linear: usize,
    /// Zeroth-order (constant) term, present only with nonlinear kernels.
    pub constant: usize,
    pub quadratic: usize,
    pub cubic: usize,
    pub feedback: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    /// Equalizer output for every symbol, on the normalized level scale.
    pub y: Vec<f64>,
    pub taps: Vec<f64>,
    pub layout: TapLayout,
}

impl Equalized {
    pub fn linear_taps(&self) -> &[f64] {
        &self.taps[..self.layout.linear]
    }

    pub fn feedback_taps(&self) -> &[f64] {
        let start = self.taps.len() - self.layout.feedback;
        &self.taps[start..]
    }
}

/// Nearest PAM-4 level for each sample.
pub fn decide_pam4(y: &[f64]) -> SymbolFrame {
    let levels = y.iter().map(|&v| slice(v)).collect();
    SymbolFrame::from_levels(levels, 0).expect("levels are in range")
}

fn slice(v: f64) -> u8 {
    if v < -2.0 / 3.0 {
        0
    } else if v < 0.0 {
        1
    } else if v < 2.0 / 3.0 {
        2
    } else {
        3
    }
}

/// Removes the receiver offset and scales so that the training segment has
/// the mean-square of its reference symbols, with positive correlation to them.
///
/// The offset comes from an affine fit of the training samples against the
/// known levels, so a nonzero mean of the training symbols is preserved.
pub fn normalize(x: &[f64], frame: &SymbolFrame) -> Result<Vec<f64>> {
    let n_train = frame.n_train();
    if n_train == 0 || x.len() != frame.len() {
        return Err(Error::invalid(
            "normalization needs a training segment and one sample per symbol",
        ));
    }
    let refs = frame.amplitudes();
    let train = &x[..n_train];
    let known = &refs[..n_train];
    let len = n_train as f64;
    let mx = train.iter().sum::<f64>() / len;
    let ma = known.iter().sum::<f64>() / len;
    let (mut cov, mut var) = (0.0, 0.0);
    for (v, a) in train.iter().zip(known) {
        cov += (v - mx) * (a - ma);
        var += (a - ma) * (a - ma);
    }
    if !(var > 0.0) || !(cov != 0.0 && cov.is_finite()) {
        return Err(Error::Numerical(
            "training samples do not correlate with the reference".into(),
        ));
    }
    let slope = cov / var;
    let offset = mx - slope * ma;
    let ms = train.iter().map(|v| (v - offset).powi(2)).sum::<f64>() / len;
    let ms_ref = known.iter().map(|a| a * a).sum::<f64>() / len;
    let scale = slope.signum() * (ms_ref / ms).sqrt();
    Ok(x.iter().map(|v| (v - offset) * scale).collect())
}

struct Regressor {
    linear: usize,
    quadratic: usize,
    cubic: usize,
    feedback: usize,
}

impl Regressor {
    fn layout(&self) -> TapLayout {
        let m2 = self.quadratic;
        let m3 = self.cubic;
        TapLayout {
            linear: self.linear,
            constant: usize::from(m2 + m3 > 0),
            quadratic: m2 * (m2 + 1) / 2,
            cubic: m3 * (m3 + 1) * (m3 + 2) / 6,
            feedback: self.feedback,
        }
    }

    fn dim(&self) -> usize {
        let l = self.layout();
        l.linear + l.constant + l.quadratic + l.cubic + l.feedback
    }

    /// Centered window of `len` samples around symbol k, newest first.
    fn window(x: &[f64], k: usize, len: usize, out: &mut Vec<f64>) {
        let c = (len / 2) as isize;
        for i in 0..len as isize {
            let idx = k as isize + c - i;
            out.push(if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            });
        }
    }

    fn fill(&self, x: &[f64], k: usize, past: &[f64], scratch: &mut Vec<f64>, u: &mut Vec<f64>) {
        u.clear();
        Self::window(x, k, self.linear, u);
        if self.quadratic + self.cubic > 0 {
            u.push(1.0);
        }
        if self.quadratic > 0 {
            scratch.clear();
            Self::window(x, k, self.quadratic, scratch);
            for i in 0..scratch.len() {
                for j in i..scratch.len() {
                    u.push(scratch[i] * scratch[j]);
                }
            }
        }
        if self.cubic > 0 {
            scratch.clear();
            Self::window(x, k, self.cubic, scratch);
            for i in 0..scratch.len() {
                for j in i..scratch.len() {
                    for l in j..scratch.len() {
                        u.push(scratch[i] * scratch[j] * scratch[l]);
                    }
                }
            }
        }
        for d in 1..=self.feedback {
            u.push(if k >= d { past[k - d] } else { 0.0 });
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn adapt(
    x: &[f64],
    frame: &SymbolFrame,
    reg: Regressor,
    mu: f64,
    epochs: usize,
    decision_directed: bool,
) -> Result<Equalized> {
    if reg.linear == 0 {
        return Err(Error::invalid("equalizer needs at least one linear tap"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid("LMS step size must be positive"));
    }
    let n_train = frame.n_train();
    let x = normalize(x, frame)?;
    let refs = frame.amplitudes();
    let n = x.len();

    let mut w = vec![0.0; reg.dim()];
    w[reg.linear / 2] = 1.0;
    let mut u = Vec::with_capacity(w.len());
    let mut scratch = Vec::new();

    let mut prev_mse = f64::NAN;
    for epoch in 0..epochs {
        let mut sq = 0.0;
        for k in 0..n_train {
            reg.fill(&x, k, &refs, &mut scratch, &mut u);
            let e = refs[k] - dot(&w, &u);
            sq += e * e;
            for (wi, ui) in w.iter_mut().zip(&u) {
                *wi += mu * e * ui;
            }
        }
        let mse = sq / n_train as f64;
        if !mse.is_finite() || (epoch > 0 && mse > DIVERGENCE_GROWTH * prev_mse) {
            return Err(Error::Diverged { epoch, mse });
        }
        prev_mse = mse;
    }

    // Past symbols fed back: known during training, decisions afterwards.
    let mut past = refs.clone();
    let mut y = vec![0.0; n];
    for k in 0..n {
        reg.fill(&x, k, &past, &mut scratch, &mut u);
        let out = dot(&w, &u);
        y[k] = out;
        if k >= n_train {
            let d = LEVEL_AMPLITUDES[slice(out) as usize];
            past[k] = d;
            if decision_directed {
                let e = d - out;
                for (wi, ui) in w.iter_mut().zip(&u) {
                    *wi += mu * e * ui;
                }
            }
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("equalizer output is not finite".into()));
    }
    Ok(Equalized {
        y,
        layout: reg.layout(),
        taps: w,
    })
}

pub fn ffe_lms(x: &[f64], frame: &SymbolFrame, cfg: &FfeConfig) -> Result<Equalized> {
    adapt(
        x,
        frame,
        Regressor {
            linear: cfg.n_taps,
            quadratic: 0,
            cubic: 0,
            feedback: 0,
        },
        cfg.mu,
        cfg.epochs,
        cfg.decision_directed,
    )
}

pub fn dfe_lms(x: &[f64], frame: &SymbolFrame, cfg: &DfeConfig) -> Result<Equalized> {
    adapt(
        x,
        frame,
        Regressor {
            linear: cfg.n_ff,
            quadratic: 0,
            cubic: 0,
            feedback: cfg.n_fb,
        },
        cfg.mu,
        cfg.epochs,
        cfg.decision_directed,
    )
}

pub fn vnle_lms(x: &[f64], frame: &SymbolFrame, cfg: &VnleConfig) -> Result<Equalized> {
    adapt(
        x,
        frame,
        Regressor {
            linear: cfg.m1,
            quadratic: cfg.m2,
            cubic: cfg.m3,
            feedback: 0,
        },
        cfg.mu,
        cfg.epochs,
        cfg.decision_directed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tx::{gen_pam4, REFERENCE_POWER};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn convolve(a: &[f64], h: &[f64], cursor: usize) -> Vec<f64> {
        (0..a.len())
            .map(|k| {
                h.iter()
                    .enumerate()
                    .filter_map(|(i, hi)| {
                        let idx = k as isize + cursor as isize - i as isize;
                        (idx >= 0 && (idx as usize) < a.len()).then(|| hi * a[idx as usize])
                    })
                    .sum()
            })
            .collect()
    }

    fn add_awgn(x: &mut [f64], snr_db: f64, seed: u64) -> f64 {
        let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let sigma = (p / 10f64.powf(snr_db / 10.0)).sqrt();
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in x.iter_mut() {
            *v += normal.sample(&mut rng);
        }
        sigma
    }

    fn payload_mse(y: &[f64], frame: &SymbolFrame) -> f64 {
        let r = payload_range(y.len(), frame.n_train());
        let refs = frame.amplitudes();
        r.clone().map(|k| (y[k] - refs[k]).powi(2)).sum::<f64>() / r.len() as f64
    }

    /// MMSE of an n-tap linear equalizer by solving the normal equations.
    fn wiener_mse(h: &[f64], cursor: usize, sigma2: f64, n_taps: usize) -> f64 {
        let ps = REFERENCE_POWER;
        let c = (n_taps / 2) as isize;
        // Received x[k] = sum_i h[i] a[k + cursor - i] + n; regressor x[k + c - t].
        let coef = |t: isize, m: isize| -> f64 {
            // Coefficient of a[k + m] in x[k + c - t].
            let i = c - t + cursor as isize - m;
            if i >= 0 && (i as usize) < h.len() {
                h[i as usize]
            } else {
                0.0
            }
        };
        let span = (n_taps + h.len() + 2) as isize;
        let mut r = DMatrix::<f64>::zeros(n_taps, n_taps);
        let mut p = DVector::<f64>::zeros(n_taps);
        for t in 0..n_taps as isize {
            p[t as usize] = ps * coef(t, 0);
            for s in 0..n_taps as isize {
                let mut acc = 0.0;
                for m in -span..=span {
                    acc += coef(t, m) * coef(s, m);
                }
                r[(t as usize, s as usize)] = ps * acc + if t == s { sigma2 } else { 0.0 };
            }
        }
        let w = r.clone().lu().solve(&p).unwrap();
        ps - p.dot(&w)
    }

    #[test]
    fn payload_range_respects_guard_and_training() {
        assert_eq!(payload_range(1000, 50), 100..900);
        assert_eq!(payload_range(1000, 300), 300..900);
        assert!(payload_range(150, 100).is_empty());
    }

    #[test]
    fn slicer_thresholds() {
        let f = decide_pam4(&[-1.2, -0.5, 0.1, 0.9, -2.0 / 3.0, 0.0]);
        assert_eq!(f.levels(), &[0, 1, 2, 3, 1, 2]);
    }

    #[test]
    fn ffe_approaches_wiener_bound() {
        let frame = gen_pam4(40_000, 20_000, 11).unwrap();
        let h = [0.2, 1.0, 0.3];
        let mut x = convolve(&frame.amplitudes(), &h, 1);
        let sigma = add_awgn(&mut x, 25.0, 5);
        let cfg = FfeConfig {
            epochs: 5,
            ..FfeConfig::default()
        };
        let eq = ffe_lms(&x, &frame, &cfg).unwrap();
        // The equalizer sees an affine rescaling of x.
        let xn = normalize(&x, &frame).unwrap();
        let g = (xn[1] - xn[0]) / (x[1] - x[0]);
        let hs: Vec<f64> = h.iter().map(|v| v * g).collect();
        let bound = wiener_mse(&hs, 1, (sigma * g).powi(2), cfg.n_taps);
        let got = payload_mse(&eq.y, &frame);
        let excess_db = 10.0 * (got / bound).log10();
        assert!(excess_db.abs() < 0.2, "LMS {got} vs Wiener {bound} ({excess_db} dB)");
    }

    #[test]
    fn dfe_cancels_postcursor() {
        let frame = gen_pam4(20_000, 2_000, 3).unwrap();
        let x = convolve(&frame.amplitudes(), &[1.0, 0.5], 0);
        let ffe = ffe_lms(&x, &frame, &FfeConfig::default()).unwrap();
        let dfe = dfe_lms(&x, &frame, &DfeConfig::default()).unwrap();
        assert!(payload_mse(&dfe.y, &frame) < payload_mse(&ffe.y, &frame));
        assert_eq!(dfe.feedback_taps().len(), 3);
        let r = payload_range(frame.len(), frame.n_train());
        let dec = decide_pam4(&dfe.y);
        assert_eq!(&dec.levels()[r.clone()], &frame.levels()[r]);
    }

    #[test]
    fn vnle_handles_square_law_distortion() {
        let frame = gen_pam4(20_000, 2_000, 8).unwrap();
        let x: Vec<f64> = frame.amplitudes().iter().map(|a| a + 0.1 * a * a).collect();
        let ffe = ffe_lms(&x, &frame, &FfeConfig::default()).unwrap();
        let vnle = vnle_lms(&x, &frame, &VnleConfig::default()).unwrap();
        let (v, f) = (payload_mse(&vnle.y, &frame), payload_mse(&ffe.y, &frame));
        assert!(v < 0.1 * f, "VNLE {v} FFE {f}");
        assert_eq!(vnle.layout.quadratic, 28);
        assert_eq!(vnle.layout.cubic, 35);
    }

    #[test]
    fn identity_channel_keeps_center_spike() {
        let frame = gen_pam4(20_000, 2_000, 12).unwrap();
        let mut x: Vec<f64> = frame.amplitudes().iter().map(|a| 0.37 * a).collect();
        add_awgn(&mut x, 40.0, 1);
        let eq = ffe_lms(&x, &frame, &FfeConfig::default()).unwrap();
        let c = eq.taps.len() / 2;
        for (i, w) in eq.taps.iter().enumerate() {
            if i != c {
                assert!(w.abs() < 0.02, "tap {i} = {w}");
            }
        }
        assert!((eq.taps[c] - 1.0).abs() < 0.05);
    }

    #[test]
    fn isi_free_channel_preserves_snr() {
        let frame = gen_pam4(100_000, 2_000, 21).unwrap();
        let a = frame.amplitudes();
        let mut x = a.clone();
        add_awgn(&mut x, 18.0, 4);
        let r = payload_range(frame.len(), frame.n_train());
        let snr = |y: &[f64]| {
            let s: f64 = r.clone().map(|k| a[k] * a[k]).sum();
            let e: f64 = r.clone().map(|k| (y[k] - a[k]).powi(2)).sum();
            10.0 * (s / e).log10()
        };
        let eq = ffe_lms(&x, &frame, &FfeConfig::default()).unwrap();
        let (inp, out) = (snr(&x), snr(&eq.y));
        assert!((inp - out).abs() < 0.3, "in {inp} out {out}");
    }

    #[test]
    fn huge_step_size_diverges() {
        let frame = gen_pam4(4000, 2000, 1).unwrap();
        let mut x = convolve(&frame.amplitudes(), &[0.2, 1.0, 0.3], 1);
        add_awgn(&mut x, 20.0, 3);
        let cfg = FfeConfig {
            mu: 5.0,
            ..FfeConfig::default()
        };
        let err = ffe_lms(&x, &frame, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn inverted_input_is_recovered() {
        let frame = gen_pam4(4000, 1000, 6).unwrap();
        let x: Vec<f64> = frame.amplitudes().iter().map(|a| -3.0 * a + 0.7).collect();
        let eq = ffe_lms(&x, &frame, &FfeConfig::default()).unwrap();
        let dec = decide_pam4(&eq.y);
        assert_eq!(dec.levels(), frame.levels());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn degenerate_structures_match_ffe(seed in 0u64..1000, taps in 1usize..12) {
            let frame = gen_pam4(1500, 400, seed).unwrap();
            let mut x = convolve(&frame.amplitudes(), &[0.1, 1.0, 0.4], 1);
            add_awgn(&mut x, 20.0, seed + 1);
            let ffe = ffe_lms(&x, &frame, &FfeConfig { n_taps: taps, ..FfeConfig::default() }).unwrap();
            let dfe = dfe_lms(&x, &frame, &DfeConfig { n_ff: taps, n_fb: 0, ..DfeConfig::default() }).unwrap();
            let vnle = vnle_lms(&x, &frame, &VnleConfig { m1: taps, m2: 0, m3: 0, ..VnleConfig::default() }).unwrap();
            prop_assert_eq!(&ffe.y, &dfe.y);
            prop_assert_eq!(&ffe.y, &vnle.y);
            prop_assert_eq!(&ffe.taps, &vnle.taps);
        }

        #[test]
        fn normalization_is_affine_invariant(seed in 0u64..1000, gain in 0.01f64..100.0, offset in -5.0f64..5.0) {
            let frame = gen_pam4(600, 200, seed).unwrap();
            let x = convolve(&frame.amplitudes(), &[0.2, 1.0], 1);
            let y: Vec<f64> = x.iter().map(|v| gain * v + offset).collect();
            let a = normalize(&x, &frame).unwrap();
            let b = normalize(&y, &frame).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
