//! Speech-emotion front end: STFT magnitude, median-filter harmonic/percussive
//! separation, Mel projection and the time-averaged `[3 x n_mels]` feature map.

use std::io::{Read, Seek, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, PathContext, Result};

/// Additive floor used in the log and in mask denominators.
pub const EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::ValueError("sample rate must be positive".into()));
        }
        if let Some(s) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::ValueError(format!("sample {s} not finite or outside [-1,1]")));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Writes 16-bit PCM mono RIFF.
    pub fn write_wav<W: Write + Seek>(&self, w: W) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::new(w, spec)?;
        for &s in &self.samples {
            writer.write_sample(quantize_i16(s))?;
        }
        writer.finalize()?;
        Ok(())
    }

    pub fn write_wav_file(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path).at(path)?);
        self.write_wav(f)
    }

    pub fn read_wav<R: Read>(r: R) -> Result<Self> {
        let reader = hound::WavReader::new(r)?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(Error::Format(format!(
                "expected 16-bit PCM mono, got {} ch / {} bit",
                spec.channels, spec.bits_per_sample
            )));
        }
        let samples = reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        AudioClip::new(samples, spec.sample_rate)
    }

    pub fn read_wav_file(path: &Path) -> Result<Self> {
        AudioClip::read_wav(std::io::BufReader::new(std::fs::File::open(path).at(path)?))
    }
}

pub fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Snaps samples onto the 16-bit grid so a clip survives a WAV round trip unchanged.
pub fn snap_to_pcm16(samples: &mut [f64]) {
    for s in samples {
        *s = quantize_i16(*s) as f64 / 32768.0;
    }
}

/// Non-negative `[freq_bin][frame]` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Vec<Vec<f64>>,
    pub frame_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn n_frames(&self) -> usize {
        self.magnitudes.first().map_or(0, Vec::len)
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_size as f64
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.magnitudes.iter().flatten().map(|m| m * m).sum()
    }

    fn with_magnitudes(&self, magnitudes: Vec<Vec<f64>>) -> Spectrogram {
        Spectrogram { magnitudes, ..self.clone() }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn stft_magnitude(clip: &AudioClip, frame_size: usize, hop_size: usize) -> Result<Spectrogram> {
    if frame_size < 2 || !frame_size.is_power_of_two() {
        return Err(Error::BadFrameParams(format!("frame size {frame_size} is not a power of two")));
    }
    if hop_size == 0 || hop_size > frame_size {
        return Err(Error::BadFrameParams(format!("hop {hop_size} not in 1..={frame_size}")));
    }
    let len = clip.samples.len();
    if len < frame_size {
        return Err(Error::ClipTooShort { len, frame: frame_size });
    }
    let n_frames = (len - frame_size) / hop_size + 1;
    let n_bins = frame_size / 2 + 1;
    let window = hann(frame_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_size);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut magnitudes = vec![vec![0.0; n_frames]; n_bins];
    for t in 0..n_frames {
        let start = t * hop_size;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(clip.samples[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, row) in magnitudes.iter_mut().enumerate() {
            row[t] = buf[k].norm();
        }
    }
    Ok(Spectrogram { magnitudes, frame_size, hop_size, sample_rate: clip.sample_rate })
}

/// Running median over a window truncated at the edges. Even-sized edge
/// windows take the mean of the two middle values.
fn median_filter_1d(xs: &[f64], kernel: usize, out: &mut [f64], window: &mut Vec<f64>) {
    let half = kernel / 2;
    let n = xs.len();
    let insert = |w: &mut Vec<f64>, v: f64| {
        let at = w.partition_point(|x| x.total_cmp(&v).is_lt());
        w.insert(at, v);
    };
    window.clear();
    for &v in &xs[..half.min(n)] {
        insert(window, v);
    }
    for i in 0..n {
        if i + half < n {
            insert(window, xs[i + half]);
        }
        if i > half {
            let v = xs[i - half - 1];
            let at = window.partition_point(|x| x.total_cmp(&v).is_lt());
            window.remove(at);
        }
        let m = window.len();
        out[i] = if m % 2 == 1 { window[m / 2] } else { 0.5 * (window[m / 2 - 1] + window[m / 2]) };
    }
}

/// Soft masks for the median-filtered enhancements. Both carry half of the
/// floor so `harmonic + percussive == spec` holds even at silent cells.
#[derive(Debug, Clone)]
pub struct HpssMasks {
    pub harmonic: Vec<Vec<f64>>,
    pub percussive: Vec<Vec<f64>>,
}

pub fn hpss_masks(spec: &Spectrogram, kernel_time: usize, kernel_freq: usize) -> Result<HpssMasks> {
    for (name, k) in [("kernel_time", kernel_time), ("kernel_freq", kernel_freq)] {
        if k < 3 || k % 2 == 0 {
            return Err(Error::BadKernel(format!("{name} = {k}; must be odd and >= 3")));
        }
    }
    let (n_bins, n_frames) = (spec.n_bins(), spec.n_frames());
    let mut scratch = Vec::with_capacity(kernel_time.max(kernel_freq));

    // Median along time, per frequency row.
    let mut h = vec![vec![0.0; n_frames]; n_bins];
    for (row, out) in spec.magnitudes.iter().zip(h.iter_mut()) {
        median_filter_1d(row, kernel_time, out, &mut scratch);
    }
    // Median along frequency, per frame column.
    let mut p = vec![vec![0.0; n_frames]; n_bins];
    let mut col = vec![0.0; n_bins];
    let mut col_out = vec![0.0; n_bins];
    for t in 0..n_frames {
        for k in 0..n_bins {
            col[k] = spec.magnitudes[k][t];
        }
        median_filter_1d(&col, kernel_freq, &mut col_out, &mut scratch);
        for k in 0..n_bins {
            p[k][t] = col_out[k];
        }
    }

    for k in 0..n_bins {
        for t in 0..n_frames {
            let h2 = h[k][t] * h[k][t];
            let p2 = p[k][t] * p[k][t];
            let denom = h2 + p2 + EPS;
            h[k][t] = (h2 + 0.5 * EPS) / denom;
            p[k][t] = (p2 + 0.5 * EPS) / denom;
        }
    }
    Ok(HpssMasks { harmonic: h, percussive: p })
}

/// Median-filter harmonic/percussive separation with soft masks.
pub fn hpss_median(
    spec: &Spectrogram,
    kernel_time: usize,
    kernel_freq: usize,
) -> Result<(Spectrogram, Spectrogram)> {
    let masks = hpss_masks(spec, kernel_time, kernel_freq)?;
    let apply = |mask: &Vec<Vec<f64>>| {
        spec.magnitudes
            .iter()
            .zip(mask)
            .map(|(row, m)| row.iter().zip(m).map(|(a, b)| a * b).collect())
            .collect()
    };
    Ok((spec.with_magnitudes(apply(&masks.harmonic)), spec.with_magnitudes(apply(&masks.percussive))))
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-scale filterbank, `[n_mels][n_bins]`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Vec<Vec<f64>>,
    /// Edge frequencies, `n_mels + 2` points; band `m` peaks at `edges[m + 1]`.
    pub edges: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_bins: usize, frame_size: usize, sample_rate: u32, n_mels: usize, f_min: f64, f_max: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(Error::BadBand(format!("need 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]")));
        }
        if n_mels < 4 {
            return Err(Error::BadBand(format!("n_mels = {n_mels}; need at least 4")));
        }
        let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / frame_size as f64;
        let weights = (0..n_mels)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= l || f >= r {
                            0.0
                        } else if f <= c {
                            (f - l) / (c - l)
                        } else {
                            (r - f) / (r - c)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(MelFilterbank { weights, edges })
    }

    pub fn center(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    /// Width of band `m` from its left to its right edge.
    pub fn band_width(&self, m: usize) -> f64 {
        self.edges[m + 2] - self.edges[m]
    }
}

/// `[n_mels][frame]` Mel power spectrogram.
pub type MelSpectrogram = Vec<Vec<f64>>;

pub fn apply_filterbank(spec: &Spectrogram, bank: &MelFilterbank) -> MelSpectrogram {
    let n_frames = spec.n_frames();
    bank.weights
        .iter()
        .map(|w| {
            let mut out = vec![0.0; n_frames];
            for (k, &wk) in w.iter().enumerate() {
                if wk == 0.0 {
                    continue;
                }
                for (o, &m) in out.iter_mut().zip(&spec.magnitudes[k]) {
                    *o += wk * m * m;
                }
            }
            out
        })
        .collect()
}

pub fn mel_project(spec: &Spectrogram, n_mels: usize, f_min: f64, f_max: f64) -> Result<MelSpectrogram> {
    let bank = MelFilterbank::new(spec.n_bins(), spec.frame_size, spec.sample_rate, n_mels, f_min, f_max)?;
    Ok(apply_filterbank(spec, &bank))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    pub frame_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub kernel_time: usize,
    pub kernel_freq: usize,
    pub standardize: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            frame_size: 1024,
            hop_size: 256,
            n_mels: 64,
            f_min: 50.0,
            f_max: 8000.0,
            kernel_time: 17,
            kernel_freq: 17,
            standardize: false,
        }
    }
}

/// Rows are the time-averaged log-Mel vectors of the harmonic stream, the
/// percussive stream and the unseparated signal, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub image: [Vec<f64>; 3],
    pub n_mels: usize,
}

impl FeatureMap {
    pub fn flatten(&self) -> Vec<f64> {
        self.image.iter().flatten().copied().collect()
    }

    pub fn distance(&self, other: &FeatureMap) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn mean_log(mel: &MelSpectrogram) -> Vec<f64> {
    mel.iter()
        .map(|band| band.iter().map(|v| (v + EPS).ln()).sum::<f64>() / band.len() as f64)
        .collect()
}

fn standardize_row(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in row.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

pub fn build_feature_map(clip: &AudioClip, params: &FeatureParams) -> Result<FeatureMap> {
    let spec = stft_magnitude(clip, params.frame_size, params.hop_size)?;
    let (harm, perc) = hpss_median(&spec, params.kernel_time, params.kernel_freq)?;
    let bank = MelFilterbank::new(spec.n_bins(), spec.frame_size, spec.sample_rate, params.n_mels, params.f_min, params.f_max)?;
    let mut image = [
        mean_log(&apply_filterbank(&harm, &bank)),
        mean_log(&apply_filterbank(&perc, &bank)),
        mean_log(&apply_filterbank(&spec, &bank)),
    ];
    if params.standardize {
        for row in image.iter_mut() {
            standardize_row(row);
        }
    }
    Ok(FeatureMap { image, n_mels: params.n_mels })
}

/// Fraction of squared magnitude carried by the harmonic stream.
pub fn harmonic_share(harmonic: &Spectrogram, percussive: &Spectrogram) -> f64 {
    let (h, p) = (harmonic.energy(), percussive.energy());
    h / (h + p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const SR: u32 = 16_000;

    fn sine(freq: f64, n: usize, amp: f64) -> AudioClip {
        AudioClip::new((0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / SR as f64).sin()).collect(), SR).unwrap()
    }

    fn clicks(n: usize, period: usize) -> AudioClip {
        let mut s = vec![0.0; n];
        for i in (period / 2..n).step_by(period) {
            s[i] = 0.9;
        }
        AudioClip::new(s, SR).unwrap()
    }

    /// Direct O(N^2) DFT of one windowed frame.
    fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        let w = hann(n);
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, x) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += x * w[i] * a.cos();
                    im += x * w[i] * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    }

    #[test]
    fn zero_clip_zero_spectrogram() {
        let clip = AudioClip::new(vec![0.0; 4096], SR).unwrap();
        let s = stft_magnitude(&clip, 1024, 256).unwrap();
        assert_eq!(s.n_frames(), (4096 - 1024) / 256 + 1);
        assert_eq!(s.n_bins(), 513);
        assert!(s.magnitudes.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn stft_matches_direct_dft_and_peaks_at_bin() {
        let k = 37;
        let clip = sine(k as f64 * SR as f64 / 1024.0, 5000, 1.0);
        let s = stft_magnitude(&clip, 1024, 300).unwrap();
        assert_eq!(s.n_frames(), (5000 - 1024) / 300 + 1);
        let direct = dft_magnitudes(&clip.samples[300..1324]);
        for (b, d) in direct.iter().enumerate() {
            assert!((s.magnitudes[b][1] - d).abs() < 1e-8);
        }
        for t in 0..s.n_frames() {
            let col: Vec<f64> = (0..s.n_bins()).map(|b| s.magnitudes[b][t]).collect();
            assert_eq!(argmax(&col), k);
        }
    }

    #[test]
    fn stft_errors() {
        let clip = AudioClip::new(vec![0.0; 512], SR).unwrap();
        assert!(matches!(stft_magnitude(&clip, 1024, 256), Err(Error::ClipTooShort { .. })));
        assert!(matches!(stft_magnitude(&clip, 300, 100), Err(Error::BadFrameParams(_))));
        assert!(matches!(stft_magnitude(&clip, 256, 0), Err(Error::BadFrameParams(_))));
        assert!(matches!(stft_magnitude(&clip, 256, 257), Err(Error::BadFrameParams(_))));
    }

    #[test]
    fn constant_spectrogram_splits_evenly() {
        let spec = Spectrogram { magnitudes: vec![vec![2.5; 20]; 30], frame_size: 64, hop_size: 16, sample_rate: SR };
        let masks = hpss_masks(&spec, 5, 7).unwrap();
        for (h, p) in masks.harmonic.iter().flatten().zip(masks.percussive.iter().flatten()) {
            assert!((h - 0.5).abs() < 1e-12 && (p - 0.5).abs() < 1e-12);
        }
        let (h, p) = hpss_median(&spec, 5, 7).unwrap();
        assert_eq!(h, p);
    }

    #[test]
    fn bad_kernels() {
        let spec = Spectrogram { magnitudes: vec![vec![1.0; 4]; 4], frame_size: 8, hop_size: 2, sample_rate: SR };
        assert!(matches!(hpss_median(&spec, 4, 3), Err(Error::BadKernel(_))));
        assert!(matches!(hpss_median(&spec, 3, 1), Err(Error::BadKernel(_))));
    }

    #[test]
    fn median_filter_reference() {
        let xs = [5.0, 1.0, 4.0, 2.0, 3.0];
        let mut out = [0.0; 5];
        median_filter_1d(&xs, 3, &mut out, &mut Vec::new());
        // edges: median{5,1}=3, median{2,3}=2.5
        assert_eq!(out, [3.0, 4.0, 2.0, 3.0, 2.5]);
    }

    #[test]
    fn sustained_sine_is_harmonic() {
        let clip = sine(440.0, 32_000, 0.5);
        let s = stft_magnitude(&clip, 1024, 256).unwrap();
        let (h, p) = hpss_median(&s, 17, 17).unwrap();
        assert!(harmonic_share(&h, &p) > 0.7, "{}", harmonic_share(&h, &p));
    }

    #[test]
    fn click_train_is_percussive() {
        let clip = clicks(32_000, 4000);
        let s = stft_magnitude(&clip, 1024, 256).unwrap();
        let (h, p) = hpss_median(&s, 17, 17).unwrap();
        assert!(1.0 - harmonic_share(&h, &p) > 0.7, "{}", harmonic_share(&h, &p));
    }

    #[test]
    fn mel_zero_and_band_errors() {
        let spec = Spectrogram { magnitudes: vec![vec![0.0; 3]; 513], frame_size: 1024, hop_size: 256, sample_rate: SR };
        let mel = mel_project(&spec, 16, 50.0, 8000.0).unwrap();
        assert_eq!(mel.len(), 16);
        assert!(mel.iter().flatten().all(|&v| v == 0.0));
        assert!(matches!(mel_project(&spec, 16, 300.0, 300.0), Err(Error::BadBand(_))));
        assert!(matches!(mel_project(&spec, 16, 0.0, 9000.0), Err(Error::BadBand(_))));
        assert!(matches!(mel_project(&spec, 3, 0.0, 8000.0), Err(Error::BadBand(_))));
    }

    #[test]
    fn mel_peak_near_sine_frequency() {
        for f in [300.0, 1000.0, 2500.0, 6000.0] {
            let s = stft_magnitude(&sine(f, 8192, 0.8), 1024, 256).unwrap();
            let bank = MelFilterbank::new(513, 1024, SR, 40, 50.0, 8000.0).unwrap();
            let mel = apply_filterbank(&s, &bank);
            let totals: Vec<f64> = mel.iter().map(|b| b.iter().sum()).collect();
            let m = argmax(&totals);
            assert!((bank.center(m) - f).abs() <= bank.band_width(m), "f={f} center={}", bank.center(m));
        }
    }

    #[test]
    fn zero_clip_feature_map_is_log_eps() {
        let clip = AudioClip::new(vec![0.0; 8000], SR).unwrap();
        let fm = build_feature_map(&clip, &FeatureParams::default()).unwrap();
        assert_eq!(fm.image.len(), 3);
        for row in &fm.image {
            assert_eq!(row.len(), 64);
            for v in row {
                assert!((v - EPS.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardized_rows() {
        let fm = build_feature_map(&sine(700.0, 8000, 0.3), &FeatureParams { standardize: true, ..Default::default() }).unwrap();
        for row in &fm.image {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wav_round_trip() {
        let mut samples: Vec<f64> = sine(440.0, 1600, 0.7).samples;
        snap_to_pcm16(&mut samples);
        let clip = AudioClip::new(samples, SR).unwrap();
        let mut buf = std::io::Cursor::new(Vec::new());
        clip.write_wav(&mut buf).unwrap();
        let bytes = buf.into_inner();
        assert_eq!(&bytes[0..4], b"RIFF");
        let back = AudioClip::read_wav(&bytes[..]).unwrap();
        assert_eq!(back, clip);
    }

    proptest::proptest! {
        #[test]
        fn sliding_median_matches_sorting(xs in proptest::collection::vec(-5.0f64..5.0, 1..40), half in 1usize..6) {
            let kernel = 2 * half + 1;
            let mut out = vec![0.0; xs.len()];
            median_filter_1d(&xs, kernel, &mut out, &mut Vec::new());
            for i in 0..xs.len() {
                let mut w = xs[i.saturating_sub(half)..(i + half + 1).min(xs.len())].to_vec();
                w.sort_by(f64::total_cmp);
                let m = w.len();
                let want = if m % 2 == 1 { w[m / 2] } else { 0.5 * (w[m / 2 - 1] + w[m / 2]) };
                proptest::prop_assert_eq!(out[i], want);
            }
        }
    }
}
