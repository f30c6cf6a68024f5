//! Globally adaptive Gauss–Kronrod (G10/K21) quadrature plus the
//! substitutions needed for power singularities at the origin and
//! algebraic or fast decay at infinity.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_452_802,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

impl Integral {
    pub const ZERO: Integral = Integral {
        value: 0.0,
        error: 0.0,
        evals: 0,
    };

    pub fn exact(value: f64) -> Self {
        Integral {
            value,
            error: 0.0,
            evals: 0,
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Integral {
            value: self.value * c,
            error: self.error * c.abs(),
            evals: self.evals,
        }
    }
}

impl std::ops::Add for Integral {
    type Output = Integral;
    fn add(self, o: Integral) -> Integral {
        Integral {
            value: self.value + o.value,
            error: self.error + o.error,
            evals: self.evals + o.evals,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_evals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-8,
            abs: 0.0,
            max_evals: 1_000_000,
        }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Tolerance {
            rel,
            ..Tolerance::default()
        }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    let mut kron = fc * WGK[10];
    let mut gauss = 0.0;
    let mut res_abs = kron.abs();
    for j in 0..10 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv1[j] = f1;
        fv2[j] = f2;
        kron += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (kron - gauss) * h;
    let ah = h.abs();
    (kron * h, rescale_error(err, res_abs * ah, res_asc * ah))
}

/// Adaptive quadrature of `f` over the finite interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    if a == b {
        return Ok(Integral::ZERO);
    }
    let (v, e) = gk21(&mut f, a, b);
    if !v.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    let mut evals = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    // Segments too narrow to split are retired here.
    let mut frozen_err = 0.0;
    let mut frozen_val = 0.0;
    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err <= target {
            break;
        }
        let Some(seg) = heap.pop() else {
            break;
        };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) || (seg.b - seg.a).abs() < 1e-15 * mid.abs() {
            frozen_err += seg.error;
            frozen_val += seg.value;
            if frozen_err > target {
                return Err(Error::QuadratureFailure(format!(
                    "roundoff limit near x = {mid}: error {total_err:.3e} > target {target:.3e}"
                )));
            }
            continue;
        }
        if evals + 42 > tol.max_evals {
            return Err(Error::QuadratureFailure(format!(
                "node cap {} reached on [{a}, {b}]: error {total_err:.3e} > target {target:.3e}",
                tol.max_evals
            )));
        }
        let (v1, e1) = gk21(&mut f, seg.a, mid);
        let (v2, e2) = gk21(&mut f, mid, seg.b);
        evals += 42;
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::QuadratureFailure(format!(
                "non-finite integrand near x = {mid}"
            )));
        }
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }
    // recompute from the leaves to shed accumulated rounding in `total`
    let mut leaves: Vec<Segment> = heap.into_vec();
    leaves.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = frozen_val + leaves.iter().map(|s| s.value).sum::<f64>();
    let error = frozen_err + leaves.iter().map(|s| s.error).sum::<f64>();
    Ok(Integral { value, error, evals })
}

/// `∫_0^b f(x) dx` where `f(x) ~ x^p` near the origin (`p > -1`).
/// Substitutes `x = b v^k` with `k = 1/(1+p)` so the leading power becomes
/// constant.
pub fn integrate_from_zero<F: FnMut(f64) -> f64>(
    mut f: F,
    b: f64,
    origin_power: f64,
    tol: Tolerance,
) -> Result<Integral> {
    if origin_power <= -1.0 {
        return Err(Error::Divergence(format!(
            "origin power {origin_power} is not integrable"
        )));
    }
    let k = if origin_power.abs() < 1e-12 { 1.0 } else { 1.0 / (1.0 + origin_power) };
    if (k - 1.0).abs() < 1e-15 {
        return integrate(f, 0.0, b, tol);
    }
    integrate(
        |v| {
            if v <= 0.0 {
                return 0.0;
            }
            let vk1 = v.powf(k - 1.0);
            let x = b * v * vk1;
            let y = f(x);
            if y == 0.0 {
                0.0
            } else {
                y * b * k * vk1
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Tail behaviour of an integrand on a half-line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    /// `|f(x)| ~ x^{-q}` with `q > 1`.
    Power(f64),
    /// Gaussian or exponential decay.
    Fast,
}

/// `∫_a^∞ f(x) dx` for `a > 0`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, decay: Decay, tol: Tolerance) -> Result<Integral> {
    match decay {
        Decay::Power(q) => {
            if q <= 1.0 {
                return Err(Error::Divergence(format!("tail power {q} is not integrable")));
            }
            // x = a v^{-k}, k = 1/(q-1): integrand ~ const near v = 0
            let k = 1.0 / (q - 1.0);
            integrate(
                |v| {
                    if v <= 0.0 {
                        return 0.0;
                    }
                    let x = a * v.powf(-k);
                    let y = f(x);
                    if y == 0.0 || !x.is_finite() {
                        0.0
                    } else {
                        y * k * x / v
                    }
                },
                0.0,
                1.0,
                tol,
            )
        }
        Decay::Fast => integrate(
            |v| {
                if v >= 1.0 {
                    return 0.0;
                }
                let w = 1.0 - v;
                let x = a + v / w;
                let y = f(x);
                if y == 0.0 {
                    0.0
                } else {
                    y / (w * w)
                }
            },
            0.0,
            1.0,
            tol,
        ),
    }
}

/// `∫_0^∞ f`, splitting at `split`.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(
    mut f: F,
    origin_power: f64,
    decay: Decay,
    split: f64,
    tol: Tolerance,
) -> Result<Integral> {
    let head = integrate_from_zero(&mut f, split, origin_power, tol)?;
    let tail = integrate_to_infinity(&mut f, split, decay, tol)?;
    Ok(head + tail)
}

/// Sum of adaptive integrals over consecutive panels `[x_i, x_{i+1}]`.
pub fn integrate_panels<F: FnMut(f64) -> f64>(mut f: F, knots: &[f64], tol: Tolerance) -> Result<Integral> {
    let mut acc = Integral::ZERO;
    for w in knots.windows(2) {
        acc = acc + integrate(&mut f, w[0], w[1], tol)?;
    }
    Ok(acc)
}
