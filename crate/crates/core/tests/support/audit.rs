//! Central-difference audit of every differentiable op and loss in 64-bit mode.
//!
//! Inputs are drawn away from the kinks of `abs`/`relu`/clamps so the
//! numeric derivative is well defined.

use flashlab::autodiff::{grad_check, Conv2dSpec, Padding, Tensor};
use flashlab::formation::{ambient_color, diff};
use flashlab::highres::{ratio_forward_tensor, ratio_inverse_tensor};
use flashlab::losses::{
    decomposition_loss, generation_loss, highres_loss, l1_loss, multiscale_gradient_loss, temperature_loss, Cycle,
    DecompositionPrediction, DecompositionTarget, ExactDecomposer, GenerationTarget, LossWeights,
};
use flashlab::networks::{EncoderDecoder, EncoderDecoderConfig};
use flashlab::Result;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

type T64 = Tensor<f64>;

struct Gen(ChaCha8Rng);

impl Gen {
    fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> T64 {
        let n = shape.iter().product();
        Tensor::new((0..n).map(|_| self.0.random_range(lo..hi)).collect(), shape).unwrap()
    }

    /// Magnitudes in `[0.1, 1)` with random sign.
    fn signed(&mut self, shape: &[usize]) -> T64 {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let m = self.0.random_range(0.1..1.0);
                if self.0.random_bool(0.5) { m } else { -m }
            })
            .collect();
        Tensor::new(data, shape).unwrap()
    }

    /// `base` moved by `[0.05, 0.2)`, staying positive and, from below 1, below 1.
    fn near(&mut self, base: &T64) -> T64 {
        let data = base
            .data()
            .iter()
            .map(|&v| {
                let m = self.0.random_range(0.05..0.2);
                if v > 0.25 && (v + m >= 1.0 || self.0.random_bool(0.5)) { v - m } else { v + m }
            })
            .collect();
        Tensor::new(data, base.shape()).unwrap()
    }
}

/// `sum(y * w)` for fixed random `w`, so every output element matters.
fn contract(y: &T64, w: &T64) -> Result<T64> {
    Ok(y.mul(w)?.sum())
}

/// One audited function: a name and a factory drawing a fresh instance.
type Instance = (Box<dyn Fn(&T64) -> Result<T64>>, T64);
type Case = (&'static str, Box<dyn Fn(&mut Gen) -> Instance>);

fn unary(name: &'static str, shape: &'static [usize], op: fn(&T64) -> Result<T64>, out: &'static [usize]) -> Case {
    (
        name,
        Box::new(move |g: &mut Gen| {
            let w = g.uniform(out, -1.0, 1.0);
            let x = g.signed(shape);
            (Box::new(move |x: &T64| contract(&op(x)?, &w)) as Box<dyn Fn(&T64) -> Result<T64>>, x)
        }),
    )
}

fn image_cases() -> Vec<Case> {
    const IMG: &[usize] = &[2, 3, 4, 4];
    vec![
        unary("abs", IMG, |x| Ok(x.abs()), IMG),
        unary("relu", IMG, |x| Ok(x.relu()), IMG),
        unary("leaky_relu", IMG, |x| Ok(x.leaky_relu(0.1)), IMG),
        unary("sigmoid", IMG, |x| Ok(x.sigmoid()), IMG),
        unary("softplus", IMG, |x| Ok(x.softplus()), IMG),
        unary("affine", IMG, |x| Ok(x.affine(1.7, -0.3)), IMG),
        unary("scale", IMG, |x| Ok(x.scale(-2.5)), IMG),
        unary("sum", IMG, |x| Ok(x.sum()), &[1]),
        unary("mean", IMG, |x| Ok(x.mean()), &[1]),
        unary("global_avg_pool", IMG, |x| x.global_avg_pool(), &[2, 3]),
        unary("reshape", IMG, |x| x.reshape(&[6, 16]), &[6, 16]),
        unary("expand", &[2, 3, 1, 1], |x| x.expand(&[2, 3, 4, 4]), IMG),
        unary("slice_channels", IMG, |x| x.slice_channels(1, 2), &[2, 2, 4, 4]),
        unary("concat", IMG, |x| Tensor::concat(&[x.clone(), x.scale(2.0), x.slice_channels(0, 1)?]), &[2, 7, 4, 4]),
        unary("upsample_nearest2", IMG, |x| x.upsample_nearest2(), &[2, 3, 8, 8]),
        unary("upsample_bilinear2", IMG, |x| x.upsample_bilinear2(), &[2, 3, 8, 8]),
        unary("avg_pool2", IMG, |x| x.avg_pool2(), &[2, 3, 2, 2]),
        unary("diff_x", IMG, |x| x.diff_x(), IMG),
        unary("diff_y", IMG, |x| x.diff_y(), IMG),
    ]
}

fn binary_cases() -> Vec<Case> {
    fn case(name: &'static str, op: fn(&T64, &T64) -> Result<T64>, other_first: bool) -> Case {
        (
            name,
            Box::new(move |g: &mut Gen| {
                let shape = [2, 3, 4, 4];
                let w = g.uniform(&shape, -1.0, 1.0);
                let other = g.uniform(&shape, 0.5, 2.0);
                let x = g.uniform(&shape, 0.5, 2.0);
                let f = move |x: &T64| {
                    let y = if other_first { op(&other, x)? } else { op(x, &other)? };
                    contract(&y, &w)
                };
                (Box::new(f) as Box<dyn Fn(&T64) -> Result<T64>>, x)
            }),
        )
    }
    vec![
        case("add", |a, b| a.add(b), false),
        case("sub", |a, b| a.sub(b), true),
        case("mul", |a, b| a.mul(b), false),
        case("div (numerator)", |a, b| a.div(b), false),
        case("div (denominator)", |a, b| a.div(b), true),
    ]
}

fn conv_cases() -> Vec<Case> {
    fn conv(name: &'static str, stride: usize, padding: Padding, wrt: usize) -> Case {
        (
            name,
            Box::new(move |g: &mut Gen| {
                let spec = Conv2dSpec::same(3, stride).with_padding(padding);
                let x = g.signed(&[2, 3, 6, 6]);
                let k = g.signed(&[4, 3, 3, 3]);
                let b = g.signed(&[4]);
                let out = if stride == 1 { 6 } else { 3 };
                let w = g.uniform(&[2, 4, out, out], -1.0, 1.0);
                let point = [x.clone(), k.clone(), b.clone()][wrt].clone();
                let f = move |v: &T64| {
                    let (x, k, b) = match wrt {
                        0 => (v, &k, &b),
                        1 => (&x, v, &b),
                        _ => (&x, &k, v),
                    };
                    contract(&x.conv2d(k, Some(b), spec)?, &w)
                };
                (Box::new(f) as Box<dyn Fn(&T64) -> Result<T64>>, point)
            }),
        )
    }
    fn linear(name: &'static str, wrt: usize) -> Case {
        (
            name,
            Box::new(move |g: &mut Gen| {
                let (x, m, b) = (g.signed(&[3, 5]), g.signed(&[4, 5]), g.signed(&[4]));
                let w = g.uniform(&[3, 4], -1.0, 1.0);
                let point = [x.clone(), m.clone(), b.clone()][wrt].clone();
                let f = move |v: &T64| {
                    let (x, m, b) = match wrt {
                        0 => (v, &m, &b),
                        1 => (&x, v, &b),
                        _ => (&x, &m, v),
                    };
                    contract(&x.linear(m, b)?, &w)
                };
                (Box::new(f) as Box<dyn Fn(&T64) -> Result<T64>>, point)
            }),
        )
    }
    vec![
        conv("conv2d input", 1, Padding::Zero, 0),
        conv("conv2d weight", 1, Padding::Zero, 1),
        conv("conv2d bias", 1, Padding::Zero, 2),
        conv("conv2d stride 2", 2, Padding::Zero, 0),
        conv("conv2d replicate input", 1, Padding::Replicate, 0),
        conv("conv2d replicate weight", 2, Padding::Replicate, 1),
        linear("linear input", 0),
        linear("linear weight", 1),
        linear("linear bias", 2),
    ]
}

/// Scene tensors with positive shadings and interior temperatures.
struct Scene {
    albedo: T64,
    s_a: T64,
    s_f: T64,
    t: T64,
    c_a: T64,
    photo: T64,
}

fn scene(g: &mut Gen, n: usize, h: usize) -> Scene {
    let albedo = g.uniform(&[n, 3, h, h], 0.1, 0.9);
    let s_a = g.uniform(&[n, 1, h, h], 0.2, 1.5);
    let s_f = g.uniform(&[n, 1, h, h], 0.2, 1.5);
    let t = g.uniform(&[n, 1], 0.05, 0.95);
    let c_a = ambient_color(&t).unwrap();
    let photo = diff::compose(&albedo, &s_a, &s_f, &c_a).unwrap().0;
    Scene { albedo, s_a, s_f, t, c_a, photo }
}

fn boxed(f: impl Fn(&T64) -> Result<T64> + 'static) -> Box<dyn Fn(&T64) -> Result<T64>> {
    Box::new(f)
}

fn formation_cases() -> Vec<Case> {
    vec![
        ("ambient_color", Box::new(|g: &mut Gen| {
            let w = g.uniform(&[4, 3], -1.0, 1.0);
            (boxed(move |t| contract(&ambient_color(t)?, &w)), g.uniform(&[4, 1], 0.02, 0.98))
        })),
        ("implied_albedo (S_A)", Box::new(|g: &mut Gen| {
            let s = scene(g, 2, 4);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            (boxed(move |x| contract(&diff::implied_albedo(&s.photo, x, &s.s_f, &s.c_a)?, &w)), s.s_a.clone())
        })),
        ("implied_albedo (S_F)", Box::new(|g: &mut Gen| {
            let s = scene(g, 2, 4);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            (boxed(move |x| contract(&diff::implied_albedo(&s.photo, &s.s_a, x, &s.c_a)?, &w)), s.s_f.clone())
        })),
        ("split (P)", Box::new(|g: &mut Gen| {
            let s = scene(g, 2, 4);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            let p = g.near(&s.photo);
            let f = move |p: &T64| {
                let (r, a, fl) = diff::split(p, &s.s_a, &s.s_f, &s.c_a)?;
                contract(&r.add(&a)?.sub(&fl.scale(0.5))?, &w)
            };
            (boxed(f), p)
        })),
        ("split (c_A)", Box::new(|g: &mut Gen| {
            let s = scene(g, 2, 4);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            let f = move |c: &T64| contract(&diff::split(&s.photo, &s.s_a, &s.s_f, c)?.1, &w);
            let c = s.c_a.clone();
            (boxed(f), c)
        })),
        ("compose (albedo)", Box::new(|g: &mut Gen| {
            let s = scene(g, 2, 4);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            let f = move |r: &T64| contract(&diff::compose(r, &s.s_a, &s.s_f, &s.c_a)?.0, &w);
            let r = s.albedo.clone();
            (boxed(f), r)
        })),
        ("generate (S_F)", Box::new(|g: &mut Gen| {
            let s = scene(g, 2, 4);
            let no_flash = s.albedo.mul(&s.s_a).unwrap();
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            let f = move |sf: &T64| {
                let (fl, p) = diff::generate(&no_flash, &s.albedo, sf, &s.c_a)?;
                contract(&fl.add(&p)?, &w)
            };
            let sf = s.s_f.clone();
            (boxed(f), sf)
        })),
        ("relight (albedo)", Box::new(|g: &mut Gen| {
            let s = scene(g, 2, 4);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            let target = ambient_color(&g.uniform(&[2, 1], 0.0, 1.0)).unwrap();
            let f = move |r: &T64| contract(&diff::relight(r, &s.s_a, &s.s_f, &target, 0.7, 1.3)?, &w);
            let r = s.albedo.clone();
            (boxed(f), r)
        })),
        ("ratio_forward", Box::new(|g: &mut Gen| {
            let p = g.uniform(&[2, 3, 4, 4], 0.2, 2.0);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            let a = g.uniform(&[2, 3, 4, 4], 0.0, 0.2);
            (boxed(move |a| contract(&ratio_forward_tensor(a, &p)?, &w)), a)
        })),
        ("ratio_inverse", Box::new(|g: &mut Gen| {
            let p = g.uniform(&[2, 3, 4, 4], 0.2, 2.0);
            let w = g.uniform(&[2, 3, 4, 4], -1.0, 1.0);
            let r = g.uniform(&[2, 3, 4, 4], 0.05, 0.95);
            (boxed(move |r| contract(&ratio_inverse_tensor(r, &p)?, &w)), r)
        })),
    ]
}

fn loss_cases() -> Vec<Case> {
    let w = LossWeights::default();
    vec![
        ("L1", Box::new(|g: &mut Gen| {
            let target = g.uniform(&[2, 3, 4, 4], 0.2, 1.0);
            let x = g.near(&target);
            (boxed(move |x| l1_loss(x, &target)), x)
        })),
        ("multiscale gradient (M=4)", Box::new(|g: &mut Gen| {
            let target = g.uniform(&[2, 3, 8, 8], 0.0, 1.0);
            let x = g.uniform(&[2, 3, 8, 8], 0.0, 1.0);
            (boxed(move |x| multiscale_gradient_loss(x, &target, 4)), x)
        })),
        ("temperature", Box::new(|g: &mut Gen| {
            let target = g.uniform(&[4, 1], 0.3, 0.7);
            let x = g.near(&target);
            (boxed(move |x| temperature_loss(x, &target)), x)
        })),
        ("decomposition (S_A)", Box::new(move |g: &mut Gen| decomposition_case(g, 0, w))),
        ("decomposition (S_F)", Box::new(move |g: &mut Gen| decomposition_case(g, 1, w))),
        ("decomposition (t)", Box::new(move |g: &mut Gen| decomposition_case(g, 2, w))),
        ("generation, exact decomposer", Box::new(move |g: &mut Gen| generation_case(g, true, w))),
        ("generation, no cycle", Box::new(move |g: &mut Gen| generation_case(g, false, w))),
        ("highres", Box::new(move |g: &mut Gen| {
            let s = scene(g, 1, 8);
            let ambient = diff::compose(&s.albedo, &s.s_a, &s.s_f, &s.c_a).unwrap().1;
            let r = g.uniform(&[1, 3, 8, 8], 0.05, 0.95);
            let photo = s.photo.clone();
            (boxed(move |r| Ok(highres_loss(r, &photo, &ambient, &w)?.total)), r)
        })),
    ]
}

fn decomposition_case(g: &mut Gen, wrt: usize, w: LossWeights) -> Instance {
    let s = scene(g, 2, 8);
    let truth = DecompositionTarget { s_a: s.s_a.clone(), s_f: s.s_f.clone(), albedo: s.albedo.clone(), t_norm: s.t.clone() };
    let pred = [g.near(&s.s_a), g.near(&s.s_f), g.near(&s.t)];
    let point = pred[wrt].clone();
    let photo = s.photo;
    let f = move |v: &T64| {
        let mut p = pred.clone();
        p[wrt] = v.clone();
        let [s_a, s_f, t_norm] = p;
        Ok(decomposition_loss(&DecompositionPrediction { s_a, s_f, t_norm }, &truth, &photo, &w)?.total)
    };
    (boxed(f), point)
}

fn generation_case(g: &mut Gen, cycle: bool, w: LossWeights) -> Instance {
    let s = scene(g, 2, 8);
    let no_flash = s.albedo.mul(&s.s_a).unwrap();
    let (_, ambient, flash) = diff::compose(&s.albedo, &s.s_a, &s.s_f, &s.c_a).unwrap();
    let truth = GenerationTarget {
        s_f: s.s_f.clone(),
        flash,
        albedo: s.albedo.clone(),
        no_flash,
        c_a: s.c_a.clone(),
        ambient,
    };
    // The decomposer sees slightly wrong shadings so the cycle term is non-zero.
    let exact = ExactDecomposer { s_a: g.near(&s.s_a), s_f: g.near(&s.s_f), c_a: s.c_a.clone() };
    let x = g.near(&s.s_f);
    let f = move |sf: &T64| {
        let c = if cycle { Cycle::Through(&exact) } else { Cycle::Off };
        Ok(generation_loss(sf, &truth, c, &w)?.total)
    };
    (boxed(f), x)
}

fn network_cases() -> Vec<Case> {
    vec![("encoder-decoder forward", Box::new(|g: &mut Gen| {
        let seed = g.0.random_range(0..u64::MAX);
        let net = EncoderDecoder::<f64>::new(EncoderDecoderConfig::decomposition(2, 1), seed).unwrap();
        let x = g.uniform(&[1, 10, 4, 4], 0.0, 1.0);
        let w = g.uniform(&[1, 1, 4, 4], -1.0, 1.0);
        let f = move |x: &T64| {
            let out = net.forward(x)?;
            Ok(contract(&out.heads[0].add(&out.heads[1])?, &w)?.add(&out.t_norm.unwrap().sum())?)
        };
        (boxed(f), x)
    }))]
}

/// Every audited function with its worst relative error over `instances` draws.
pub fn run(instances: usize) -> Vec<(&'static str, f64)> {
    let cases: Vec<Case> = [image_cases(), binary_cases(), conv_cases(), formation_cases(), loss_cases(), network_cases()]
        .into_iter()
        .flatten()
        .collect();
    cases
        .iter()
        .enumerate()
        .map(|(k, (name, make))| {
            let mut worst = 0.0f64;
            for i in 0..instances {
                let mut g = Gen(ChaCha8Rng::seed_from_u64((k * 1000 + i) as u64));
                let (f, x) = make(&mut g);
                let err = grad_check(|x| f(x), &x, STEP).unwrap_or_else(|e| panic!("{name}: {e}"));
                worst = worst.max(err);
            }
            (*name, worst)
        })
        .collect()
}
