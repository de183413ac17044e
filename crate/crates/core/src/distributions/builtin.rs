use std::borrow::Cow;

use rand::{Rng, RngCore};
use rand_distr::{Beta, Binomial, Distribution as _, Exp, Gamma, Normal, Poisson};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use super::{DistributionSpec, InvalidParams, Parameterization, Params, Registry, Support};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

type R<T> = std::result::Result<T, InvalidParams>;

fn invalid(msg: &'static str) -> InvalidParams {
    InvalidParams(Cow::Borrowed(msg))
}

fn require(ok: bool, msg: &'static str) -> R<()> {
    if ok {
        Ok(())
    } else {
        Err(invalid(msg))
    }
}

/// `a * ln(x)` with `0 * ln(0) = 0`.
fn xlogy(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * x.ln()
    }
}

fn is_count(x: f64) -> bool {
    x >= 0.0 && x.fract() == 0.0 && x.is_finite()
}

fn ln_choose(n: f64, k: f64) -> f64 {
    if k == 0.0 || k == n {
        return 0.0;
    }
    ln_factorial(n as u64) - ln_factorial(k as u64) - ln_factorial((n - k) as u64)
}

fn norm_params(p: &Params<'_>) -> R<(f64, f64)> {
    let (mean, sd) = (p.scalar(0), p.scalar(1));
    require(mean.is_finite(), "mean must be finite")?;
    require(sd > 0.0 && sd.is_finite(), "sd must be positive and finite")?;
    Ok((mean, sd))
}

fn gamma_params(p: &Params<'_>) -> R<(f64, f64)> {
    let (shape, rate) = (p.scalar(0), p.scalar(1));
    require(shape > 0.0 && shape.is_finite(), "shape must be positive")?;
    require(rate > 0.0 && rate.is_finite(), "rate must be positive")?;
    Ok((shape, rate))
}

fn rate_param(p: &Params<'_>) -> R<f64> {
    let rate = p.scalar(0);
    require(rate > 0.0 && rate.is_finite(), "rate must be positive")?;
    Ok(rate)
}

fn pois_param(p: &Params<'_>) -> R<f64> {
    let lambda = p.scalar(0);
    require(
        lambda >= 0.0 && lambda.is_finite(),
        "lambda must be nonnegative",
    )?;
    Ok(lambda)
}

fn bin_params(p: &Params<'_>) -> R<(f64, f64)> {
    let (prob, size) = (p.scalar(0), p.scalar(1));
    require((0.0..=1.0).contains(&prob), "prob must lie in [0, 1]")?;
    require(is_count(size), "size must be a nonnegative integer")?;
    Ok((prob, size))
}

fn beta_params(p: &Params<'_>) -> R<(f64, f64)> {
    let (a, b) = (p.scalar(0), p.scalar(1));
    require(a > 0.0 && a.is_finite(), "a must be positive")?;
    require(b > 0.0 && b.is_finite(), "b must be positive")?;
    Ok((a, b))
}

fn unif_params(p: &Params<'_>) -> R<(f64, f64)> {
    let (lo, hi) = (p.scalar(0), p.scalar(1));
    require(lo.is_finite() && hi.is_finite(), "bounds must be finite")?;
    require(lo < hi, "min must be less than max")?;
    Ok((lo, hi))
}

fn gamma_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => rate.ln(),
            _ => f64::NEG_INFINITY,
        };
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn draw<D: rand_distr::Distribution<f64>>(d: D, rng: &mut dyn RngCore) -> f64 {
    d.sample(rng)
}

pub(super) fn register_all(r: &mut Registry) {
    let ok = "built-in distribution";

    r.register(
        DistributionSpec::scalar("dnorm", &["mean", "sd"], Support::Real)
            .with_positional(&["mean", "tau"])
            .with_alternative(Parameterization::new(
                &["mean", "tau"],
                &[("mean", "mean"), ("sd", "1 / sqrt(tau)")],
            ))
            .with_alternative(Parameterization::new(
                &["mean", "var"],
                &[("mean", "mean"), ("sd", "sqrt(var)")],
            )),
        |x, p| {
            let (mean, sd) = norm_params(p)?;
            let z = (x[0] - mean) / sd;
            Ok(-LN_SQRT_2PI - sd.ln() - 0.5 * z * z)
        },
        |p, rng, out| {
            let (mean, sd) = norm_params(p)?;
            out[0] = draw(Normal::new(mean, sd).map_err(|_| invalid("sd"))?, rng);
            Ok(())
        },
    )
    .expect(ok);

    r.register(
        DistributionSpec::scalar("dgamma", &["shape", "rate"], Support::Positive)
            .with_alternative(Parameterization::new(
                &["shape", "scale"],
                &[("shape", "shape"), ("rate", "1 / scale")],
            ))
            .with_alternative(Parameterization::new(
                &["mean", "sd"],
                &[("shape", "mean^2 / sd^2"), ("rate", "mean / sd^2")],
            )),
        |x, p| {
            let (shape, rate) = gamma_params(p)?;
            Ok(gamma_log_density(x[0], shape, rate))
        },
        |p, rng, out| {
            let (shape, rate) = gamma_params(p)?;
            let g = Gamma::new(shape, 1.0 / rate).map_err(|_| invalid("gamma parameters"))?;
            out[0] = draw(g, rng);
            Ok(())
        },
    )
    .expect(ok);

    r.register(
        DistributionSpec::scalar("dexp", &["rate"], Support::NonNegative)
            .with_alternative(Parameterization::new(&["scale"], &[("rate", "1 / scale")])),
        |x, p| {
            let rate = rate_param(p)?;
            Ok(if x[0] < 0.0 {
                f64::NEG_INFINITY
            } else {
                rate.ln() - rate * x[0]
            })
        },
        |p, rng, out| {
            let rate = rate_param(p)?;
            out[0] = draw(Exp::new(rate).map_err(|_| invalid("rate"))?, rng);
            Ok(())
        },
    )
    .expect(ok);

    r.register(
        DistributionSpec::scalar("dpois", &["lambda"], Support::NonNegativeInteger),
        |x, p| {
            let lambda = pois_param(p)?;
            let x = x[0];
            if !is_count(x) {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(xlogy(x, lambda) - lambda - ln_factorial(x as u64))
        },
        |p, rng, out| {
            let lambda = pois_param(p)?;
            out[0] = if lambda == 0.0 {
                0.0
            } else {
                draw(Poisson::new(lambda).map_err(|_| invalid("lambda"))?, rng)
            };
            Ok(())
        },
    )
    .expect(ok);

    r.register(
        DistributionSpec::scalar("dbin", &["prob", "size"], Support::BoundedInteger),
        |x, p| {
            let (prob, size) = bin_params(p)?;
            let x = x[0];
            if !is_count(x) || x > size {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(ln_choose(size, x) + xlogy(x, prob) + xlogy(size - x, 1.0 - prob))
        },
        |p, rng, out| {
            let (prob, size) = bin_params(p)?;
            let b = Binomial::new(size as u64, prob).map_err(|_| invalid("binomial parameters"))?;
            out[0] = b.sample(rng) as f64;
            Ok(())
        },
    )
    .expect(ok);

    r.register(
        DistributionSpec::scalar("dbeta", &["a", "b"], Support::UnitInterval),
        |x, p| {
            let (a, b) = beta_params(p)?;
            let x = x[0];
            if !(0.0..=1.0).contains(&x) {
                return Ok(f64::NEG_INFINITY);
            }
            let norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
            Ok(norm + xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x))
        },
        |p, rng, out| {
            let (a, b) = beta_params(p)?;
            out[0] = draw(
                Beta::new(a, b).map_err(|_| invalid("beta parameters"))?,
                rng,
            );
            Ok(())
        },
    )
    .expect(ok);

    r.register(
        DistributionSpec::scalar("dunif", &["min", "max"], Support::Interval),
        |x, p| {
            let (lo, hi) = unif_params(p)?;
            Ok(if (lo..=hi).contains(&x[0]) {
                -(hi - lo).ln()
            } else {
                f64::NEG_INFINITY
            })
        },
        |p, rng, out| {
            let (lo, hi) = unif_params(p)?;
            out[0] = lo + (hi - lo) * rng.random::<f64>();
            Ok(())
        },
    )
    .expect(ok);
}

#[cfg(test)]
mod tests {
    use super::super::Registry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{
        Beta as SBeta, Binomial as SBinomial, Continuous, ContinuousCDF, Discrete, DiscreteCDF,
        Exp as SExp, Gamma as SGamma, Normal as SNormal, Poisson as SPoisson, Uniform as SUniform,
    };

    fn registry() -> Registry {
        Registry::with_builtins()
    }

    fn simpson(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }

    /// Adaptive Simpson quadrature over [a, b].
    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (fa, fb, m) = (f(a), f(b), 0.5 * (a + b));
        let fm = f(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        simpson(f, a, b, fa, fm, fb, whole, 1e-11, 50)
    }

    fn density(name: &str, params: &[f64]) -> impl Fn(f64) -> f64 {
        let r = registry();
        let name = name.to_string();
        let params = params.to_vec();
        move |x| r.log_density(&name, x, &params).unwrap().exp()
    }

    #[test]
    fn continuous_densities_integrate_to_one() {
        let cases: &[(&str, &[f64], f64, f64)] = &[
            ("dnorm", &[0.0, 1.0], -12.0, 12.0),
            ("dnorm", &[3.0, 0.2], 0.0, 6.0),
            ("dnorm", &[-50.0, 10.0], -160.0, 60.0),
            ("dgamma", &[2.0, 3.0], 0.0, 30.0),
            ("dgamma", &[1.0, 0.5], 0.0, 120.0),
            ("dgamma", &[7.5, 2.0], 0.0, 40.0),
            ("dexp", &[1.0], 0.0, 60.0),
            ("dexp", &[0.1], 0.0, 600.0),
            ("dexp", &[25.0], 0.0, 3.0),
            ("dbeta", &[2.0, 3.0], 0.0, 1.0),
            ("dbeta", &[1.0, 1.0], 0.0, 1.0),
            ("dbeta", &[5.0, 1.5], 0.0, 1.0),
            ("dunif", &[0.0, 1.0], 0.0, 1.0),
            ("dunif", &[-3.0, 5.0], -3.0, 5.0),
            ("dunif", &[10.0, 10.5], 10.0, 10.5),
        ];
        for (name, params, a, b) in cases {
            let total = integrate(&density(name, params), *a, *b);
            assert!(
                (total - 1.0).abs() < 1e-6,
                "{name}{params:?} integrates to {total}"
            );
        }
    }

    #[test]
    fn discrete_masses_sum_to_one() {
        let cases: &[(&str, &[f64], u32)] = &[
            ("dpois", &[0.5], 60),
            ("dpois", &[4.0], 80),
            ("dpois", &[40.0], 200),
            ("dbin", &[0.3, 10.0], 10),
            ("dbin", &[0.0, 5.0], 5),
            ("dbin", &[0.9, 50.0], 50),
        ];
        for (name, params, upper) in cases {
            let f = density(name, params);
            let total: f64 = (0..=*upper).map(|k| f(k as f64)).sum();
            assert!(
                (total - 1.0).abs() < 1e-6,
                "{name}{params:?} sums to {total}"
            );
        }
    }

    #[test]
    fn gamma_matches_reference_implementation() {
        let r = registry();
        let ours = r.log_density("dgamma", 2.0, &[3.0, 2.0]).unwrap();
        let reference = SGamma::new(3.0, 2.0).unwrap().ln_pdf(2.0);
        assert!((ours - reference).abs() < 1e-12);
        // 2^3 / Gamma(3) * 2^2 * e^-4 = 16 e^-4
        assert!((ours - (16f64.ln() - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn densities_match_reference_implementations() {
        let r = registry();
        for x in [0.1, 0.5, 0.9] {
            let ours = r.log_density("dbeta", x, &[2.5, 1.5]).unwrap();
            assert!((ours - SBeta::new(2.5, 1.5).unwrap().ln_pdf(x)).abs() < 1e-10);
        }
        for k in 0..8 {
            let ours = r.log_density("dbin", k as f64, &[0.35, 7.0]).unwrap();
            assert!((ours - SBinomial::new(0.35, 7).unwrap().ln_pmf(k)).abs() < 1e-10);
            let ours = r.log_density("dpois", k as f64, &[2.2]).unwrap();
            assert!((ours - SPoisson::new(2.2).unwrap().ln_pmf(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_draw_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let v = registry().simulate("dunif", &[0.0, 1.0], &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let r = registry();
        let draws = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| r.simulate("dgamma", &[2.0, 1.0], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draws(9), draws(9));
        assert_ne!(draws(9), draws(10));
    }

    #[test]
    fn poisson_sample_mean() {
        let r = registry();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| r.simulate("dpois", &[4.0], &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 4.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn gamma_sample_moments() {
        let r = registry();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| r.simulate("dgamma", &[2.0, 3.0], &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (true_mean, true_var) = (2.0 / 3.0, 2.0 / 9.0);
        // se of the sample variance is sqrt((mu4 - var^2) / n); the gamma's
        // excess kurtosis is 6 / shape, so mu4 = var^2 (3 + 6 / shape)
        let se_mean = (true_var / n as f64).sqrt();
        let mu4 = true_var * true_var * (3.0 + 6.0 / 2.0);
        let se_var = ((mu4 - true_var * true_var) / n as f64).sqrt();
        assert!((mean - true_mean).abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - true_var).abs() < 3.0 * se_var, "var {var}");
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: &dyn Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn continuous_draws_pass_ks() {
        let r = registry();
        let n = 100_000;
        let crit = 1.949 / (n as f64).sqrt();
        let normal = SNormal::new(1.0, 2.0).unwrap();
        let gamma = SGamma::new(2.0, 3.0).unwrap();
        let exp = SExp::new(1.5).unwrap();
        let beta = SBeta::new(2.0, 5.0).unwrap();
        let unif = SUniform::new(-1.0, 3.0).unwrap();
        let cases: Vec<(&str, Vec<f64>, Box<dyn Fn(f64) -> f64>)> = vec![
            ("dnorm", vec![1.0, 2.0], Box::new(move |x| normal.cdf(x))),
            ("dgamma", vec![2.0, 3.0], Box::new(move |x| gamma.cdf(x))),
            ("dexp", vec![1.5], Box::new(move |x| exp.cdf(x))),
            ("dbeta", vec![2.0, 5.0], Box::new(move |x| beta.cdf(x))),
            ("dunif", vec![-1.0, 3.0], Box::new(move |x| unif.cdf(x))),
        ];
        for (i, (name, params, cdf)) in cases.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let xs = (0..n)
                .map(|_| r.simulate(name, &params, &mut rng).unwrap())
                .collect();
            let d = ks_statistic(xs, &*cdf);
            assert!(d < crit, "{name}: D = {d}, critical {crit}");
        }
    }

    #[test]
    fn discrete_draws_match_masses() {
        // for integer-valued draws compare the empirical CDF at each support
        // point with the analytic one
        let r = registry();
        let n = 100_000;
        let crit = 1.949 / (n as f64).sqrt();
        let pois = SPoisson::new(3.5).unwrap();
        let bin = SBinomial::new(0.3, 12).unwrap();
        let cases: Vec<(&str, Vec<f64>, u64, Box<dyn Fn(u64) -> f64>)> = vec![
            ("dpois", vec![3.5], 30, Box::new(move |k| pois.cdf(k))),
            ("dbin", vec![0.3, 12.0], 12, Box::new(move |k| bin.cdf(k))),
        ];
        for (i, (name, params, upper, cdf)) in cases.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + i as u64);
            let mut counts = vec![0usize; upper as usize + 1];
            for _ in 0..n {
                let v = r.simulate(name, &params, &mut rng).unwrap() as usize;
                counts[v.min(upper as usize)] += 1;
            }
            let mut cum = 0usize;
            for k in 0..=upper {
                cum += counts[k as usize];
                let d = (cum as f64 / n as f64 - cdf(k)).abs();
                assert!(d < crit, "{name} at {k}: D = {d}");
            }
        }
    }

    #[test]
    fn boundary_values() {
        let r = registry();
        assert_eq!(
            r.log_density("dgamma", 0.0, &[1.0, 2.0]).unwrap(),
            2f64.ln()
        );
        assert_eq!(
            r.log_density("dgamma", 0.0, &[0.5, 2.0]).unwrap(),
            f64::INFINITY
        );
        assert_eq!(r.log_density("dbin", 0.0, &[0.0, 4.0]).unwrap(), 0.0);
        assert_eq!(r.log_density("dbin", 4.0, &[1.0, 4.0]).unwrap(), 0.0);
        assert_eq!(r.log_density("dpois", 0.0, &[0.0]).unwrap(), 0.0);
        assert!((r.log_density("dbeta", 0.0, &[1.0, 2.0]).unwrap() - 2f64.ln()).abs() < 1e-14);
    }
}
