//! The α-fair utility family: strictly concave, nondecreasing utilities
//! with exact derivatives and inverse derivatives.
//!
//! `log` (weighted proportional fairness) and `alpha_fair` (weighted
//! `ω·r^(1−α)/(1−α)`, α ≠ 1) are built in; minimum-potential-delay
//! fairness is `alpha_fair(2, ω)`. Arbitrary concave utilities can be
//! registered as a (value, derivative, inverse-derivative) triple, which
//! is self-consistency-checked at registration.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// A custom utility supplied as closures. Checked for mutual consistency
/// of `derivative` and `inv_derivative` when registered.
pub struct CustomUtility {
    pub name: String,
    pub value: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub derivative: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub inv_derivative: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

#[derive(Clone)]
enum Kind {
    /// `ω · ln r`
    Log,
    /// `ω · r^(1−α) / (1−α)`, α > 0, α ≠ 1
    AlphaFair {
        alpha: f64,
    },
    Custom(Arc<CustomUtility>),
}

/// A single user's utility function over its rate in nats.
#[derive(Clone)]
pub struct UtilityFn {
    kind: Kind,
    weight: f64,
}

impl fmt::Debug for UtilityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Log => write!(f, "log:w={}", self.weight),
            Kind::AlphaFair { alpha } => write!(f, "afair:alpha={alpha},w={}", self.weight),
            Kind::Custom(c) => write!(f, "custom:{}:w={}", c.name, self.weight),
        }
    }
}

impl UtilityFn {
    /// Weighted proportional fairness `ω·ln r`.
    pub fn log(weight: f64) -> Self {
        assert!(
            weight > 0.0 && weight.is_finite(),
            "utility weight must be positive"
        );
        Self {
            kind: Kind::Log,
            weight,
        }
    }

    /// Weighted α-fair utility `ω·r^(1−α)/(1−α)`; α = 2 gives minimum
    /// potential delay fairness `−ω/r`.
    pub fn alpha_fair(alpha: f64, weight: f64) -> Result<Self> {
        let ok_alpha = alpha > 0.0 && alpha.is_finite() && alpha != 1.0;
        if !ok_alpha {
            return Err(Error::InvalidConfig(format!(
                "alpha_fair needs alpha > 0, alpha != 1 (got {alpha}); use log for alpha = 1"
            )));
        }
        if weight <= 0.0 || !weight.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "utility weight must be positive (got {weight})"
            )));
        }
        Ok(Self {
            kind: Kind::AlphaFair { alpha },
            weight,
        })
    }

    /// Register a custom (value, derivative, inverse-derivative) triple.
    /// The derivative and its inverse must round-trip on a probe grid.
    pub fn custom(custom: CustomUtility, weight: f64) -> Result<Self> {
        if weight <= 0.0 || !weight.is_finite() {
            return Err(Error::InvalidConfig(
                "utility weight must be positive".into(),
            ));
        }
        for &r in &[0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
            let q = (custom.derivative)(r);
            if q <= 0.0 || !q.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "custom utility {}: derivative must be positive and finite (r={r})",
                    custom.name
                )));
            }
            let back = (custom.inv_derivative)(q);
            if (back - r).abs() > 1e-9 * r.abs().max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "custom utility {}: inverse-derivative mismatch at r={r} \
                     (round-trips to {back})",
                    custom.name
                )));
            }
        }
        Ok(Self {
            kind: Kind::Custom(Arc::new(custom)),
            weight,
        })
    }

    /// Parse a config form such as `"log:w=2"` or `"afair:alpha=2,w=2"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidConfig(format!("utility spec `{spec}`: {msg}"));
        let (head, args) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), a.trim()),
            None => (spec.trim(), ""),
        };
        let mut weight = 1.0;
        let mut alpha = None;
        for part in args.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad("expected key=value pairs"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| bad(&format!("bad number `{v}`")))?;
            match k.trim() {
                "w" => weight = v,
                "alpha" => alpha = Some(v),
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        match head {
            "log" => {
                if alpha.is_some() {
                    return Err(bad("log takes no alpha"));
                }
                if weight <= 0.0 || !weight.is_finite() {
                    return Err(bad("weight must be positive"));
                }
                Ok(Self::log(weight))
            }
            "afair" => {
                let alpha = alpha.ok_or_else(|| bad("afair needs alpha=..."))?;
                Self::alpha_fair(alpha, weight)
            }
            other => Err(bad(&format!("unknown utility kind `{other}`"))),
        }
    }

    /// Whether the utility is undefined at nonpositive rates. True for the
    /// whole built-in family.
    pub fn needs_positive_rate(&self) -> bool {
        true
    }

    /// Utility at rate `r > 0`.
    pub fn value(&self, r: f64) -> f64 {
        debug_assert!(r > 0.0, "utility value needs r > 0, got {r}");
        match &self.kind {
            Kind::Log => self.weight * r.ln(),
            Kind::AlphaFair { alpha } => self.weight * r.powf(1.0 - alpha) / (1.0 - alpha),
            Kind::Custom(c) => self.weight * (c.value)(r),
        }
    }

    /// Marginal utility `U'(r)`; strictly positive and decreasing.
    pub fn derivative(&self, r: f64) -> f64 {
        debug_assert!(r > 0.0, "utility derivative needs r > 0, got {r}");
        match &self.kind {
            Kind::Log => self.weight / r,
            Kind::AlphaFair { alpha } => self.weight * r.powf(-alpha),
            Kind::Custom(c) => self.weight * (c.derivative)(r),
        }
    }

    /// Exact inverse of [`UtilityFn::derivative`]: the rate at which the
    /// marginal utility equals the price `q > 0`.
    pub fn inv_derivative(&self, q: f64) -> f64 {
        assert!(q > 0.0, "inverse derivative needs q > 0, got {q}");
        match &self.kind {
            Kind::Log => self.weight / q,
            Kind::AlphaFair { alpha } => (self.weight / q).powf(1.0 / alpha),
            Kind::Custom(c) => (c.inv_derivative)(q / self.weight),
        }
    }
}

/// Per-user utilities for one scenario.
#[derive(Debug, Clone)]
pub struct UtilitySet {
    pub ul: Vec<UtilityFn>,
    pub dl: Vec<UtilityFn>,
}

impl UtilitySet {
    pub fn new(ul: Vec<UtilityFn>, dl: Vec<UtilityFn>) -> Self {
        Self { ul, dl }
    }

    /// One utility shape per direction, repeated for every user.
    pub fn uniform(ul: UtilityFn, dl: UtilityFn, k_ul: usize, k_dl: usize) -> Self {
        Self {
            ul: vec![ul; k_ul],
            dl: vec![dl; k_dl],
        }
    }

    pub fn check_dims(&self, k_ul: usize, k_dl: usize) -> Result<()> {
        if self.ul.len() != k_ul || self.dl.len() != k_dl {
            return Err(Error::InvalidConfig(format!(
                "utility set has {}x{} entries for a {k_ul}x{k_dl} scenario",
                self.ul.len(),
                self.dl.len()
            )));
        }
        Ok(())
    }

    /// Scale every weight by a common positive factor.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0);
        let scale = |u: &UtilityFn| UtilityFn {
            kind: u.kind.clone(),
            weight: u.weight * factor,
        };
        Self {
            ul: self.ul.iter().map(scale).collect(),
            dl: self.dl.iter().map(scale).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-30)
    }

    #[test]
    fn value_examples() {
        assert_eq!(UtilityFn::log(1.0).value(1.0), 0.0);
        assert!(close(
            UtilityFn::log(2.0).value(std::f64::consts::E),
            2.0,
            1e-12
        ));
        let mpd = UtilityFn::alpha_fair(2.0, 2.0).unwrap();
        assert!(close(mpd.value(4.0), -0.5, 1e-12)); // -2/4
    }

    #[test]
    fn derivative_inverse_pairs() {
        let log1 = UtilityFn::log(1.0);
        assert!(close(log1.derivative(2.0), 0.5, 1e-12));
        assert!(close(log1.inv_derivative(0.5), 2.0, 1e-12));

        let af = UtilityFn::alpha_fair(2.0, 2.0).unwrap();
        assert!(close(af.derivative(2.0), 0.5, 1e-12));
        assert!(close(af.inv_derivative(0.5), 2.0, 1e-12));

        assert!(close(UtilityFn::log(2.0).inv_derivative(1.0), 2.0, 1e-12));
    }

    #[test]
    fn parse_config_forms() {
        let u = UtilityFn::parse("log:w=2").unwrap();
        assert!(close(u.value(std::f64::consts::E), 2.0, 1e-12));
        let u = UtilityFn::parse("afair:alpha=2,w=2").unwrap();
        assert!(close(u.value(4.0), -0.5, 1e-12));
        assert!(UtilityFn::parse("afair:alpha=1,w=2").is_err());
        assert!(UtilityFn::parse("nope:w=1").is_err());
        assert!(UtilityFn::parse("log:w=-1").is_err());
    }

    #[test]
    fn custom_registration_checks_consistency() {
        // a valid triple: U = sqrt(r)
        let ok = CustomUtility {
            name: "sqrt".into(),
            value: Box::new(|r| r.sqrt()),
            derivative: Box::new(|r| 0.5 / r.sqrt()),
            inv_derivative: Box::new(|q| (0.5 / q).powi(2)),
        };
        let u = UtilityFn::custom(ok, 1.0).unwrap();
        assert!(close(u.value(4.0), 2.0, 1e-12));
        assert!(close(u.inv_derivative(u.derivative(3.0)), 3.0, 1e-9));

        // an inconsistent inverse is rejected
        let bad = CustomUtility {
            name: "bad".into(),
            value: Box::new(|r| r.sqrt()),
            derivative: Box::new(|r| 0.5 / r.sqrt()),
            inv_derivative: Box::new(|q| 1.0 / q),
        };
        assert!(UtilityFn::custom(bad, 1.0).is_err());
    }

    #[test]
    fn marginal_utility_vanishes_at_large_rates() {
        // diminishing returns: U'(r) drops below any epsilon eventually
        for u in [
            UtilityFn::log(1.0),
            UtilityFn::alpha_fair(2.0, 1.0).unwrap(),
            UtilityFn::alpha_fair(0.5, 3.0).unwrap(),
        ] {
            let mut r = 1.0;
            let mut doublings = 0;
            while u.derivative(r) >= 1e-6 {
                r *= 2.0;
                doublings += 1;
                assert!(doublings < 200, "derivative never fell below 1e-6: {u:?}");
            }
            // and it stays below once past that rate
            assert!(u.derivative(4.0 * r) < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn strict_concavity(
            r1 in 0.05f64..100.0,
            r2 in 0.05f64..100.0,
            lambda in 0.05f64..0.95,
            alpha in prop::sample::select(vec![0.5f64, 2.0, 3.0]),
        ) {
            prop_assume!((r1 - r2).abs() > 1e-3);
            for u in [UtilityFn::log(1.0), UtilityFn::alpha_fair(alpha, 1.5).unwrap()] {
                let mid = lambda * r1 + (1.0 - lambda) * r2;
                let chord = lambda * u.value(r1) + (1.0 - lambda) * u.value(r2);
                prop_assert!(u.value(mid) > chord);
            }
        }

        #[test]
        fn derivative_matches_finite_difference(
            r in 0.1f64..100.0,
            alpha in prop::sample::select(vec![0.5f64, 2.0, 3.0]),
            w in 0.5f64..4.0,
        ) {
            let h = 1e-6 * r.max(1.0);
            for u in [UtilityFn::log(w), UtilityFn::alpha_fair(alpha, w).unwrap()] {
                let fd = (u.value(r + h) - u.value(r - h)) / (2.0 * h);
                let an = u.derivative(r);
                prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-12),
                    "fd {fd} vs analytic {an} at r={r}");
            }
        }

        #[test]
        fn inverse_derivative_round_trips(
            r in 0.01f64..1000.0,
            alpha in prop::sample::select(vec![0.5f64, 2.0, 3.0]),
            w in 0.5f64..4.0,
        ) {
            for u in [UtilityFn::log(w), UtilityFn::alpha_fair(alpha, w).unwrap()] {
                let q = u.derivative(r);
                let back = u.inv_derivative(q);
                prop_assert!((back - r).abs() <= 1e-12 * r.max(back));
            }
        }
    }
}
