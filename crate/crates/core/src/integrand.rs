//! Integrand handles for linear functionals.

/// A function `g` on the support, optionally with a closed-form antiderivative.
/// When an antiderivative is available, integrals against step densities are
/// summed exactly instead of by quadrature.
pub trait Integrand: Sync {
    fn eval(&self, x: f64) -> f64;

    fn antiderivative(&self, _x: f64) -> Option<f64> {
        None
    }

    fn label(&self) -> String {
        "custom".to_string()
    }
}

impl<F: Fn(f64) -> f64 + Sync> Integrand for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Built-in integrands, as selected by `--g` on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    Identity,
    Square,
    Exp,
    Const(f64),
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" | "x" => Some(Preset::Identity),
            "square" | "x2" => Some(Preset::Square),
            "exp" => Some(Preset::Exp),
            "const" => Some(Preset::Const(1.0)),
            other => other
                .strip_prefix("const:")
                .and_then(|c| c.parse::<f64>().ok())
                .filter(|c| c.is_finite())
                .map(Preset::Const),
        }
    }

    /// Non-decreasing on the positive half-line.
    pub fn is_increasing(&self) -> bool {
        !matches!(self, Preset::Const(_))
    }
}

impl Integrand for Preset {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            Preset::Identity => x,
            Preset::Square => x * x,
            Preset::Exp => x.exp(),
            Preset::Const(c) => c,
        }
    }

    fn antiderivative(&self, x: f64) -> Option<f64> {
        Some(match *self {
            Preset::Identity => 0.5 * x * x,
            Preset::Square => x * x * x / 3.0,
            Preset::Exp => x.exp(),
            Preset::Const(c) => c * x,
        })
    }

    fn label(&self) -> String {
        match *self {
            Preset::Identity => "identity".into(),
            Preset::Square => "square".into(),
            Preset::Exp => "exp".into(),
            Preset::Const(c) => format!("const:{c}"),
        }
    }
}

impl serde::Serialize for Preset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}
