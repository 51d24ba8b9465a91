//! Distance between a property and the strictest relaxation the network satisfies.

use super::ShapingError;
use crate::breakpoint::{find_breakpoints, SearchError, SearchMethod, SearchSpec, VarSpec};
use crate::drlp::{DrlpScript, DrlpTemplate};
use crate::network::Network;
use crate::verify::{verify, Method, SolverConfig, Status};
use serde::{Deserialize, Serialize};

/// Which way the parameter moves to weaken the property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxDirection {
    /// Smaller values relax, e.g. the threshold in `y > z`.
    #[default]
    Down,
    Up,
}

fn default_depth() -> usize {
    1
}

fn default_growth() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSpec {
    /// Free parameter of the template.
    pub variable: String,
    /// Value of the parameter in the stated property.
    pub stated: f64,
    #[serde(default)]
    pub direction: RelaxDirection,
    /// First search window, measured from `stated`.
    pub initial_width: f64,
    /// Largest window before giving up.
    pub cap: f64,
    pub precision: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Window growth factor when no breakpoint is found.
    #[serde(default = "default_growth")]
    pub growth: f64,
}

impl GapSpec {
    pub fn new(variable: &str, stated: f64, direction: RelaxDirection, precision: f64) -> Self {
        Self {
            variable: variable.to_string(),
            stated,
            direction,
            initial_width: 1.0,
            cap: 1024.0,
            precision,
            depth: 1,
            growth: 4.0,
        }
    }

    pub fn with_window(mut self, initial_width: f64, cap: f64) -> Self {
        self.initial_width = initial_width;
        self.cap = cap;
        self
    }

    fn validate(&self) -> Result<(), ShapingError> {
        let ok = self.stated.is_finite()
            && self.precision > 0.0
            && self.initial_width > 0.0
            && self.cap >= self.initial_width
            && self.cap.is_finite()
            && self.growth > 1.0
            && self.depth >= 1;
        if ok {
            Ok(())
        } else {
            Err(ShapingError::InvalidConfig(format!(
                "invalid gap spec for `{}`",
                self.variable
            )))
        }
    }

    fn window(&self, width: f64) -> (f64, f64) {
        match self.direction {
            RelaxDirection::Down => (self.stated - width, self.stated),
            RelaxDirection::Up => (self.stated, self.stated + width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub value: f64,
    /// Parameter value of the closest relaxation proven to hold.
    pub relaxation: Option<f64>,
    /// Final window width searched.
    pub width: f64,
    /// Set when no breakpoint was found up to the cap; `value` is the cap.
    pub exhausted: bool,
}

impl Gap {
    /// Turn an exhausted search into an error.
    pub fn require(self) -> Result<Self, ShapingError> {
        if self.exhausted {
            Err(ShapingError::SearchExhausted { cap: self.width })
        } else {
            Ok(self)
        }
    }
}

/// Search the relaxation direction of `template` for the nearest value at
/// which the network satisfies the property. The window grows by
/// `spec.growth` until a breakpoint appears or `spec.cap` is reached.
pub fn gap(
    template: &DrlpTemplate,
    net: &Network,
    spec: &GapSpec,
    cfg: &SolverConfig,
) -> Result<Gap, ShapingError> {
    spec.validate()?;
    let verifier = |s: &DrlpScript, n: &Network| verify(s, n, spec.depth, Method::Bmc, cfg);
    let at_stated = template
        .concretize(&spec.variable, spec.stated)?
        .into_script()?;
    match verifier(&at_stated, net)?.status {
        Status::Proven => {
            return Ok(Gap {
                value: 0.0,
                relaxation: Some(spec.stated),
                width: 0.0,
                exhausted: false,
            })
        }
        Status::Unknown => {
            return Err(SearchError::UnknownVerdict {
                variable: spec.variable.clone(),
                value: spec.stated,
            }
            .into())
        }
        Status::Falsified => {}
    }

    let mut width = spec.initial_width;
    loop {
        let (lb, ub) = spec.window(width);
        let var = VarSpec::new(&spec.variable, lb, ub, spec.precision, SearchMethod::Binary);
        let out = find_breakpoints(template, net, &SearchSpec::new(vec![var]), &verifier)?;
        if let Some(a) = out.aborted.first() {
            return Err(SearchError::UnknownVerdict {
                variable: a.variable.clone(),
                value: a.value,
            }
            .into());
        }
        let nearest = out
            .breakpoints
            .iter()
            .filter_map(|bp| match bp.flip {
                (Status::Proven, _) => Some(bp.bracket.0),
                (_, Status::Proven) => Some(bp.bracket.1),
                _ => None,
            })
            .min_by(|a, b| (a - spec.stated).abs().total_cmp(&(b - spec.stated).abs()));
        if let Some(z) = nearest {
            tracing::debug!(variable = %spec.variable, relaxation = z, width, "gap found");
            return Ok(Gap {
                value: (spec.stated - z).abs(),
                relaxation: Some(z),
                width,
                exhausted: false,
            });
        }
        if width >= spec.cap {
            tracing::warn!(variable = %spec.variable, cap = spec.cap, "gap search exhausted");
            return Ok(Gap {
                value: spec.cap,
                relaxation: None,
                width,
                exhausted: true,
            });
        }
        width = (width * spec.growth).min(spec.cap);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drlp::{parse, Parsed};
    use crate::network::{Activation, Layer};

    fn template(src: &str) -> DrlpTemplate {
        match parse(src).unwrap() {
            Parsed::Template(t) => t,
            Parsed::Script(_) => panic!("expected a template"),
        }
    }

    fn identity() -> Network {
        Network::new(vec![Layer::new(
            vec![vec![1.0]],
            vec![0.0],
            Activation::Identity,
        )])
        .unwrap()
    }

    /// Minimum output -5 at x = 0.5.
    fn v_net() -> Network {
        Network::new(vec![
            Layer::new(
                vec![vec![1.0], vec![-1.0]],
                vec![-0.5, 0.5],
                Activation::Relu,
            ),
            Layer::new(vec![vec![10.0, 10.0]], vec![-5.0], Activation::Identity),
        ])
        .unwrap()
    }

    const POSITIVE: &str = "@Pre\nx_size = 1\ny_size = 1\n0 < x[0][0] <= 1\n@Exp\ny[0][0] > z\n";

    #[test]
    fn gap_to_minimum_output() {
        let spec = GapSpec::new("z", 0.0, RelaxDirection::Down, 0.01).with_window(1.0, 64.0);
        let g = gap(
            &template(POSITIVE),
            &v_net(),
            &spec,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(!g.exhausted);
        assert!((g.value - 5.0).abs() <= 0.01, "{g:?}");
        assert!(g.width >= 5.0);
    }

    #[test]
    fn identity_threshold_gap() {
        let src = "@Pre\nx_size = 1\ny_size = 1\n0 <= x[0][0] <= 1\n@Exp\ny[0][0] >= z\n";
        let spec = GapSpec::new("z", 0.25, RelaxDirection::Down, 0.001);
        let g = gap(&template(src), &identity(), &spec, &SolverConfig::default()).unwrap();
        assert!((g.value - 0.25).abs() <= 0.001, "{g:?}");
    }

    #[test]
    fn proven_property_has_zero_gap() {
        let spec = GapSpec::new("z", -6.0, RelaxDirection::Down, 0.01);
        let g = gap(
            &template(POSITIVE),
            &v_net(),
            &spec,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn wrong_direction_exhausts() {
        let spec = GapSpec::new("z", 0.0, RelaxDirection::Up, 0.01).with_window(1.0, 16.0);
        let g = gap(
            &template(POSITIVE),
            &v_net(),
            &spec,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(g.exhausted);
        assert_eq!(g.value, 16.0);
        assert!(matches!(g.require(), Err(ShapingError::SearchExhausted { cap }) if cap == 16.0));
    }
}
