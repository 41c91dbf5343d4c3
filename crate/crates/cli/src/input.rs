//! Parsing of measure arguments.

use std::fs::File;
use std::path::Path;

use flowsim::io::read_measure;
use flowsim::EmpiricalMeasure;

use crate::CliError;

/// A measure CSV when `spec` names an existing file, otherwise inline atoms
/// `x1[:w1],x2[:w2],…`. Inline weights are relative and get normalized;
/// without weights the atoms are equally weighted.
pub fn parse_measure(spec: &str) -> Result<EmpiricalMeasure, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let f = File::open(path).map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
        return read_measure(f).map_err(|e| CliError::Config(format!("{spec}: {e}")));
    }
    let mut atoms = Vec::new();
    let mut weighted = None;
    for item in spec.split(',').map(str::trim) {
        let (x, w) = match item.split_once(':') {
            Some((x, w)) => (x, Some(w)),
            None => (item, None),
        };
        if *weighted.get_or_insert(w.is_some()) != w.is_some() {
            return Err(CliError::Config(format!("{spec:?}: give weights for all atoms or none")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("{spec:?}: cannot parse {s:?} as a number")))
        };
        atoms.push((num(x)?, w.map(num).transpose()?.unwrap_or(1.0)));
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if atoms.iter().any(|a| a.1 < 0.0) || total <= 0.0 {
        return Err(CliError::Config(format!("{spec:?}: weights must be nonnegative with a positive sum")));
    }
    let normalized: Vec<(f64, f64)> = atoms.iter().map(|&(x, w)| (x, w / total)).collect();
    EmpiricalMeasure::from_atoms(&normalized).map_err(|e| CliError::Config(format!("{spec:?}: {e}")))
}

/// A one-dimensional measure sorted by position, as flow start points with
/// matching weights. Repeated atoms are rejected since flow starts must be
/// distinct.
pub fn sorted_line_measure(mu: &EmpiricalMeasure) -> Result<EmpiricalMeasure, CliError> {
    if mu.dim() != 1 {
        return Err(CliError::Config(format!("initial measure must be one-dimensional, got dimension {}", mu.dim())));
    }
    let mut atoms: Vec<(f64, f64)> = mu.atoms().map(|(p, w)| (p[0], w)).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(CliError::Config("initial measure has repeated atoms".into()));
    }
    let xs: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let ws: Vec<f64> = atoms.iter().map(|a| a.1).collect();
    EmpiricalMeasure::new(1, xs, ws).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_atoms() {
        let mu = parse_measure("0, 1").unwrap();
        assert_eq!(mu.weights(), &[0.5, 0.5]);
        let mu = parse_measure("-1:1,2:3").unwrap();
        assert_eq!(mu.coords(), &[-1.0, 2.0]);
        assert_eq!(mu.weights(), &[0.25, 0.75]);
        assert!(parse_measure("0:1,2").is_err());
        assert!(parse_measure("a").is_err());
        assert!(parse_measure("0:-1,1:2").is_err());
    }

    #[test]
    fn sorting_keeps_weights_attached() {
        let mu = sorted_line_measure(&parse_measure("1:3,0:1").unwrap()).unwrap();
        assert_eq!(mu.coords(), &[0.0, 1.0]);
        assert_eq!(mu.weights(), &[0.25, 0.75]);
        assert!(sorted_line_measure(&parse_measure("1,1").unwrap()).is_err());
    }
}
