//! Parsers for the compact argument forms `lo:hi`, `lo:hi:n`, `key=value`,
//! comma lists and model-entry names such as `B[1]` or `A[0][2]`.

use anyhow::{anyhow, bail, Result};

fn number(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| anyhow!("{what}: {s:?} is not a number"))?;
    if !v.is_finite() {
        bail!("{what}: {s:?} is not finite");
    }
    Ok(v)
}

/// `lo:hi` with lo != hi.
pub fn parse_bracket(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        bail!("bracket: expected lo:hi, got {s:?}");
    }
    let lo = number(parts[0], "bracket")?;
    let hi = number(parts[1], "bracket")?;
    if lo == hi {
        bail!("bracket: endpoints must differ");
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuRange {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Largest grid accepted on the command line.
pub const MAX_GRID: usize = 1_000_000;

impl MuRange {
    /// Evenly spaced values including both ends.
    pub fn grid(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| if i + 1 == self.n { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

/// `lo:hi:n` (n >= 1) or `lo:hi` when `default_n` is given.
pub fn parse_mu_range(s: &str, default_n: Option<usize>) -> Result<MuRange> {
    let parts: Vec<&str> = s.split(':').collect();
    let n = match (parts.len(), default_n) {
        (3, _) => parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| anyhow!("mu-range: n must be a positive integer, got {:?}", parts[2]))?,
        (2, Some(d)) => d,
        _ => bail!("mu-range: expected lo:hi:n, got {s:?}"),
    };
    if n == 0 || n > MAX_GRID {
        bail!("mu-range: n must be between 1 and {MAX_GRID}");
    }
    let lo = number(parts[0], "mu-range")?;
    let hi = number(parts[1], "mu-range")?;
    if n > 1 && lo == hi {
        bail!("mu-range: endpoints must differ when n > 1");
    }
    if !(hi - lo).is_finite() {
        bail!("mu-range: span {lo}..{hi} overflows");
    }
    Ok(MuRange { lo, hi, n })
}

/// `key=value` with a finite value.
pub fn parse_assignment(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("param: expected key=value, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        bail!("param: empty name in {s:?}");
    }
    Ok((k.to_string(), number(v, &format!("param {k}"))?))
}

/// Comma-separated finite numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        bail!("list: empty");
    }
    s.split(',').map(|x| number(x, "list")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryTarget {
    A,
    A1,
    M,
    M1,
    B,
    C,
}

/// One entry of an explicit model, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub target: EntryTarget,
    pub row: usize,
    pub col: Option<usize>,
}

/// `B[1]`, `M1[0]`, `A[0][2]` or `A[0,2]`.
pub fn parse_entry(s: &str) -> Result<Entry> {
    let s = s.trim();
    let open = s.find('[').ok_or_else(|| anyhow!("entry: expected NAME[i], got {s:?}"))?;
    let name = &s[..open];
    let target = match name {
        "A" => EntryTarget::A,
        "A1" => EntryTarget::A1,
        "M" => EntryTarget::M,
        "M1" => EntryTarget::M1,
        "B" => EntryTarget::B,
        "C" => EntryTarget::C,
        _ => bail!("entry: unknown model field {name:?}"),
    };
    let rest = &s[open..];
    if !rest.ends_with(']') {
        bail!("entry: missing closing bracket in {s:?}");
    }
    let inner = rest[1..rest.len() - 1].replace("][", ",");
    let idx: Vec<usize> = inner
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| anyhow!("entry: bad index in {s:?}")))
        .collect::<Result<_>>()?;
    let is_matrix = matches!(target, EntryTarget::A | EntryTarget::A1);
    match (is_matrix, idx.as_slice()) {
        (true, [i, j]) => Ok(Entry { target, row: *i, col: Some(*j) }),
        (false, [i]) => Ok(Entry { target, row: *i, col: None }),
        _ => bail!("entry: wrong number of indices in {s:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let r = parse_mu_range("0:0.1:3", None).unwrap();
        assert_eq!(r.grid(), vec![0.0, 0.05, 0.1]);
        assert_eq!(parse_mu_range("0:1", Some(5)).unwrap().n, 5);
        assert!(parse_mu_range("0:1", None).is_err());
        assert!(parse_mu_range("0:1:0", None).is_err());
        assert!(parse_mu_range("0:nan:2", None).is_err());
        assert!(parse_mu_range("1:1:2", None).is_err());
        assert!(parse_mu_range("-1e308:1e308:3", None).is_err());
        assert_eq!(parse_mu_range("0.5:0.5:1", None).unwrap().grid(), vec![0.5]);
    }

    #[test]
    fn brackets() {
        assert_eq!(parse_bracket("1.5:2.0").unwrap(), (1.5, 2.0));
        assert!(parse_bracket("1.5").is_err());
        assert!(parse_bracket("2:2").is_err());
        assert!(parse_bracket("a:b").is_err());
    }

    #[test]
    fn entries() {
        assert_eq!(parse_entry("B[1]").unwrap(), Entry { target: EntryTarget::B, row: 1, col: None });
        assert_eq!(parse_entry("A[0][2]").unwrap(), parse_entry("A[0,2]").unwrap());
        assert!(parse_entry("A[0]").is_err());
        assert!(parse_entry("B[0][1]").is_err());
        assert!(parse_entry("Z[0]").is_err());
        assert!(parse_entry("B[").is_err());
    }

    #[test]
    fn assignments_and_lists() {
        assert_eq!(parse_assignment("b2=1.85").unwrap(), ("b2".to_string(), 1.85));
        assert!(parse_assignment("=1").is_err());
        assert!(parse_assignment("b2").is_err());
        assert_eq!(parse_list("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_list("").is_err());
    }
}
