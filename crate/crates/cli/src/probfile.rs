//! The on-disk problem description: a flat sectioned key/value format with
//! expressions as quoted strings and decimal number literals only. Full
//! field reference in PROBLEM_FORMAT.md; the short of it:
//!
//! ```text
//! format_version = 1
//!
//! [partition]
//! points = 0, 0.2, 0.4, 0.6, 0.8, 1.0
//!
//! [coefficients]        # h, beta, epsilon, delta
//! [growth]              # a1, theta1, a2, theta2, a_star
//! [nonlinearity.i]      # f, g — one section per forcing interval, 1-based
//! [impulse.i]           # expr — one section per impulse time, 1-based
//! ```
//!
//! Full lines starting with `#` are comments; inline comments are not
//! supported (expressions may contain anything printable). Every key is
//! required — the format has no defaults.

use std::collections::BTreeMap;
use std::fmt;

use camber_core::{Expr, GrowthConstants, Partition, ProblemSpec};

/// A parse failure with its 1-based line number; line 0 means the failure
/// concerns the file as a whole (missing sections, shape mismatches).
#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.msg)
        } else {
            write!(f, "{}", self.msg)
        }
    }
}

impl std::error::Error for ParseError {}

fn err<T>(line: usize, msg: String) -> Result<T, ParseError> {
    Err(ParseError { line, msg })
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Top,
    Partition,
    Coefficients,
    Growth,
    Nonlinearity(usize),
    Impulse(usize),
}

impl Section {
    fn name(self) -> String {
        match self {
            Section::Top => String::from("the top level"),
            Section::Partition => String::from("[partition]"),
            Section::Coefficients => String::from("[coefficients]"),
            Section::Growth => String::from("[growth]"),
            Section::Nonlinearity(i) => format!("[nonlinearity.{i}]"),
            Section::Impulse(i) => format!("[impulse.{i}]"),
        }
    }
}

/// One `key = value` slot remembering where it was set, for duplicate
/// diagnostics.
struct Slot<T> {
    value: Option<(T, usize)>,
    key: &'static str,
}

impl<T> Slot<T> {
    fn empty(key: &'static str) -> Self {
        Slot { value: None, key }
    }

    fn set(&mut self, v: T, line: usize, section: Section) -> Result<(), ParseError> {
        if let Some((_, first)) = &self.value {
            return err(
                line,
                format!(
                    "duplicate key `{}` in {} (first set at line {first})",
                    self.key,
                    section.name()
                ),
            );
        }
        self.value = Some((v, line));
        Ok(())
    }

    fn require(self, section: &str) -> Result<(T, usize), ParseError> {
        match self.value {
            Some(v) => Ok(v),
            None => err(0, format!("missing key `{}` in {section}", self.key)),
        }
    }
}

/// Accepts plain decimal literals only: an optional sign, digits with an
/// optional decimal point, and an optional decimal exponent. In particular
/// no `inf`, `nan`, hex or underscores.
fn parse_number(s: &str, line: usize, key: &str) -> Result<f64, ParseError> {
    let bad = || {
        ParseError {
            line,
            msg: format!("`{key}` expects a decimal literal, got `{s}`"),
        }
    };
    let t = s.trim();
    if t.is_empty() {
        return Err(bad());
    }
    let rest = t.strip_prefix(['+', '-']).unwrap_or(t);
    let (mantissa, exponent) = match rest.split_once(['e', 'E']) {
        Some((m, e)) => (m, Some(e)),
        None => (rest, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match mantissa.split_once('.') {
        Some((int, frac)) => {
            (digits(int) || int.is_empty()) && (digits(frac) || frac.is_empty())
                && !(int.is_empty() && frac.is_empty())
        }
        None => digits(mantissa),
    };
    if !mantissa_ok {
        return Err(bad());
    }
    if let Some(e) = exponent {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        if !digits(e) {
            return Err(bad());
        }
    }
    t.parse::<f64>().map_err(|_| bad())
}

fn parse_quoted<'a>(s: &'a str, line: usize, key: &str) -> Result<&'a str, ParseError> {
    let t = s.trim();
    let inner = t
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .filter(|inner| !inner.contains('"'));
    match inner {
        Some(inner) => Ok(inner),
        None => err(
            line,
            format!("`{key}` expects a double-quoted expression, got `{s}`"),
        ),
    }
}

fn parse_expr(s: &str, line: usize, key: &str) -> Result<Expr, ParseError> {
    let src = parse_quoted(s, line, key)?;
    Expr::parse(src).map_err(|e| ParseError {
        line,
        msg: format!("`{key}` is not a valid expression: {e}"),
    })
}

struct NlSlots {
    decl_line: usize,
    f: Slot<Expr>,
    g: Slot<Expr>,
}

/// Parses a problem description. Errors carry the offending line; the
/// assembled spec is revalidated by the core constructors, whose messages
/// are passed through.
pub fn parse(text: &str) -> Result<ProblemSpec, ParseError> {
    let mut version: Slot<u32> = Slot::empty("format_version");
    let mut points: Slot<Vec<f64>> = Slot::empty("points");
    let mut h: Slot<Expr> = Slot::empty("h");
    let mut beta: Slot<f64> = Slot::empty("beta");
    let mut epsilon: Slot<f64> = Slot::empty("epsilon");
    let mut delta: Slot<f64> = Slot::empty("delta");
    let mut a1: Slot<f64> = Slot::empty("a1");
    let mut theta1: Slot<f64> = Slot::empty("theta1");
    let mut a2: Slot<f64> = Slot::empty("a2");
    let mut theta2: Slot<f64> = Slot::empty("theta2");
    let mut a_star: Slot<f64> = Slot::empty("a_star");
    let mut nonlin: BTreeMap<usize, NlSlots> = BTreeMap::new();
    let mut impulses: BTreeMap<usize, (Slot<Expr>, usize)> = BTreeMap::new();

    let mut section = Section::Top;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(body) = t.strip_prefix('[') {
            let Some(name) = body.strip_suffix(']') else {
                return err(line, format!("unterminated section header `{t}`"));
            };
            section = match name {
                "partition" => Section::Partition,
                "coefficients" => Section::Coefficients,
                "growth" => Section::Growth,
                _ => {
                    let (kind, index) = match name.split_once('.') {
                        Some(kv) => kv,
                        None => return err(line, format!("unknown section `[{name}]`")),
                    };
                    let i: usize = match index.parse() {
                        Ok(i) if i >= 1 => i,
                        _ => {
                            return err(
                                line,
                                format!("section `[{name}]` needs a 1-based integer index"),
                            )
                        }
                    };
                    match kind {
                        "nonlinearity" => {
                            nonlin.entry(i).or_insert_with(|| NlSlots {
                                decl_line: line,
                                f: Slot::empty("f"),
                                g: Slot::empty("g"),
                            });
                            Section::Nonlinearity(i)
                        }
                        "impulse" => {
                            impulses
                                .entry(i)
                                .or_insert_with(|| (Slot::empty("expr"), line));
                            Section::Impulse(i)
                        }
                        _ => return err(line, format!("unknown section `[{name}]`")),
                    }
                }
            };
            continue;
        }
        let Some((key, value)) = t.split_once('=') else {
            return err(line, format!("expected `key = value`, got `{t}`"));
        };
        let key = key.trim();
        let value = value.trim();
        let unknown = |line: usize, section: Section| -> Result<(), ParseError> {
            err(
                line,
                format!("unknown key `{key}` in {}", section.name()),
            )
        };
        match section {
            Section::Top => match key {
                "format_version" => {
                    if value != "1" {
                        return err(
                            line,
                            format!("unsupported format_version `{value}` (this build reads 1)"),
                        );
                    }
                    version.set(1, line, section)?;
                }
                _ => unknown(line, section)?,
            },
            Section::Partition => match key {
                "points" => {
                    let mut pts = Vec::new();
                    for piece in value.split(',') {
                        pts.push(parse_number(piece, line, "points")?);
                    }
                    points.set(pts, line, section)?;
                }
                _ => unknown(line, section)?,
            },
            Section::Coefficients => match key {
                "h" => h.set(parse_expr(value, line, "h")?, line, section)?,
                "beta" => beta.set(parse_number(value, line, "beta")?, line, section)?,
                "epsilon" => epsilon.set(parse_number(value, line, "epsilon")?, line, section)?,
                "delta" => delta.set(parse_number(value, line, "delta")?, line, section)?,
                _ => unknown(line, section)?,
            },
            Section::Growth => match key {
                "a1" => a1.set(parse_number(value, line, "a1")?, line, section)?,
                "theta1" => theta1.set(parse_number(value, line, "theta1")?, line, section)?,
                "a2" => a2.set(parse_number(value, line, "a2")?, line, section)?,
                "theta2" => theta2.set(parse_number(value, line, "theta2")?, line, section)?,
                "a_star" => a_star.set(parse_number(value, line, "a_star")?, line, section)?,
                _ => unknown(line, section)?,
            },
            Section::Nonlinearity(i) => {
                let slots = nonlin.get_mut(&i).expect("section was just declared");
                match key {
                    "f" => slots.f.set(parse_expr(value, line, "f")?, line, section)?,
                    "g" => slots.g.set(parse_expr(value, line, "g")?, line, section)?,
                    _ => unknown(line, section)?,
                }
            }
            Section::Impulse(i) => {
                let slot = impulses.get_mut(&i).expect("section was just declared");
                match key {
                    "expr" => slot.0.set(parse_expr(value, line, "expr")?, line, section)?,
                    _ => unknown(line, section)?,
                }
            }
        }
    }

    version.require("the file header")?;
    let (points, points_line) = points.require("[partition]")?;
    let partition = Partition::new(points).map_err(|e| ParseError {
        line: points_line,
        msg: e.to_string(),
    })?;
    let n_active = partition.n_active();
    let n_imp = partition.n_impulses();

    for (&i, slots) in &nonlin {
        if i > n_active {
            return err(
                slots.decl_line,
                format!(
                    "unexpected [nonlinearity.{i}]: the partition has {n_active} forcing interval(s)"
                ),
            );
        }
    }
    for (&i, (_, decl_line)) in &impulses {
        if i > n_imp {
            return err(
                *decl_line,
                format!("unexpected [impulse.{i}]: the partition has {n_imp} impulse time(s)"),
            );
        }
    }
    let mut f = Vec::with_capacity(n_active);
    let mut g = Vec::with_capacity(n_active);
    for i in 1..=n_active {
        let Some(slots) = nonlin.remove(&i) else {
            return err(
                0,
                format!("missing [nonlinearity.{i}] (the partition has {n_active} forcing interval(s))"),
            );
        };
        f.push(slots.f.require(&format!("[nonlinearity.{i}]"))?.0);
        g.push(slots.g.require(&format!("[nonlinearity.{i}]"))?.0);
    }
    let mut imps = Vec::with_capacity(n_imp);
    for i in 1..=n_imp {
        let Some((slot, _)) = impulses.remove(&i) else {
            return err(
                0,
                format!("missing [impulse.{i}] (the partition has {n_imp} impulse time(s))"),
            );
        };
        imps.push(slot.require(&format!("[impulse.{i}]"))?.0);
    }

    let growth = GrowthConstants {
        a1: a1.require("[growth]")?.0,
        theta1: theta1.require("[growth]")?.0,
        a2: a2.require("[growth]")?.0,
        theta2: theta2.require("[growth]")?.0,
        a_star: a_star.require("[growth]")?.0,
    };
    ProblemSpec::new(
        partition,
        h.require("[coefficients]")?.0,
        beta.require("[coefficients]")?.0,
        epsilon.require("[coefficients]")?.0,
        delta.require("[coefficients]")?.0,
        growth,
        f,
        g,
        imps,
    )
    .map_err(|e| ParseError {
        line: 0,
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn bundled_reference_round_trips() {
        let spec = parse(bundled::EXAMPLE4).unwrap();
        assert_eq!(
            spec.partition.points(),
            &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        );
        assert_eq!(spec.beta, 1.9);
        assert_eq!(spec.epsilon, 0.0);
        assert_eq!(spec.delta, 0.9);
        assert_eq!(spec.growth.a1, 1.1);
        assert_eq!(spec.growth.theta1, 1.5);
        assert_eq!(spec.growth.a2, 5.0);
        assert_eq!(spec.growth.theta2, 4.0 / 3.0);
        assert_eq!(spec.growth.a_star, 0.56);
        assert_eq!(spec.f.len(), 3);
        assert_eq!(spec.impulses.len(), 2);
        // middle interval carries the sin factor, outer ones do not
        let u: f64 = 0.37;
        let outer = u.abs().powf(-0.5) * u;
        assert!((spec.f[0].eval(0.1, u).unwrap() - outer).abs() < 1e-15);
        assert!((spec.f[2].eval(0.9, u).unwrap() - outer).abs() < 1e-15);
        let middle = outer * (1.0 + 0.1 * u.abs().sin());
        assert!((spec.f[1].eval(0.5, u).unwrap() - middle).abs() < 1e-15);
    }

    #[test]
    fn all_bundled_variants_parse() {
        for text in [
            bundled::EXAMPLE4,
            bundled::EVEN_IMPULSE,
            bundled::SUPERQUADRATIC,
            bundled::BETA3,
            bundled::PERTURBED,
        ] {
            parse(text).unwrap();
        }
        assert_eq!(parse(bundled::BETA3).unwrap().beta, 3.0);
        let g = &parse(bundled::PERTURBED).unwrap().g;
        assert!(g.iter().all(|e| e.eval(0.3, 0.2).unwrap() == 1.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = bundled::EXAMPLE4.replace("beta = 1.9", "betta = 1.9");
        let e = parse(&text).unwrap_err();
        assert!(e.msg.contains("unknown key `betta`"), "{e}");
        assert!(e.line > 0, "{e}");
        assert!(e.to_string().starts_with(&format!("line {}", e.line)));

        let text = bundled::EXAMPLE4.replace("format_version = 1", "format_version = 2");
        let e = parse(&text).unwrap_err();
        assert!(e.msg.contains("unsupported format_version"), "{e}");

        let text = bundled::EXAMPLE4.replace("format_version = 1", "");
        let e = parse(&text).unwrap_err();
        assert!(e.msg.contains("format_version"), "{e}");

        let text = bundled::EXAMPLE4.replace("beta = 1.9", "beta = 1.9\nbeta = 2");
        let e = parse(&text).unwrap_err();
        assert!(e.msg.contains("duplicate key `beta`"), "{e}");
    }

    #[test]
    fn decimal_literals_only() {
        for bad in ["inf", "nan", "0x12", "1_000", "1.0f64", "two"] {
            let text = bundled::EXAMPLE4.replace("beta = 1.9", &format!("beta = {bad}"));
            let e = parse(&text).unwrap_err();
            assert!(e.msg.contains("decimal literal"), "{bad}: {e}");
        }
        for good in ["1.9", "-1.9", "+0.5", "2e-3", "1.5E2", ".5", "5."] {
            let text = bundled::EXAMPLE4.replace("beta = 1.9", &format!("beta = {good}"));
            parse(&text).unwrap_or_else(|e| panic!("{good}: {e}"));
        }
    }

    #[test]
    fn shape_mismatches_name_the_section() {
        let text = bundled::EXAMPLE4.replace("[impulse.2]", "[impulse.7]");
        let e = parse(&text).unwrap_err();
        assert!(e.msg.contains("unexpected [impulse.7]"), "{e}");

        let mut cut = String::new();
        let mut skip = false;
        for l in bundled::EXAMPLE4.lines() {
            if l == "[nonlinearity.3]" {
                skip = true;
            }
            if skip && l == "[impulse.1]" {
                skip = false;
            }
            if !skip {
                cut.push_str(l);
                cut.push('\n');
            }
        }
        let e = parse(&cut).unwrap_err();
        assert!(e.msg.contains("missing [nonlinearity.3]"), "{e}");

        let text = bundled::EXAMPLE4.replace("expr = \"abs(u)^(-2/3)*u\"", "");
        let e = parse(&text).unwrap_err();
        assert!(e.msg.contains("missing key `expr`"), "{e}");
    }

    #[test]
    fn growth_violations_pass_through_core_messages() {
        // a_star must stay below a1/theta1 ≈ 0.7333
        let text = bundled::EXAMPLE4.replace("a_star = 0.56", "a_star = 0.9");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.line, 0);
        assert!(e.msg.contains("a_star") || e.msg.contains("a*"), "{e}");
    }
}
