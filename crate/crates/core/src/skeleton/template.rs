//! Line-oriented skeleton template format.
//!
//! ```text
//! JOINT <id> <x> <y> <z> <radius>
//! BONE <id> <joint_a> <joint_b> [PELVIS] [CONNECTOR frac=<f>]
//! CHAIN <id> <bone_id>...
//! ROOT <joint_id>
//! BOUND rho=<value>
//! ```
//!
//! `#` starts a comment. Serialization writes joints and bones sorted by id
//! and chains in declaration order, with numbers formatted like C's `%.9g`.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::{BoneSpec, Joint, Skeleton, SkeletonSpec, DEFAULT_PROPORTION_BOUND};

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let content = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in content.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &content[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &content[s..],
            column: s + 1,
        });
    }
    out
}

fn number(tok: &Token, line: usize) -> Result<f64> {
    match tok.text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(
            line,
            tok.column,
            format!("expected a number, found `{}`", tok.text),
        )),
    }
}

fn keyed(tok: &Token, key: &str, line: usize) -> Result<f64> {
    let value = tok
        .text
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::parse(line, tok.column, format!("expected `{key}=<value>`")))?;
    number(
        &Token {
            text: value,
            column: tok.column + key.len() + 1,
        },
        line,
    )
}

pub(super) fn parse(source: &str) -> Result<Skeleton> {
    let mut spec = SkeletonSpec::default();
    for (index, raw) in source.lines().enumerate() {
        let line = index + 1;
        let toks = tokenize(raw);
        let Some(head) = toks.first() else {
            continue;
        };
        let arity = |min: usize, max: Option<usize>| -> Result<()> {
            let n = toks.len() - 1;
            if n < min || max.is_some_and(|m| n > m) {
                return Err(Error::parse(
                    line,
                    head.column,
                    format!("wrong number of fields for {}", head.text),
                ));
            }
            Ok(())
        };
        match head.text {
            "JOINT" => {
                arity(5, Some(5))?;
                spec.joints.push(Joint {
                    id: toks[1].text.to_string(),
                    position: Vec3::new(
                        number(&toks[2], line)?,
                        number(&toks[3], line)?,
                        number(&toks[4], line)?,
                    ),
                    radius: number(&toks[5], line)?,
                });
            }
            "BONE" => {
                arity(3, None)?;
                let mut bone = BoneSpec {
                    id: toks[1].text.to_string(),
                    joint_a: toks[2].text.to_string(),
                    joint_b: toks[3].text.to_string(),
                    pelvis: false,
                    connector: None,
                };
                let mut i = 4;
                while i < toks.len() {
                    match toks[i].text {
                        "PELVIS" => bone.pelvis = true,
                        "CONNECTOR" => {
                            let tok = toks.get(i + 1).ok_or_else(|| {
                                Error::parse(line, toks[i].column, "CONNECTOR needs frac=<f>")
                            })?;
                            bone.connector = Some(keyed(tok, "frac", line)?);
                            i += 1;
                        }
                        other => {
                            return Err(Error::parse(
                                line,
                                toks[i].column,
                                format!("unknown bone flag `{other}`"),
                            ))
                        }
                    }
                    i += 1;
                }
                spec.bones.push(bone);
            }
            "CHAIN" => {
                arity(2, None)?;
                spec.chains.push((
                    toks[1].text.to_string(),
                    toks[2..].iter().map(|t| t.text.to_string()).collect(),
                ));
            }
            "ROOT" => {
                arity(1, Some(1))?;
                if spec.root.is_some() {
                    return Err(Error::parse(line, head.column, "ROOT declared twice"));
                }
                spec.root = Some(toks[1].text.to_string());
            }
            "BOUND" => {
                arity(0, Some(1))?;
                spec.bound = Some(match toks.get(1) {
                    Some(tok) => keyed(tok, "rho", line)?,
                    None => DEFAULT_PROPORTION_BOUND,
                });
            }
            other => {
                return Err(Error::parse(
                    line,
                    head.column,
                    format!("unknown record `{other}`"),
                ))
            }
        }
    }
    Skeleton::from_spec(spec)
}

pub(super) fn serialize(s: &Skeleton) -> String {
    let mut out = String::new();
    for j in s.joints() {
        out.push_str(&format!(
            "JOINT {} {} {} {} {}\n",
            j.id,
            format_float(j.position.x),
            format_float(j.position.y),
            format_float(j.position.z),
            format_float(j.radius)
        ));
    }
    for b in s.bones() {
        out.push_str(&format!(
            "BONE {} {} {}",
            b.id,
            s.joints()[b.joint_a].id,
            s.joints()[b.joint_b].id
        ));
        if b.pelvis {
            out.push_str(" PELVIS");
        }
        if let Some(frac) = b.connector {
            out.push_str(&format!(" CONNECTOR frac={}", format_float(frac)));
        }
        out.push('\n');
    }
    for c in s.chains() {
        out.push_str(&format!("CHAIN {}", c.id));
        for &k in &c.bones {
            out.push(' ');
            out.push_str(&s.bones()[k].id);
        }
        out.push('\n');
    }
    out.push_str(&format!("ROOT {}\n", s.joints()[s.root()].id));
    if let Some(rho) = s.bound() {
        out.push_str(&format!("BOUND rho={}\n", format_float(rho)));
    }
    out
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed,
/// scientific notation for exponents below -4 or above 8.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
