//! Half-plane and quadrant predicates over room coordinates, written as
//! conjunctions like "x>0" or "x<0 and y<0".

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cmp {
    Less,
    Greater,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Clause {
    axis: Axis,
    cmp: Cmp,
    bound: f64,
}

impl Clause {
    fn holds(&self, x: f64, y: f64) -> bool {
        let v = match self.axis {
            Axis::X => x,
            Axis::Y => y,
        };
        match self.cmp {
            Cmp::Less => v < self.bound,
            Cmp::Greater => v > self.bound,
        }
    }
}

/// A conjunction of strict half-plane constraints on (x, y).
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSpec {
    clauses: Vec<Clause>,
}

impl RegionSpec {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.clauses.iter().all(|c| c.holds(x, y))
    }
}

impl std::str::FromStr for RegionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let text = s.trim();
        if text.is_empty() {
            return Err(Error::invalid("region spec is empty"));
        }
        let clauses = text
            .split(" and ")
            .map(parse_clause)
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionSpec { clauses })
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            let axis = match c.axis {
                Axis::X => "x",
                Axis::Y => "y",
            };
            let op = match c.cmp {
                Cmp::Less => "<",
                Cmp::Greater => ">",
            };
            write!(f, "{axis}{op}{}", c.bound)?;
        }
        Ok(())
    }
}

fn parse_clause(text: &str) -> Result<Clause> {
    let text = text.trim();
    let (idx, cmp) = text
        .char_indices()
        .find_map(|(i, ch)| match ch {
            '<' => Some((i, Cmp::Less)),
            '>' => Some((i, Cmp::Greater)),
            _ => None,
        })
        .ok_or_else(|| Error::invalid(format!("region clause `{text}` has no < or >")))?;
    let axis = match text[..idx].trim() {
        "x" => Axis::X,
        "y" => Axis::Y,
        other => {
            return Err(Error::invalid(format!(
                "region clause `{text}` names `{other}`, expected x or y"
            )))
        }
    };
    let bound: f64 = text[idx + 1..]
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("region clause `{text}` has a bad bound")))?;
    if !bound.is_finite() {
        return Err(Error::invalid(format!(
            "region clause `{text}` has a non-finite bound"
        )));
    }
    Ok(Clause { axis, cmp, bound })
}

/// True iff the room position `[x, y]` falls inside the hazardous region.
pub fn is_hazardous(state: &[f64], region: &RegionSpec) -> bool {
    region.contains(state[0], state[1])
}
