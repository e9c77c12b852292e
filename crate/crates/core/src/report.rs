//! Text formats for solver output.
//!
//! Result file: one line `i alpha_i flipped` per agent, where `flipped` is 1
//! for an agent at its lower bound, then the footer
//! `objective <v> err <b> iters <t> mistakes <j>`. Budgeted results add a
//! `selected` column and a second footer `k <k> strategy <name> stalled <0|1>`.

use std::io::{BufRead, Write};

use crate::budgeted::BudgetedResult;
use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::search::{SolveResult, SolveTrace};

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetFooter {
    pub k: usize,
    pub strategy: String,
    pub stalled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultFile {
    pub alpha: Vec<f64>,
    pub flipped: Vec<bool>,
    pub selected: Option<Vec<bool>>,
    pub objective: f64,
    pub err: f64,
    pub iterations: u64,
    pub mistakes: u64,
    pub budget: Option<BudgetFooter>,
}

impl ResultFile {
    pub fn from_solve(result: &SolveResult) -> Self {
        Self {
            alpha: result.alpha.as_slice().to_vec(),
            flipped: result.at_lower.clone(),
            selected: None,
            objective: result.objective,
            err: result.objective_err,
            iterations: result.iterations,
            mistakes: result.trace.mistakes,
            budget: None,
        }
    }

    pub fn from_budgeted(inst: &ProblemInstance, result: &BudgetedResult) -> Self {
        Self {
            alpha: result.alpha.clone(),
            flipped: result.alpha.iter().zip(&inst.lower).map(|(a, l)| a == l).collect(),
            selected: Some(result.selected.clone()),
            objective: result.objective,
            err: result.objective_err,
            iterations: result.iterations,
            mistakes: result.mistakes,
            budget: Some(BudgetFooter {
                k: result.k,
                strategy: result.strategy.name().to_string(),
                stalled: result.stalled,
            }),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, (a, f)) in self.alpha.iter().zip(&self.flipped).enumerate() {
            write!(out, "{i} {a:.16e} {}", u8::from(*f))?;
            if let Some(sel) = &self.selected {
                write!(out, " {}", u8::from(sel[i]))?;
            }
            writeln!(out)?;
        }
        writeln!(
            out,
            "objective {:.16e} err {:.6e} iters {} mistakes {}",
            self.objective, self.err, self.iterations, self.mistakes
        )?;
        if let Some(b) = &self.budget {
            writeln!(out, "k {} strategy {} stalled {}", b.k, b.strategy, u8::from(b.stalled))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut file = ResultFile {
            alpha: Vec::new(),
            flipped: Vec::new(),
            selected: None,
            objective: f64::NAN,
            err: f64::NAN,
            iterations: 0,
            mistakes: 0,
            budget: None,
        };
        let mut seen_footer = false;
        let mut selected = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let bad = |m: &str| Error::Parse {
                line: lineno,
                message: m.to_string(),
            };
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.first().copied() {
                None => continue,
                Some("objective") => {
                    let kv = pairs(&tok).ok_or_else(|| bad("malformed objective footer"))?;
                    for (key, v) in kv {
                        match key {
                            "objective" => file.objective = v.parse().map_err(|_| bad("bad objective"))?,
                            "err" => file.err = v.parse().map_err(|_| bad("bad err"))?,
                            "iters" => file.iterations = v.parse().map_err(|_| bad("bad iters"))?,
                            "mistakes" => file.mistakes = v.parse().map_err(|_| bad("bad mistakes"))?,
                            _ => return Err(bad("unknown footer key")),
                        }
                    }
                    seen_footer = true;
                }
                Some("k") => {
                    let kv = pairs(&tok).ok_or_else(|| bad("malformed budget footer"))?;
                    let mut footer = BudgetFooter {
                        k: 0,
                        strategy: String::new(),
                        stalled: false,
                    };
                    for (key, v) in kv {
                        match key {
                            "k" => footer.k = v.parse().map_err(|_| bad("bad k"))?,
                            "strategy" => footer.strategy = v.to_string(),
                            "stalled" => footer.stalled = parse_flag(v).ok_or_else(|| bad("bad stalled flag"))?,
                            _ => return Err(bad("unknown footer key")),
                        }
                    }
                    file.budget = Some(footer);
                }
                Some(_) if seen_footer => return Err(bad("agent line after footer")),
                Some(first) => {
                    if tok.len() != 3 && tok.len() != 4 {
                        return Err(bad("agent line must be `i alpha flipped [selected]`"));
                    }
                    let i: usize = first.parse().map_err(|_| bad("bad agent index"))?;
                    if i != file.alpha.len() {
                        return Err(bad("agent lines out of order"));
                    }
                    file.alpha.push(tok[1].parse().map_err(|_| bad("bad alpha"))?);
                    file.flipped
                        .push(parse_flag(tok[2]).ok_or_else(|| bad("bad flipped flag"))?);
                    if let Some(s) = tok.get(3) {
                        selected.push(parse_flag(s).ok_or_else(|| bad("bad selected flag"))?);
                    }
                }
            }
        }
        if !seen_footer {
            return Err(Error::Parse {
                line: 0,
                message: "missing objective footer".into(),
            });
        }
        if !selected.is_empty() {
            if selected.len() != file.alpha.len() {
                return Err(Error::Parse {
                    line: 0,
                    message: "selected column present on some lines only".into(),
                });
            }
            file.selected = Some(selected);
        }
        Ok(file)
    }
}

fn pairs<'a>(tok: &[&'a str]) -> Option<Vec<(&'a str, &'a str)>> {
    if !tok.len().is_multiple_of(2) {
        return None;
    }
    Some(tok.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn parse_flag(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// `iter,ratio_lower,phase`, one row per recorded point.
pub fn write_trace<W: Write>(trace: &SolveTrace, mut out: W) -> Result<()> {
    writeln!(out, "iter,ratio_lower,phase")?;
    for p in &trace.points {
        writeln!(out, "{},{:.6},{}", p.iter, p.ratio_lower, p.phase)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub ratio_selected: f64,
    pub avg_equilibrium: f64,
    pub strategy: String,
    pub seed: u64,
}

/// One row per round of `result`: selected fraction of agents and `1ᵀz / n`.
pub fn sweep_rows(result: &BudgetedResult, seed: u64) -> Vec<SweepRow> {
    let n = result.alpha.len() as f64;
    result
        .history
        .iter()
        .map(|h| SweepRow {
            ratio_selected: h.selected as f64 / n,
            avg_equilibrium: h.objective / n,
            strategy: result.strategy.name().to_string(),
            seed,
        })
        .collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "ratio_selected,avg_equilibrium,strategy,seed")?;
    for r in rows {
        writeln!(
            out,
            "{:.6},{:.12},{},{}",
            r.ratio_selected, r.avg_equilibrium, r.strategy, r.seed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultFile {
        ResultFile {
            alpha: vec![0.001, 0.999, 0.999],
            flipped: vec![true, false, false],
            selected: None,
            objective: 1.25,
            err: 3e-13,
            iterations: 42,
            mistakes: 0,
            budget: None,
        }
    }

    #[test]
    fn result_round_trip() {
        let r = sample();
        let text = r.to_text();
        assert!(text.ends_with("mistakes 0\n"));
        assert_eq!(ResultFile::read(text.as_bytes()).unwrap(), r);
    }

    #[test]
    fn budgeted_round_trip() {
        let mut r = sample();
        r.selected = Some(vec![true, false, true]);
        r.budget = Some(BudgetFooter {
            k: 2,
            strategy: "bgg".into(),
            stalled: false,
        });
        let text = r.to_text();
        assert!(text.lines().last().unwrap() == "k 2 strategy bgg stalled 0");
        assert_eq!(ResultFile::read(text.as_bytes()).unwrap(), r);
    }

    #[test]
    fn malformed_result_names_line() {
        let text = "0 0.5 1\n1 x 0\nobjective 1 err 0 iters 1 mistakes 0\n";
        match ResultFile::read(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ResultFile::read("0 0.5 1\n".as_bytes()).is_err());
    }
}
