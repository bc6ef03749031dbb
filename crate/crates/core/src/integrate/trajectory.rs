use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::num;
use crate::model::SpectralModel;
use crate::noise::NoisePath;

/// Coordinates a trajectory is stored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repr {
    /// Random-PDE coordinates `v = e^{-z} u`.
    V,
    /// SPDE coordinates `u`.
    U,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub repr: Repr,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    fn rescale(&self, path: &NoisePath, sign: f64, repr: Repr) -> Result<Trajectory> {
        let states = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| {
                if !path.grid().contains(t) {
                    return Err(Error::range(format!("t = {t} outside the noise path")));
                }
                let f = (sign * path.z_at(t)).exp();
                Ok(s.iter().map(|x| x * f).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Trajectory {
            times: self.times.clone(),
            states,
            repr,
        })
    }

    /// `u = e^{z} v`.
    pub fn to_u(&self, path: &NoisePath) -> Result<Trajectory> {
        match self.repr {
            Repr::U => Ok(self.clone()),
            Repr::V => self.rescale(path, 1.0, Repr::U),
        }
    }

    /// `v = e^{-z} u`.
    pub fn to_v(&self, path: &NoisePath) -> Result<Trajectory> {
        match self.repr {
            Repr::V => Ok(self.clone()),
            Repr::U => self.rescale(path, -1.0, Repr::V),
        }
    }

    /// CSV with columns `t, c1..cn, norm` and an optional extra column.
    pub fn write_csv<W: Write>(
        &self,
        model: Option<&SpectralModel>,
        extra: Option<(&str, &[f64])>,
        mut out: W,
    ) -> Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..=n).map(|k| format!("c{k}")));
        header.push("norm".into());
        if let Some((name, _)) = extra {
            header.push(name.into());
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row: Vec<String> = vec![num(*t)];
            row.extend(s.iter().map(|x| num(*x)));
            let norm = match model {
                Some(m) if m.n_total() == s.len() => m.norm(s),
                _ => s.iter().map(|x| x * x).sum::<f64>().sqrt(),
            };
            row.push(num(norm));
            if let Some((_, vals)) = extra {
                row.push(vals.get(i).map_or_else(String::new, |v| num(*v)));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
