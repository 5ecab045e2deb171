//! Sampled time series produced by the integrators and discrete maps, plus
//! CSV export.

use std::io;

use nalgebra::DVector;

use crate::diagnostics::EnergyRecord;
use crate::discrete::DiscreteKind;

/// Which dynamical system produced a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryMode {
    /// Second-order dynamics constrained to the unit price sphere.
    Sphere,
    /// Second-order dynamics in deviation coordinates.
    Flat,
    /// First-order adjustment on the unit price sphere.
    FirstOrder,
    /// One of the discrete-time agent maps; time is a step index.
    Discrete(DiscreteKind),
}

impl std::fmt::Display for TrajectoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrajectoryMode::Sphere => write!(f, "sphere"),
            TrajectoryMode::Flat => write!(f, "flat"),
            TrajectoryMode::FirstOrder => write!(f, "first_order"),
            TrajectoryMode::Discrete(kind) => write!(f, "discrete:{kind}"),
        }
    }
}

/// One recorded state with its per-sample diagnostics.
#[derive(Clone, Debug)]
pub struct Sample {
    /// Simulation time (continuous modes) or step index (discrete modes).
    pub t: f64,
    /// Price point (sphere/first-order) or deviation vector (flat/discrete
    /// modes store prices again; see the producing module).
    pub position: DVector<f64>,
    /// Velocity or per-step price change.
    pub velocity: DVector<f64>,
    /// Energy bookkeeping at this sample.
    pub energy: EnergyRecord,
    /// Angular momentum, recorded for two-commodity deviation dynamics.
    pub angular_momentum: Option<f64>,
}

/// Positivity bookkeeping over the sampled price points: violations are
/// recorded, never clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositivityReport {
    /// Number of samples with at least one negative price component.
    pub violating_samples: usize,
    /// Smallest price component seen across all samples.
    pub min_component: f64,
}

/// Uniformly sampled run output.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Producing system.
    pub mode: TrajectoryMode,
    /// Number of commodities.
    pub dim: usize,
    /// Samples in strictly increasing time order.
    pub samples: Vec<Sample>,
    /// Human-readable echo of the parameters and model identity.
    pub params_echo: String,
    /// Set when integration aborted on a non-finite state; the samples then
    /// hold the partial run up to the last finite state.
    pub error: Option<String>,
    /// Positivity bookkeeping over the sampled points.
    pub positivity: PositivityReport,
}

impl Trajectory {
    /// True when the run aborted early on a numeric failure.
    pub fn is_aborted(&self) -> bool {
        self.error.is_some()
    }

    /// Last recorded sample.
    pub fn terminal(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least one sample")
    }

    /// Sample times.
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// True when every sample carries an angular-momentum reading.
    pub fn has_angular_momentum(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.angular_momentum.is_some())
    }

    /// Writes the trajectory as CSV: header
    /// `t,p1..pn,v1..vn,energy,kinetic,potential,dissipation_rate,injection_rate[,L]`,
    /// one row per sample, shortest round-trip decimal formatting. Discrete
    /// runs print `t` as an integer step index; the `L` column appears only
    /// when every sample has one.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let with_l = self.has_angular_momentum();
        let mut header = String::from("t");
        for i in 1..=self.dim {
            header.push_str(&format!(",p{i}"));
        }
        for i in 1..=self.dim {
            header.push_str(&format!(",v{i}"));
        }
        header.push_str(",energy,kinetic,potential,dissipation_rate,injection_rate");
        if with_l {
            header.push_str(",L");
        }
        writeln!(w, "{header}")?;
        let discrete = matches!(self.mode, TrajectoryMode::Discrete(_));
        for s in &self.samples {
            if discrete {
                write!(w, "{}", s.t as i64)?;
            } else {
                write!(w, "{}", s.t)?;
            }
            for x in s.position.iter() {
                write!(w, ",{x}")?;
            }
            for x in s.velocity.iter() {
                write!(w, ",{x}")?;
            }
            write!(
                w,
                ",{},{},{},{},{}",
                s.energy.total,
                s.energy.kinetic,
                s.energy.potential,
                s.energy.dissipation_rate,
                s.energy.injection_rate
            )?;
            if with_l {
                write!(w, ",{}", s.angular_momentum.unwrap_or(f64::NAN))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// CSV export into a string.
    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, p: &[f64], v: &[f64], l: Option<f64>) -> Sample {
        Sample {
            t,
            position: DVector::from_row_slice(p),
            velocity: DVector::from_row_slice(v),
            energy: EnergyRecord {
                kinetic: 0.5,
                potential: 0.25,
                total: 0.75,
                dissipation_rate: 0.1,
                injection_rate: 0.0,
            },
            angular_momentum: l,
        }
    }

    fn two_sample_trajectory(mode: TrajectoryMode, l: Option<f64>) -> Trajectory {
        Trajectory {
            mode,
            dim: 2,
            samples: vec![
                sample(0.0, &[1.0, 0.0], &[0.0, 0.1], l),
                sample(1.0, &[0.6, 0.8], &[-0.08, 0.06], l),
            ],
            params_echo: "test".to_string(),
            error: None,
            positivity: PositivityReport { violating_samples: 0, min_component: 0.0 },
        }
    }

    #[test]
    fn csv_header_and_shape() {
        let traj = two_sample_trajectory(TrajectoryMode::Sphere, None);
        let csv = traj.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,p1,p2,v1,v2,energy,kinetic,potential,dissipation_rate,injection_rate"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 10);
        assert_eq!(row[0], "0");
        assert_eq!(row[1], "1");
        assert_eq!(row[5], "0.75");
    }

    #[test]
    fn csv_includes_l_column_when_all_samples_have_it() {
        let traj = two_sample_trajectory(TrajectoryMode::Flat, Some(0.125));
        let csv = traj.to_csv_string();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().ends_with(",L"));
        assert!(lines.next().unwrap().ends_with(",0.125"));
    }

    #[test]
    fn csv_round_trips_awkward_floats() {
        let x = 0.1 + 0.2;
        let traj = Trajectory {
            mode: TrajectoryMode::Flat,
            dim: 1,
            samples: vec![sample(0.0, &[x], &[-x], None), sample(0.5, &[x / 3.0], &[0.0], None)],
            params_echo: String::new(),
            error: None,
            positivity: PositivityReport { violating_samples: 0, min_component: 0.0 },
        };
        let csv = traj.to_csv_string();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap(), x);
        assert_eq!(row[2].parse::<f64>().unwrap(), -x);
    }

    #[test]
    fn discrete_time_prints_as_integer_index() {
        let traj = Trajectory {
            mode: TrajectoryMode::Discrete(DiscreteKind::Laggard),
            dim: 2,
            samples: vec![
                sample(0.0, &[1.5, 1.0], &[0.0, 0.0], None),
                sample(7.0, &[1.4, 1.0], &[-0.1, 0.0], None),
            ],
            params_echo: String::new(),
            error: None,
            positivity: PositivityReport { violating_samples: 0, min_component: 0.0 },
        };
        let csv = traj.to_csv_string();
        let rows: Vec<&str> = csv.lines().collect();
        assert!(rows[1].starts_with("0,"));
        assert!(rows[2].starts_with("7,"));
        assert_eq!(format!("{}", traj.mode), "discrete:laggard");
    }

    #[test]
    fn mode_labels() {
        assert_eq!(TrajectoryMode::Sphere.to_string(), "sphere");
        assert_eq!(TrajectoryMode::Flat.to_string(), "flat");
        assert_eq!(TrajectoryMode::FirstOrder.to_string(), "first_order");
        assert_eq!(
            TrajectoryMode::Discrete(DiscreteKind::Bullbear).to_string(),
            "discrete:bullbear"
        );
    }
}
