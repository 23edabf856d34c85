//! Confidence bands `{y : ‖y − l(t)‖ ≤ ξ·max{h^γ, δ}}` around a computed
//! interpolant `l`, sampled on an equispaced time grid.

use std::io::{self, Write};

use crate::analysis::reference::ReferenceSolution;
use crate::ivp::one_norm_diff;
use crate::schemes::{interpolate, Trajectory};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand<T> {
    pub trajectory: Trajectory<T>,
    pub radius: T,
    /// Level `ε` the multiplier was calibrated for, when known.
    pub epsilon: Option<f64>,
    pub times: Vec<T>,
    /// Interpolant at `times`, row-major `times.len() × d`.
    pub center: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

/// Band of radius `xi·max{h^γ, δ}` around the interpolant of `tr`.
/// Per coordinate the envelopes are `center ± radius`, the extent of the
/// one-norm ball along each axis.
pub fn confidence_band<T: Scalar>(
    tr: &Trajectory<T>,
    gamma: T,
    delta: T,
    xi: T,
    grid_points: usize,
) -> Result<ConfidenceBand<T>> {
    if !(xi >= T::zero() && xi.is_finite()) {
        return Err(Error::domain(format!("band multiplier must be finite and nonnegative, got {xi}")));
    }
    if grid_points < 2 {
        return Err(Error::domain("a band needs at least two grid points"));
    }
    let g = tr.grid();
    let radius = xi * g.h().powf(gamma).max(delta);
    let d = tr.dim();
    let span = g.b() - g.a();
    let last = T::from_usize_lossy(grid_points - 1);
    let mut times = Vec::with_capacity(grid_points);
    let mut center = Vec::with_capacity(grid_points * d);
    for i in 0..grid_points {
        let t = if i + 1 == grid_points { g.b() } else { g.a() + span * T::from_usize_lossy(i) / last };
        times.push(t);
        center.extend(interpolate(tr, t)?);
    }
    let lower = center.iter().map(|c| *c - radius).collect();
    let upper = center.iter().map(|c| *c + radius).collect();
    Ok(ConfidenceBand { trajectory: tr.clone(), radius, epsilon: None, times, center, lower, upper })
}

impl<T: Scalar> ConfidenceBand<T> {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn dim(&self) -> usize {
        self.trajectory.dim()
    }

    /// Whether `‖z(t) − l(t)‖ ≤ radius` at every grid time.
    pub fn contains(&self, reference: &ReferenceSolution<T>) -> Result<bool> {
        let d = self.dim();
        let mut z = vec![T::zero(); d];
        for (i, &t) in self.times.iter().enumerate() {
            reference.evaluate(t, &mut z)?;
            if one_norm_diff(&z, &self.center[i * d..(i + 1) * d]) > self.radius {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `t,lower,upper,center` rows (suffixed `_k` per coordinate when d > 1),
    /// plus a `reference` column when one is given.
    pub fn write_csv<W: Write>(&self, mut w: W, reference: Option<&ReferenceSolution<T>>) -> io::Result<()> {
        let d = self.dim();
        let columns = ["lower", "upper", "center", "reference"];
        let used = if reference.is_some() { 4 } else { 3 };
        write!(w, "t")?;
        for name in &columns[..used] {
            if d == 1 {
                write!(w, ",{name}")?;
            } else {
                for k in 1..=d {
                    write!(w, ",{name}_{k}")?;
                }
            }
        }
        writeln!(w)?;
        let mut z = vec![T::zero(); d];
        for (i, &t) in self.times.iter().enumerate() {
            let row = i * d..(i + 1) * d;
            write!(w, "{t}")?;
            for part in [&self.lower[row.clone()], &self.upper[row.clone()], &self.center[row.clone()]] {
                for v in part {
                    write!(w, ",{v}")?;
                }
            }
            if let Some(r) = reference {
                r.evaluate(t, &mut z).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
                for v in &z {
                    write!(w, ",{v}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Standalone SVG of the first coordinate: shaded band, interpolant and
    /// (optionally) the reference curve.
    pub fn write_svg<W: Write>(&self, mut w: W, reference: Option<&ReferenceSolution<T>>) -> io::Result<()> {
        const WIDTH: f64 = 640.0;
        const HEIGHT: f64 = 400.0;
        const MARGIN: f64 = 48.0;
        let d = self.dim();
        let times: Vec<f64> = self.times.iter().map(|t| t.as_f64()).collect();
        let column = |v: &[T]| -> Vec<f64> { (0..times.len()).map(|i| v[i * d].as_f64()).collect() };
        let (lower, upper, center) = (column(&self.lower), column(&self.upper), column(&self.center));
        let exact: Option<Vec<f64>> = match reference {
            Some(r) => {
                let mut z = vec![T::zero(); d];
                let mut out = Vec::with_capacity(times.len());
                for &t in &self.times {
                    r.evaluate(t, &mut z).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
                    out.push(z[0].as_f64());
                }
                Some(out)
            }
            None => None,
        };

        let (t0, t1) = (times[0], times[times.len() - 1]);
        let mut lo = lower.iter().chain(exact.iter().flatten()).copied().fold(f64::INFINITY, f64::min);
        let mut hi = upper.iter().chain(exact.iter().flatten()).copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let x = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
        let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);
        let polyline = |vals: &[f64]| -> String {
            times.iter().zip(vals).map(|(t, v)| format!("{:.2},{:.2}", x(*t), y(*v))).collect::<Vec<_>>().join(" ")
        };

        writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#)?;
        writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
        let mut outline: Vec<String> = times.iter().zip(&upper).map(|(t, v)| format!("{:.2},{:.2}", x(*t), y(*v))).collect();
        outline.extend(times.iter().zip(&lower).rev().map(|(t, v)| format!("{:.2},{:.2}", x(*t), y(*v))));
        writeln!(w, r#"<polygon points="{}" fill="navy" fill-opacity="0.25" stroke="none"/>"#, outline.join(" "))?;
        writeln!(w, r#"<polyline points="{}" fill="none" stroke="navy" stroke-width="1.5"/>"#, polyline(&center))?;
        if let Some(exact) = &exact {
            writeln!(
                w,
                r#"<polyline points="{}" fill="none" stroke="darkred" stroke-width="1.2" stroke-dasharray="5,3"/>"#,
                polyline(exact)
            )?;
        }
        let axis_y = HEIGHT - MARGIN;
        writeln!(w, r#"<line x1="{MARGIN}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#, WIDTH - MARGIN)?;
        writeln!(w, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{axis_y}" stroke="black"/>"#)?;
        let label = |w: &mut W, px: f64, py: f64, anchor: &str, text: String| {
            writeln!(w, r#"<text x="{px:.2}" y="{py:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{text}</text>"#)
        };
        label(&mut w, x(t0), axis_y + 16.0, "middle", format!("{t0}"))?;
        label(&mut w, x(t1), axis_y + 16.0, "middle", format!("{t1}"))?;
        label(&mut w, MARGIN - 6.0, y(lo) + 4.0, "end", format!("{lo:.3}"))?;
        label(&mut w, MARGIN - 6.0, y(hi) + 4.0, "end", format!("{hi:.3}"))?;
        label(&mut w, WIDTH / 2.0, MARGIN / 2.0, "middle", format!("radius {:.4}", self.radius.as_f64()))?;
        writeln!(w, "</svg>")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivp::TestProblem;
    use crate::noise::{make_oracle, NoiseKind, NoiseModel};
    use crate::schemes::{run_explicit_euler, run_rk2, SchemeKind};

    fn ee_a(n: usize, seed: u64) -> Trajectory<f64> {
        let p = TestProblem::A.spec();
        let delta = 1.0 / n as f64;
        let mut o = make_oracle(&p, NoiseModel::new(NoiseKind::RelativeEe, delta).unwrap(), seed, 0).unwrap();
        run_explicit_euler(&mut o, n).unwrap()
    }

    #[test]
    fn explicit_euler_band_radius() {
        let band = confidence_band(&ee_a(25, 1), 1.0, 0.04, 3.0, 101).unwrap();
        assert!((band.radius - 0.12).abs() < 1e-12);
        assert_eq!(band.times.len(), 101);
        assert_eq!(band.times[100], 1.0);
    }

    #[test]
    fn runge_kutta_band_radius() {
        let p = TestProblem::A.spec();
        let mut o = make_oracle(&p, NoiseModel::exact(), 3, 0).unwrap();
        let tr = run_rk2(&mut o, 25).unwrap();
        let band = confidence_band(&tr, 1.5, 25f64.powf(-1.5), 5.9, 11).unwrap();
        assert!((band.radius - 0.0472).abs() < 1e-12);
    }

    #[test]
    fn zero_multiplier_collapses_onto_the_trajectory() {
        let tr = ee_a(25, 2);
        let band = confidence_band(&tr, 1.0, 0.04, 0.0, 26).unwrap();
        assert_eq!(band.lower, band.center);
        assert_eq!(band.upper, band.center);
        for j in 0..=25 {
            assert!((band.center[j] - tr.node(j)[0]).abs() < 1e-12);
        }
        assert!(confidence_band(&tr, 1.0, 0.04, -1.0, 26).is_err());
    }

    #[test]
    fn band_usually_contains_the_solution() {
        let reference = ReferenceSolution::problem_a();
        let inside = (0..200)
            .filter(|&seed| confidence_band(&ee_a(25, seed), 1.0, 0.04, 3.0, 201).unwrap().contains(&reference).unwrap())
            .count();
        assert!(inside >= 180, "{inside}");
    }

    #[test]
    fn csv_and_svg_output() {
        let band = confidence_band(&ee_a(25, 4), 1.0, 0.04, 3.0, 5).unwrap();
        let mut csv = Vec::new();
        band.write_csv(&mut csv, Some(&ReferenceSolution::problem_a())).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,lower,upper,center,reference");
        assert_eq!(lines.len(), 6);
        let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[0], 0.0);
        assert!((first[3] - first[1] - 0.12).abs() < 1e-12 && (first[2] - first[3] - 0.12).abs() < 1e-12);
        assert_eq!(first[4], 1.0);

        let mut svg = Vec::new();
        band.write_svg(&mut svg, Some(&ReferenceSolution::problem_a())).unwrap();
        let svg = String::from_utf8(svg).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polygon") && svg.matches("<polyline").count() == 2);
    }

    #[test]
    fn vector_band_columns() {
        let tr = Trajectory::from_nodes(SchemeKind::ExplicitEuler, 0.0, 1.0, 2, vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        let band = confidence_band(&tr, 1.0, 0.0, 0.5, 3).unwrap();
        assert_eq!(band.center, vec![0.0, 1.0, 0.5, 1.5, 1.0, 2.0]);
        let mut csv = Vec::new();
        band.write_csv(&mut csv, None).unwrap();
        let header = String::from_utf8(csv).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "t,lower_1,lower_2,upper_1,upper_2,center_1,center_2");
    }
}
