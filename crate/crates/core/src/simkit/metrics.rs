use serde::{Deserialize, Serialize};

/// Step-response figures of one output channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean over the last 10% of the window.
    pub steady_state: f64,
    /// `(peak − steady)/|step|` signed by the step direction; `None` when
    /// the step is too small to normalize by.
    pub overshoot: Option<f64>,
    /// Seconds after the window start of the last sample outside the ±2%
    /// band around the steady value.
    pub settling_time: f64,
    /// Extreme value in the step direction.
    pub peak: f64,
    /// Steady value minus the value at the window start.
    pub step: f64,
}

/// Outcome of [`step_metrics`]: unavailable when the tail still trends by more
/// than 0.1% of the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MetricsOutcome {
    Available(Metrics),
    Unavailable { drift: f64 },
}

impl MetricsOutcome {
    pub fn available(&self) -> Option<&Metrics> {
        match self {
            MetricsOutcome::Available(m) => Some(m),
            MetricsOutcome::Unavailable { .. } => None,
        }
    }
}

const BAND: f64 = 0.02;
const DRIFT: f64 = 1e-3;

/// Change of the least-squares line through `pts` across their time span.
fn trend(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let (tm, ym) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sty, stt) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - tm) * (y - ym), b + (t - tm) * (t - tm)));
    if stt == 0.0 {
        return 0.0;
    }
    (sty / stt * (pts[pts.len() - 1].0 - pts[0].0)).abs()
}

/// Metrics of `y(t)` on `window = (t0, t1)`. The value at `t0` is the pre-step
/// level.
pub fn step_metrics(t: &[f64], y: &[f64], window: (f64, f64)) -> MetricsOutcome {
    let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= window.0 - 1e-12 && t[i] <= window.1 + 1e-12).collect();
    if idx.is_empty() {
        return MetricsOutcome::Unavailable { drift: f64::NAN };
    }
    let first = idx[0];
    // the sample at the window start still holds the pre-event level
    let y0 = y[first];
    let tail_start = window.1 - 0.1 * (window.1 - window.0);
    let tail: Vec<usize> = idx.iter().copied().filter(|&i| t[i] >= tail_start).collect();
    let steady = tail.iter().map(|&i| y[i]).sum::<f64>() / tail.len() as f64;
    let step = steady - y0;
    let drift = trend(&tail.iter().map(|&i| (t[i], y[i])).collect::<Vec<_>>());
    if drift > DRIFT * step.abs() + 1e-9 * steady.abs().max(1.0) {
        return MetricsOutcome::Unavailable { drift };
    }
    let dir = if step < 0.0 { -1.0 } else { 1.0 };
    let peak = idx.iter().map(|&i| y[i]).fold(y0, |m, v| if dir * (v - m) > 0.0 { v } else { m });
    let overshoot = (step.abs() > 1e-9 * steady.abs().max(1.0)).then(|| dir * (peak - steady) / step.abs());

    let band = BAND * steady.abs();
    let mut settling = 0.0;
    for w in idx.windows(2).rev() {
        let (a, b) = (w[0], w[1]);
        if (y[a] - steady).abs() > band {
            // interpolate the band crossing between the samples
            let (ea, eb) = ((y[a] - steady).abs() - band, (y[b] - steady).abs() - band);
            let frac = if eb < 0.0 && ea > 0.0 { ea / (ea - eb) } else { 1.0 };
            settling = t[a] + frac * (t[b] - t[a]) - window.0;
            break;
        }
    }
    MetricsOutcome::Available(Metrics { steady_state: steady, overshoot, settling_time: settling.max(0.0), peak, step })
}
