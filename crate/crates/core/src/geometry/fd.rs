//! Order-4 finite differences along one axis of a sampled array.

use super::chart::ChartGrid;
use super::field::strides;

const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];

/// Derivative of a 1-D sample line: periodic wraparound or one-sided
/// stencils at bounded edges.
pub fn derivative_line(f: &[f64], h: f64, periodic: bool) -> Vec<f64> {
    let n = f.len();
    let inv = 1.0 / (12.0 * h);
    let mut out = vec![0.0; n];
    if periodic {
        for i in 0..n {
            let at = |o: isize| f[((i as isize + o).rem_euclid(n as isize)) as usize];
            out[i] = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) * inv;
        }
        return out;
    }
    for i in 0..n {
        let v = if i >= 2 && i + 2 < n {
            (0..5).map(|k| CENTRAL[k] * f[i + k - 2]).sum::<f64>()
        } else if i == 0 {
            (0..5).map(|k| EDGE0[k] * f[k]).sum::<f64>()
        } else if i == 1 {
            (0..5).map(|k| EDGE1[k] * f[k]).sum::<f64>()
        } else if i == n - 1 {
            -(0..5).map(|k| EDGE0[k] * f[n - 1 - k]).sum::<f64>()
        } else {
            -(0..5).map(|k| EDGE1[k] * f[n - 1 - k]).sum::<f64>()
        };
        out[i] = v * inv;
    }
    out
}

/// Derivative along `axis` of an array with the given (broadcast) shape.
pub fn derivative(values: &[f64], shape: &[usize], axis: usize, chart: &ChartGrid) -> Vec<f64> {
    if shape[axis] == 1 {
        return vec![0.0; values.len()];
    }
    let st = strides(shape);
    let n = shape[axis];
    let h = chart.grid_spacing(axis);
    let periodic = chart.axes[axis].is_periodic();
    let mut out = vec![0.0; values.len()];
    let mut line = vec![0.0; n];
    for start in 0..values.len() {
        if (start / st[axis]) % n != 0 {
            continue;
        }
        for j in 0..n {
            line[j] = values[start + j * st[axis]];
        }
        let d = derivative_line(&line, h, periodic);
        for j in 0..n {
            out[start + j * st[axis]] = d[j];
        }
    }
    out
}
