//! The variation-of-constants solution satisfies the integrated linear
//! equation: its Euler residual vanishes as the grid refines on fixed paths.

use lvjump::closedform::{voc_solve, LinearJumpSDE};
use lvjump::model::{Coeff, MarkSpace};
use lvjump::noise::{sample_path_stream, DrivingPath, SlotKind};

/// `Y(T) - y0 - sum (F Y + f) dt - sum (G Y + g) dW - jumps + compensator`,
/// left-point sums on the solution grid.
fn residual(sde: &LinearJumpSDE, y0: f64, path: &DrivingPath) -> f64 {
    let y = voc_solve(sde, y0, path).unwrap();
    let slots = y.grid.slots();
    let mut r = y.values[slots.len() - 1] - y0;
    for s in 0..slots.len() - 1 {
        let (left, next) = (&slots[s], &slots[s + 1]);
        let (t, v) = (left.time, y.values[s]);
        if next.kind == SlotKind::Post {
            let jump = path.jumps[next.jump.unwrap()];
            r -= sde.h_lin[jump.mark].eval(jump.time) * v + sde.h_const[jump.mark].eval(jump.time);
            continue;
        }
        let dt = next.time - t;
        let compensator = sde
            .marks
            .integrate(|k| sde.h_lin[k].eval(t) * v + sde.h_const[k].eval(t));
        r -= (sde.f_lin.eval(t) * v + sde.f_const.eval(t) - compensator) * dt;
        r -= (sde.g_lin.eval(t) * v + sde.g_const.eval(t)) * next.dw;
    }
    r
}

/// Least-squares slope of `ln |residual|` (mean over paths) against `ln h`.
fn residual_slope(sde: &LinearJumpSDE) -> (f64, f64) {
    let levels = [4u32, 5, 6, 7, 8, 9];
    let fine_h = 1.0 / 1024.0;
    let paths: Vec<DrivingPath> = (0..24)
        .map(|j| sample_path_stream(&sde.marks, 1.0, fine_h, 17, j).unwrap())
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut finest = 0.0;
    for &l in &levels {
        let factor = 1usize << (10 - l);
        let mean = paths
            .iter()
            .map(|p| residual(sde, 0.7, &p.coarsen(factor).unwrap()).abs())
            .sum::<f64>()
            / paths.len() as f64;
        xs.push((1.0 / (1u64 << l) as f64).ln());
        ys.push(mean.ln());
        finest = mean;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (cov / var, finest)
}

fn sde(g_lin: f64, g_const: f64) -> LinearJumpSDE {
    LinearJumpSDE {
        f_lin: Coeff::sin(-0.3, 0.5, 2.0, 0.1),
        g_lin: Coeff::constant(g_lin),
        f_const: Coeff::sin(0.8, 0.4, 3.0, 0.0),
        g_const: Coeff::constant(g_const),
        h_lin: vec![Coeff::constant(0.4), Coeff::sin(-0.2, 0.3, 1.0, 0.0)],
        h_const: vec![Coeff::constant(0.3), Coeff::constant(-0.1)],
        marks: MarkSpace::new(vec![1.5, 2.0]).unwrap(),
    }
}

#[test]
fn residual_is_first_order_without_diffusion() {
    let (slope, finest) = residual_slope(&sde(0.0, 0.0));
    assert!(slope >= 0.9, "slope {slope}");
    assert!(finest < 1e-2, "residual {finest}");
}

#[test]
fn residual_vanishes_with_diffusion() {
    // Ito sums on a coarse grid converge strongly at order 1/2
    let (slope, finest) = residual_slope(&sde(0.5, 0.3));
    assert!(slope >= 0.4, "slope {slope}");
    assert!(finest < 5e-2, "residual {finest}");
}
