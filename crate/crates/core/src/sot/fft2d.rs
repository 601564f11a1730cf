use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Unnormalised in-place 2-D DFT of a row-major `width x height` buffer.
pub(crate) fn fft2d(data: &mut [Complex64], width: usize, height: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), width * height);
    let rows = plan(width, direction);
    for row in data.chunks_exact_mut(width) {
        rows.process(row);
    }
    let cols = plan(height, direction);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = data[y * width + x];
        }
        cols.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            data[y * width + x] = *c;
        }
    }
}
