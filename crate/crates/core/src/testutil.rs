use nalgebra::Matrix4;

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let norm = a.abs().row_sum().max();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let mut term = Matrix4::identity();
    let mut sum = Matrix4::identity();
    for k in 1..30 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}
