//! Central-difference gradient verification.

use crate::param::ParamStruct;

#[derive(Debug)]
pub struct GradReport {
    pub checked: usize,
    pub worst_rel: f64,
    /// (tensor name, element, analytic, finite-difference, relative error)
    pub failures: Vec<(String, usize, f64, f64, f64)>,
}

/// Relative error with an absolute floor so near-zero gradients compare on
/// the finite-difference noise scale rather than blowing up.
pub fn grad_rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-2)
}

/// Compare `analytic` (dL/dp, same traversal order as `params`) against
/// central finite differences of `loss` with step `h`. Entries whose relative
/// error exceeds `tol` are reported as failures.
pub fn check_grads<P: ParamStruct>(
    params: &mut P,
    analytic: &P,
    mut loss: impl FnMut(&P) -> f64,
    h: f64,
    tol: f64,
) -> GradReport {
    let names: Vec<String> = analytic.tensors().iter().map(|(n, _)| n.clone()).collect();
    let lens: Vec<usize> = analytic.tensors().iter().map(|(_, m)| m.data.len()).collect();
    let mut report = GradReport { checked: 0, worst_rel: 0.0, failures: Vec::new() };

    for ti in 0..lens.len() {
        for e in 0..lens[ti] {
            let old = params.tensors_mut()[ti].1.data[e];
            params.tensors_mut()[ti].1.data[e] = old + h;
            let lp = loss(params);
            params.tensors_mut()[ti].1.data[e] = old - h;
            let lm = loss(params);
            params.tensors_mut()[ti].1.data[e] = old;

            let fd = (lp - lm) / (2.0 * h);
            let ga = analytic.tensors()[ti].1.data[e];
            let rel = grad_rel_err(ga, fd);
            report.checked += 1;
            if rel > report.worst_rel {
                report.worst_rel = rel;
            }
            if rel > tol {
                report.failures.push((names[ti].clone(), e, ga, fd, rel));
            }
        }
    }
    report
}
