//! UAV self-localization: Jacobians of the G2V TDoA and V2V range models,
//! Fisher information and CRLB, and a weighted Gauss-Newton ML estimator
//! over the stacked horizontal UAV coordinates `[x_1, y_1, ..., x_N, y_N]`.

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::channel::LinkVariances;
use crate::linalg::{block_diag, spd_inverse, symmetrize};
use crate::measurement::{
    cov_g2v, cov_v2v, g2v_labels, predict_g2v, predict_v2v, v2v_labels, MeasurementSet,
};
use crate::scenario::{Position3, Scenario};

/// Relative eigenvalue floor below which a FIM is treated as singular.
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SelfLocError {
    #[error("singular Fisher information; unobservable directions: {}", directions.join(", "))]
    SingularFim { directions: Vec<String> },
    #[error("singular normal equations at iteration {iteration}")]
    SingularNormalEquations { iteration: usize },
    #[error("Gauss-Newton diverged: step grew for {window} consecutive iterations (last step {step:.3e} m)")]
    Diverged { window: usize, step: f64 },
    #[error("state vector must have 2N = {expected} finite entries, got {got}")]
    BadState { expected: usize, got: usize },
    #[error("measurement dimensions do not match the scenario")]
    DimensionMismatch,
}

/// Horizontal coordinates of all UAVs, two entries per UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct UavStateVector(pub DVector<f64>);

impl UavStateVector {
    pub fn new(coords: DVector<f64>) -> Result<Self, SelfLocError> {
        if !coords.len().is_multiple_of(2) || coords.iter().any(|v| !v.is_finite()) {
            return Err(SelfLocError::BadState {
                expected: coords.len() + coords.len() % 2,
                got: coords.len(),
            });
        }
        Ok(Self(coords))
    }

    pub fn truth(s: &Scenario) -> Self {
        Self(DVector::from_iterator(
            2 * s.num_uavs(),
            s.uavs.iter().flat_map(|u| u.position.horizontal),
        ))
    }

    pub fn num_uavs(&self) -> usize {
        self.0.len() / 2
    }

    pub fn xy(&self, n: usize) -> Vector2<f64> {
        Vector2::new(self.0[2 * n], self.0[2 * n + 1])
    }

    /// 3-D positions with the scenario's (known) UAV heights.
    pub fn positions(&self, s: &Scenario) -> Vec<Position3> {
        s.uavs
            .iter()
            .enumerate()
            .map(|(n, u)| u.position.with_xy(self.xy(n)))
            .collect()
    }

    fn check(&self, s: &Scenario) -> Result<(), SelfLocError> {
        if self.0.len() != 2 * s.num_uavs() || self.0.iter().any(|v| !v.is_finite()) {
            return Err(SelfLocError::BadState {
                expected: 2 * s.num_uavs(),
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

/// `k^p_a`: horizontal offset `p - a` over the 3-D distance. Zero when the
/// points coincide.
pub fn unit_projection(p: &Position3, a: &Position3) -> Vector2<f64> {
    let d = p.distance(a);
    if d == 0.0 {
        return Vector2::zeros();
    }
    (p.xy() - a.xy()) / d
}

/// G2V TDoA Jacobian at arbitrary UAV positions, `N(M-1) x 2N`.
pub fn jacobian_g2v_at(s: &Scenario, uavs: &[Position3]) -> DMatrix<f64> {
    let labels = g2v_labels(s);
    let g1 = &s.grs[s.reference_grs()].position;
    let mut h = DMatrix::zeros(labels.len(), 2 * uavs.len());
    for (row, &(n, m)) in labels.iter().enumerate() {
        let k = unit_projection(&uavs[n], &s.grs[m].position) - unit_projection(&uavs[n], g1);
        h[(row, 2 * n)] = k.x;
        h[(row, 2 * n + 1)] = k.y;
    }
    h
}

pub fn jacobian_g2v(s: &Scenario) -> DMatrix<f64> {
    jacobian_g2v_at(s, &UavStateVector::truth(s).positions(s))
}

/// V2V range Jacobian at arbitrary UAV positions, `N(N-1) x 2N`.
pub fn jacobian_v2v_at(s: &Scenario, uavs: &[Position3]) -> DMatrix<f64> {
    let labels = v2v_labels(s);
    let mut h = DMatrix::zeros(labels.len(), 2 * uavs.len());
    for (row, &(n, i)) in labels.iter().enumerate() {
        let k = unit_projection(&uavs[n], &uavs[i]);
        h[(row, 2 * n)] = k.x;
        h[(row, 2 * n + 1)] = k.y;
        h[(row, 2 * i)] = -k.x;
        h[(row, 2 * i + 1)] = -k.y;
    }
    h
}

pub fn jacobian_v2v(s: &Scenario) -> DMatrix<f64> {
    jacobian_v2v_at(s, &UavStateVector::truth(s).positions(s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbResult {
    pub crlb: DMatrix<f64>,
    pub fim_tdoa: DMatrix<f64>,
    /// Zero when V2V ranging is excluded.
    pub fim_drtwr: DMatrix<f64>,
}

fn information(h: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, SelfLocError> {
    let w = spd_inverse(q).ok_or(SelfLocError::DimensionMismatch)?;
    let mut f = h.transpose() * w * h;
    symmetrize(&mut f);
    Ok(f)
}

/// Names the state coordinates that dominate the FIM's null directions.
fn deficient_directions(fim: &DMatrix<f64>) -> Option<Vec<String>> {
    let eig = fim.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut names = Vec::new();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > SINGULAR_RATIO * top && top > 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(j);
        let mut parts: Vec<(usize, f64)> = v.iter().map(|c| c.abs()).enumerate().collect();
        parts.sort_by(|a, b| b.1.total_cmp(&a.1));
        let label: Vec<String> = parts
            .iter()
            .take_while(|(_, w)| *w > 0.2)
            .map(|&(k, w)| {
                let axis = if k % 2 == 0 { 'x' } else { 'y' };
                format!("{:+.2}*{}{}", v[k].signum() * w, axis, k / 2 + 1)
            })
            .collect();
        names.push(label.join(" "));
    }
    if names.is_empty() {
        None
    } else {
        Some(names)
    }
}

fn invert_fim(fim: &DMatrix<f64>) -> Result<DMatrix<f64>, SelfLocError> {
    if let Some(directions) = deficient_directions(fim) {
        return Err(SelfLocError::SingularFim { directions });
    }
    spd_inverse(fim).ok_or_else(|| SelfLocError::SingularFim {
        directions: vec!["numerically indefinite".into()],
    })
}

/// CRLB on the stacked UAV coordinates, with or without the V2V term.
pub fn crlb(
    s: &Scenario,
    use_v2v: bool,
    links: &LinkVariances,
) -> Result<CrlbResult, SelfLocError> {
    let fim_tdoa = information(&jacobian_g2v(s), &cov_g2v(s, links))?;
    let fim_drtwr = if use_v2v {
        information(&jacobian_v2v(s), &cov_v2v(s, links))?
    } else {
        DMatrix::zeros(fim_tdoa.nrows(), fim_tdoa.ncols())
    };
    let crlb = invert_fim(&(&fim_tdoa + &fim_drtwr))?;
    Ok(CrlbResult {
        crlb,
        fim_tdoa,
        fim_drtwr,
    })
}

/// Covariance of the UAV position estimates, taken as the CRLB.
pub fn uav_position_cov(
    s: &Scenario,
    use_v2v: bool,
    links: &LinkVariances,
) -> Result<DMatrix<f64>, SelfLocError> {
    Ok(crlb(s, use_v2v, links)?.crlb)
}

/// `sqrt(max diag)` and `sqrt(mean diag)` of a UAV covariance (m).
pub fn max_and_mean_error(cov: &DMatrix<f64>) -> (f64, f64) {
    let d = cov.diagonal();
    (d.max().sqrt(), d.mean().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    pub use_v2v: bool,
    pub max_iterations: usize,
    /// Stop when the Gauss-Newton step norm falls below this (m).
    pub step_tolerance: f64,
    /// Consecutive growing steps that count as divergence.
    pub divergence_window: usize,
    /// Chi-square acceptance: `chi2 <= dof + chi2_sigmas * sqrt(2 dof)`.
    pub chi2_sigmas: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            use_v2v: true,
            max_iterations: 50,
            step_tolerance: 1e-6,
            divergence_window: 5,
            chi2_sigmas: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfLocResult {
    pub estimate: UavStateVector,
    pub crlb: DMatrix<f64>,
    pub fim_tdoa: DMatrix<f64>,
    pub fim_drtwr: DMatrix<f64>,
    pub iterations: usize,
    /// Step tolerance reached and the weighted residual is consistent with
    /// the noise model.
    pub converged: bool,
    /// Weighted squared residual at the final iterate.
    pub chi_square: f64,
}

struct WeightedModel<'a> {
    s: &'a Scenario,
    z: DVector<f64>,
    w: DMatrix<f64>,
    use_v2v: bool,
}

impl<'a> WeightedModel<'a> {
    fn new(s: &'a Scenario, meas: &MeasurementSet, use_v2v: bool) -> Result<Self, SelfLocError> {
        let (ng, nv) = (g2v_labels(s).len(), v2v_labels(s).len());
        if meas.tdoa_g2v.len() != ng
            || meas.cov_g2v.shape() != (ng, ng)
            || (use_v2v && (meas.range_v2v.len() != nv || meas.cov_v2v.shape() != (nv, nv)))
        {
            return Err(SelfLocError::DimensionMismatch);
        }
        let wg = spd_inverse(&meas.cov_g2v).ok_or(SelfLocError::DimensionMismatch)?;
        let (z, w) = if use_v2v {
            let wv = spd_inverse(&meas.cov_v2v).ok_or(SelfLocError::DimensionMismatch)?;
            let mut z = DVector::zeros(ng + nv);
            z.rows_mut(0, ng).copy_from(&meas.tdoa_g2v);
            z.rows_mut(ng, nv).copy_from(&meas.range_v2v);
            (z, block_diag(&[wg, wv]))
        } else {
            (meas.tdoa_g2v.clone(), wg)
        };
        Ok(Self { s, z, w, use_v2v })
    }

    fn residual_and_jacobian(&self, x: &UavStateVector) -> (DVector<f64>, DMatrix<f64>) {
        let p = x.positions(self.s);
        let hg = jacobian_g2v_at(self.s, &p);
        let pg = predict_g2v(self.s, &p);
        if !self.use_v2v {
            return (&self.z - pg, hg);
        }
        let hv = jacobian_v2v_at(self.s, &p);
        let pv = predict_v2v(self.s, &p);
        let (ng, nv) = (pg.len(), pv.len());
        let mut pred = DVector::zeros(ng + nv);
        pred.rows_mut(0, ng).copy_from(&pg);
        pred.rows_mut(ng, nv).copy_from(&pv);
        let mut h = DMatrix::zeros(ng + nv, hg.ncols());
        h.rows_mut(0, ng).copy_from(&hg);
        h.rows_mut(ng, nv).copy_from(&hv);
        (&self.z - pred, h)
    }

    fn chi_square(&self, r: &DVector<f64>) -> f64 {
        (r.transpose() * &self.w * r)[(0, 0)]
    }
}

/// Weighted Gauss-Newton maximization of the Gaussian log-likelihood.
pub fn ml_estimate(
    meas: &MeasurementSet,
    s: &Scenario,
    init: &UavStateVector,
    opts: &MlOptions,
) -> Result<SelfLocResult, SelfLocError> {
    init.check(s)?;
    let model = WeightedModel::new(s, meas, opts.use_v2v)?;
    let mut x = init.clone();
    let mut last_step = f64::INFINITY;
    let mut growing = 0;
    let mut iterations = 0;
    let mut step_ok = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        let (r, h) = model.residual_and_jacobian(&x);
        let ht_w = h.transpose() * &model.w;
        let mut normal = &ht_w * &h;
        symmetrize(&mut normal);
        if deficient_directions(&normal).is_some() {
            return Err(SelfLocError::SingularNormalEquations {
                iteration: iterations,
            });
        }
        let delta = normal
            .cholesky()
            .ok_or(SelfLocError::SingularNormalEquations {
                iteration: iterations,
            })?
            .solve(&(ht_w * r));
        x.0 += &delta;
        let step = delta.norm();
        if !step.is_finite() {
            return Err(SelfLocError::Diverged {
                window: growing,
                step,
            });
        }
        if step < opts.step_tolerance {
            step_ok = true;
            break;
        }
        growing = if step > last_step { growing + 1 } else { 0 };
        if growing >= opts.divergence_window {
            return Err(SelfLocError::Diverged {
                window: growing,
                step,
            });
        }
        last_step = step;
    }

    let (r, _) = model.residual_and_jacobian(&x);
    let chi_square = model.chi_square(&r);
    let dof = (model.z.len() - x.0.len()) as f64;
    let consistent = chi_square <= dof + opts.chi2_sigmas * (2.0 * dof).sqrt();

    let bound_links_fim = {
        let p = x.positions(s);
        let fg = information(&jacobian_g2v_at(s, &p), &meas.cov_g2v)?;
        let fv = if opts.use_v2v {
            information(&jacobian_v2v_at(s, &p), &meas.cov_v2v)?
        } else {
            DMatrix::zeros(fg.nrows(), fg.ncols())
        };
        (fg, fv)
    };
    let (fim_tdoa, fim_drtwr) = bound_links_fim;
    let crlb = invert_fim(&(&fim_tdoa + &fim_drtwr))?;

    Ok(SelfLocResult {
        estimate: x,
        crlb,
        fim_tdoa,
        fim_drtwr,
        iterations,
        converged: step_ok && consistent,
        chi_square,
    })
}

/// Blind start: per-UAV grid search of the TDoA-only weighted residual over a
/// square box centered on the target area.
pub fn blind_initial_guess(
    meas: &MeasurementSet,
    s: &Scenario,
    box_side: f64,
    cell: f64,
) -> Result<UavStateVector, SelfLocError> {
    let labels = g2v_labels(s);
    if meas.tdoa_g2v.len() != labels.len() {
        return Err(SelfLocError::DimensionMismatch);
    }
    let k = s.num_grs() - 1;
    let g1 = &s.grs[s.reference_grs()].position;
    let others = s.non_reference_grs();
    let cells = (box_side / cell).round() as usize;
    let origin = s.target.center_xy() - Vector2::repeat(box_side / 2.0);
    let mut coords = DVector::zeros(2 * s.num_uavs());

    for (n, uav) in s.uavs.iter().enumerate() {
        let block = meas.cov_g2v.view((n * k, n * k), (k, k)).clone_owned();
        let w = spd_inverse(&block).ok_or(SelfLocError::DimensionMismatch)?;
        let z = meas.tdoa_g2v.rows(n * k, k);
        let mut best = (f64::INFINITY, origin);
        for a in 0..=cells {
            for b in 0..=cells {
                let xy = origin + Vector2::new(a as f64, b as f64) * cell;
                let p = uav.position.with_xy(xy);
                let r = DVector::from_iterator(
                    k,
                    others
                        .iter()
                        .zip(z.iter())
                        .map(|(&m, &zm)| zm - (p.distance(&s.grs[m].position) - p.distance(g1))),
                );
                let cost = (r.transpose() * &w * &r)[(0, 0)];
                if cost < best.0 {
                    best = (cost, xy);
                }
            }
        }
        coords[2 * n] = best.1.x;
        coords[2 * n + 1] = best.1.y;
    }
    Ok(UavStateVector(coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_positive_definite, is_positive_semidefinite};
    use crate::measurement::{true_tdoa_g2v, UavClocks};
    use crate::scenario::{build_canonical_scenario, canonical_scenario, LinkCondition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lv(s: &Scenario) -> LinkVariances {
        LinkVariances::from_scenario(s).unwrap()
    }

    #[test]
    fn jacobian_shapes_and_block_structure() {
        let s = canonical_scenario();
        let hg = jacobian_g2v(&s);
        assert_eq!(hg.shape(), (30, 12));
        for row in 0..30 {
            let n = row / 5;
            for c in 0..12 {
                if c / 2 != n {
                    assert_eq!(hg[(row, c)], 0.0);
                }
            }
        }
        let hv = jacobian_v2v(&s);
        assert_eq!(hv.shape(), (30, 12));
        for row in 0..30 {
            assert!(
                hv.row(row)
                    .columns_range(0..12)
                    .iter()
                    .step_by(2)
                    .sum::<f64>()
                    .abs()
                    < 1e-15
            );
        }
        // swapping the two blocks of row (n, i) negates row (i, n)
        let labels = v2v_labels(&s);
        let a = labels.iter().position(|&p| p == (1, 3)).unwrap();
        let b = labels.iter().position(|&p| p == (3, 1)).unwrap();
        let mut swapped = hv.row(a).clone_owned();
        swapped.swap_columns(2, 6);
        swapped.swap_columns(3, 7);
        assert!((swapped + hv.row(b)).amax() < 1e-15);
    }

    #[test]
    fn g2v_jacobian_matches_finite_differences() {
        let s = canonical_scenario();
        let hg = jacobian_g2v(&s);
        let h = 1e-3;
        let mut fd = DMatrix::zeros(30, 12);
        for (row, &(n, m)) in g2v_labels(&s).iter().enumerate() {
            for axis in 0..2 {
                let mut p = s.clone();
                p.uavs[n].position.horizontal[axis] += h;
                let up = true_tdoa_g2v(&p, m, n).unwrap();
                p.uavs[n].position.horizontal[axis] -= 2.0 * h;
                let dn = true_tdoa_g2v(&p, m, n).unwrap();
                fd[(row, 2 * n + axis)] = (up - dn) / (2.0 * h);
            }
        }
        assert!((&hg - &fd).amax() / fd.amax() < 1e-6);
    }

    #[test]
    fn mirrored_grs_pair_has_no_axial_component() {
        let mut s = canonical_scenario();
        // UAV 2 on the x-axis, G_1 and G_2 mirrored across it
        let r = 2500.0;
        let a = 30f64.to_radians();
        s.grs[0].position.horizontal = [r * a.cos(), -r * a.sin()];
        s.grs[1].position.horizontal = [r * a.cos(), r * a.sin()];
        let hg = jacobian_g2v(&s);
        assert!(hg[(5, 2)].abs() < 1e-15);
        assert!(hg[(5, 3)].abs() > 0.1);
    }

    #[test]
    fn crlb_is_spd_and_v2v_helps() {
        let s = canonical_scenario();
        let l = lv(&s);
        let full = crlb(&s, true, &l).unwrap();
        let bare = crlb(&s, false, &l).unwrap();
        assert!(is_positive_definite(&full.crlb));
        assert!(full.crlb.trace() <= bare.crlb.trace());
        assert!(is_positive_semidefinite(&(&bare.crlb - &full.crlb), 1e-10));
        assert_eq!(bare.fim_drtwr, DMatrix::zeros(12, 12));
        assert_eq!(uav_position_cov(&s, true, &l).unwrap(), full.crlb);
    }

    #[test]
    fn two_grs_without_v2v_is_singular() {
        let mut s = canonical_scenario();
        s.grs.truncate(2);
        let l = lv(&s);
        match crlb(&s, false, &l) {
            Err(SelfLocError::SingularFim { directions }) => assert_eq!(directions.len(), 6),
            other => panic!("expected singular FIM, got {other:?}"),
        }
    }

    #[test]
    fn nlos_jamming_tightens_bound() {
        let s = canonical_scenario();
        let nlos = s.with_j2v(LinkCondition::Nlos);
        let los = crlb(&s, true, &lv(&s)).unwrap().crlb.trace();
        let nl = crlb(&nlos, true, &lv(&nlos)).unwrap().crlb.trace();
        assert!(nl < los);
    }

    #[test]
    fn grs_power_shrinks_bound() {
        let base = canonical_scenario();
        let mut last = f64::INFINITY;
        for p in [25.0, 30.0, 35.0, 40.0, 45.0] {
            let s = base.with_grs_power(p);
            let t = uav_position_cov(&s, true, &lv(&s)).unwrap().trace();
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn translation_invariance() {
        let s = canonical_scenario();
        let t = s.translated(Vector2::new(3210.0, -987.0));
        let a = crlb(&s, true, &lv(&s)).unwrap().crlb;
        let b = crlb(&t, true, &lv(&t)).unwrap().crlb;
        assert!((&a - &b).amax() / a.amax() < 1e-9);
    }

    #[test]
    fn ml_noiseless_recovers_truth() {
        let s = canonical_scenario();
        let l = lv(&s);
        let meas = MeasurementSet::noiseless(&s, &l);
        let truth = UavStateVector::truth(&s);
        let init = UavStateVector(truth.0.add_scalar(50.0));
        let out = ml_estimate(&meas, &s, &init, &MlOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.estimate.0 - truth.0).amax() < 1e-4);
        let out = ml_estimate(
            &meas,
            &s,
            &init,
            &MlOptions {
                use_v2v: false,
                ..MlOptions::default()
            },
        )
        .unwrap();
        assert!(out.converged);
    }

    #[test]
    fn ml_far_init_is_never_silently_wrong() {
        let s = canonical_scenario();
        let l = lv(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let meas = MeasurementSet::sample(&s, &l, &UavClocks::ideal(6), 1.0, &mut rng);
        let truth = UavStateVector::truth(&s);
        let init = UavStateVector(truth.0.add_scalar(10_000.0));
        match ml_estimate(&meas, &s, &init, &MlOptions::default()) {
            Err(_) => {}
            Ok(r) if !r.converged => {}
            Ok(r) => {
                let tol = 6.0 * crlb(&s, true, &l).unwrap().crlb.diagonal().max().sqrt();
                assert!((r.estimate.0 - truth.0).amax() < tol);
            }
        }
    }

    #[test]
    fn blind_start_lands_near_truth() {
        let s = build_canonical_scenario(50.0, None).unwrap();
        let l = lv(&s);
        let meas = MeasurementSet::noiseless(&s, &l);
        let init = blind_initial_guess(&meas, &s, 3000.0, 200.0).unwrap();
        let truth = UavStateVector::truth(&s);
        assert!((&init.0 - &truth.0).amax() <= 200.0);
        let out = ml_estimate(&meas, &s, &init, &MlOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.estimate.0 - truth.0).amax() < 1e-4);
    }

    #[test]
    fn bad_state_rejected() {
        let s = canonical_scenario();
        let meas = MeasurementSet::noiseless(&s, &lv(&s));
        let init = UavStateVector(DVector::zeros(10));
        assert!(matches!(
            ml_estimate(&meas, &s, &init, &MlOptions::default()),
            Err(SelfLocError::BadState {
                expected: 12,
                got: 10
            })
        ));
        assert!(UavStateVector::new(DVector::from_vec(vec![1.0, f64::NAN])).is_err());
    }
}
