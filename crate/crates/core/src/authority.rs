//! Human/robot authority arbitration and the authority-dependent impedance.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AuthorityParams {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub g_plus: f64,
    pub g_minus: f64,
    /// Time constant of a first-order lag on both wrench inputs, seconds. 0 disables it.
    pub sensor_lag: f64,
}

impl Default for AuthorityParams {
    fn default() -> Self {
        AuthorityParams {
            a: 4.0,
            b: 2.0,
            c1: 1.0,
            c2: 0.5,
            g_plus: 0.02,
            g_minus: 0.002,
            sensor_lag: 0.0,
        }
    }
}

impl AuthorityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("authority.a", self.a),
            ("authority.b", self.b),
            ("authority.c1", self.c1),
            ("authority.c2", self.c2),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(key, "must be positive"));
            }
        }
        if !(self.g_plus > 0.0 && self.g_plus <= 1.0) {
            return Err(Error::param("authority.g_plus", "must lie in (0, 1]"));
        }
        if !(self.g_minus > 0.0 && self.g_minus <= 0.5) {
            return Err(Error::param("authority.g_minus", "must lie in (0, 0.5]"));
        }
        if self.g_plus < self.g_minus {
            return Err(Error::param("authority.g_plus", "must be at least g_minus"));
        }
        if !(self.sensor_lag >= 0.0) || !self.sensor_lag.is_finite() {
            return Err(Error::param("authority.sensor_lag", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuthorityState {
    pub alpha_h: f64,
    pub last_w_diff: f64,
    pub last_alpha_hat: f64,
    lagged: Option<(Vector6<f64>, Vector6<f64>)>,
}

impl AuthorityState {
    pub fn new(alpha_h: f64) -> Self {
        AuthorityState {
            alpha_h: alpha_h.clamp(0.0, 1.0),
            ..Default::default()
        }
    }

    /// One arbitration step from raw sensor readings.
    pub fn step(
        &mut self,
        w_s: &Vector6<f64>,
        w_est: &Vector6<f64>,
        w_ref: &Vector6<f64>,
        p: &AuthorityParams,
        dt: f64,
    ) -> f64 {
        let (s, e) = if p.sensor_lag > 0.0 {
            let k = dt / (p.sensor_lag + dt);
            let (ls, le) = self.lagged.unwrap_or((Vector6::zeros(), Vector6::zeros()));
            let next = (ls + (w_s - ls) * k, le + (w_est - le) * k);
            self.lagged = Some(next);
            next
        } else {
            (*w_s, *w_est)
        };
        let w_diff = wrench_difference(&s, &e, w_ref, p);
        let alpha_hat = raw_authority(w_diff, p);
        let next = update_authority(self, alpha_hat, p);
        self.alpha_h = next.alpha_h;
        self.last_w_diff = w_diff;
        self.last_alpha_hat = alpha_hat;
        self.alpha_h
    }
}

pub fn wrench_difference(
    w_s: &Vector6<f64>,
    w_est: &Vector6<f64>,
    w_ref: &Vector6<f64>,
    p: &AuthorityParams,
) -> f64 {
    p.c1 * (w_s - w_est).norm() + p.c2 * (w_ref - w_s).norm()
}

pub fn raw_authority(w_diff: f64, p: &AuthorityParams) -> f64 {
    (0.5 * (1.0 + ((3.0 / p.a) * (w_diff - p.a - p.b)).tanh())).clamp(0.0, 1.0)
}

pub fn update_gain(alpha_prev: f64, alpha_hat: f64, p: &AuthorityParams) -> f64 {
    if alpha_hat > alpha_prev {
        p.g_plus
    } else {
        p.g_minus + p.g_minus * (1.0 - alpha_prev).powi(2)
    }
}

pub fn update_authority(state: &AuthorityState, alpha_hat: f64, p: &AuthorityParams) -> AuthorityState {
    let prev = state.alpha_h;
    let g = update_gain(prev, alpha_hat, p);
    AuthorityState {
        alpha_h: (prev + g * (alpha_hat - prev)).clamp(0.0, 1.0),
        ..*state
    }
}

/// `K = (1 - α) K_max`, `D = 2 √K` on the diagonal.
pub fn variable_impedance(alpha_h: f64, k_max: &Matrix6<f64>) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
    for i in 0..6 {
        for j in 0..6 {
            if i != j && k_max[(i, j)] != 0.0 {
                return Err(Error::NonDiagonalKmax);
            }
        }
    }
    let (k, d) = variable_impedance_diag(alpha_h, &k_max.diagonal());
    Ok((Matrix6::from_diagonal(&k), Matrix6::from_diagonal(&d)))
}

pub fn variable_impedance_diag(alpha_h: f64, k_max: &Vector6<f64>) -> (Vector6<f64>, Vector6<f64>) {
    let k = k_max * (1.0 - alpha_h);
    let d = k.map(|v| 2.0 * v.max(0.0).sqrt());
    (k, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(x: f64, y: f64) -> Vector6<f64> {
        Vector6::new(x, y, 0.0, 0.0, 0.0, 0.0)
    }

    #[test]
    fn wrench_difference_terms() {
        let p = AuthorityParams::default();
        let ws = Vector6::new(1.0, -2.0, 3.0, 0.1, 0.2, 0.3);
        assert_eq!(wrench_difference(&ws, &ws, &ws, &p), 0.0);
        let body = AuthorityParams { c1: 1.0, ..p.clone() };
        assert!((wrench_difference(&ws, &(ws + w(10.0, 0.0)), &ws, &body) - 10.0).abs() < 1e-12);
        let tool = AuthorityParams { c2: 2.0, ..p };
        assert!((wrench_difference(&ws, &ws, &(ws + w(0.0, 5.0)), &tool) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn raw_authority_values() {
        let p = AuthorityParams::default();
        assert_eq!(raw_authority(p.a + p.b, &p), 0.5);
        let expected = 0.5 * (1.0 + (-4.5f64).tanh());
        assert!((raw_authority(0.0, &p) - expected).abs() < 1e-15);
        assert!((raw_authority(0.0, &p) - 1.23e-4).abs() < 1e-6);
        assert!(raw_authority(p.a + p.b + 3.0 * p.a, &p) >= 0.5 * (1.0 + 3f64.tanh()));
        assert!(raw_authority(1e6, &p) <= 1.0);
    }

    #[test]
    fn update_cases() {
        let p = AuthorityParams::default();
        let s = AuthorityState::new(0.3);
        assert_eq!(update_authority(&s, 0.3, &p).alpha_h, 0.3);
        assert_eq!(update_gain(1.0, 0.0, &p), p.g_minus);
        assert_eq!(update_gain(0.0, 0.0, &p), 2.0 * p.g_minus);
        assert_eq!(update_authority(&AuthorityState::new(0.0), 0.0, &p).alpha_h, 0.0);
        assert_eq!(update_gain(0.2, 0.9, &p), p.g_plus);
    }

    #[test]
    fn impedance_cases() {
        let k_max = Matrix6::from_diagonal_element(400.0);
        let (k, d) = variable_impedance(0.0, &k_max).unwrap();
        assert_eq!(k, k_max);
        assert_eq!(d, Matrix6::from_diagonal_element(40.0));
        let (k, d) = variable_impedance(1.0, &k_max).unwrap();
        assert_eq!(k, Matrix6::zeros());
        assert_eq!(d, Matrix6::zeros());
        let (k, d) = variable_impedance(0.75, &k_max).unwrap();
        assert_eq!(k, Matrix6::from_diagonal_element(100.0));
        assert_eq!(d, Matrix6::from_diagonal_element(20.0));
        let mut bad = k_max;
        bad[(0, 1)] = 1.0;
        assert!(matches!(variable_impedance(0.5, &bad), Err(Error::NonDiagonalKmax)));
    }

    #[test]
    fn sensor_lag_delays_response() {
        let p = AuthorityParams::default();
        let lagged = AuthorityParams {
            sensor_lag: 0.15,
            ..p.clone()
        };
        let push = w(20.0, 0.0);
        let zero = Vector6::zeros();
        let (mut a, mut b) = (AuthorityState::new(0.0), AuthorityState::new(0.0));
        for _ in 0..100 {
            a.step(&zero, &push, &zero, &p, 1e-3);
            b.step(&zero, &push, &zero, &lagged, 1e-3);
        }
        assert!(b.alpha_h < a.alpha_h);
    }

    #[test]
    fn validation() {
        assert!(AuthorityParams::default().validate().is_ok());
        let bad = AuthorityParams {
            g_plus: 0.001,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AuthorityParams {
            g_minus: 0.6,
            g_plus: 0.9,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn raw_authority_monotone(x in 0.0f64..100.0, dx in 0.0f64..10.0) {
            let p = AuthorityParams::default();
            prop_assert!(raw_authority(x + dx, &p) >= raw_authority(x, &p));
        }

        #[test]
        fn update_is_a_bounded_contraction(
            seq in proptest::collection::vec(0.0f64..=1.0, 1..200),
            start in 0.0f64..=1.0,
            g_minus in 0.001f64..0.5,
            extra in 0.0f64..0.5,
        ) {
            let p = AuthorityParams { g_minus, g_plus: (g_minus + extra).min(1.0), ..Default::default() };
            let mut s = AuthorityState::new(start);
            for hat in seq {
                let next = update_authority(&s, hat, &p);
                prop_assert!((0.0..=1.0).contains(&next.alpha_h));
                prop_assert!((next.alpha_h - hat).abs() <= (s.alpha_h - hat).abs() + 1e-15);
                s = next;
            }
        }

        #[test]
        fn rise_outpaces_decay(alpha in 0.0f64..1.0, gap in 0.0f64..1.0) {
            let p = AuthorityParams::default();
            // equal innovation magnitude in both directions
            let up_target = (alpha + gap).min(1.0);
            let gap = up_target - alpha;
            prop_assume!(alpha - gap >= 0.0);
            let up = update_authority(&AuthorityState::new(alpha), up_target, &p).alpha_h - alpha;
            let down = alpha - update_authority(&AuthorityState::new(alpha), alpha - gap, &p).alpha_h;
            prop_assert!(up >= down);
        }

        #[test]
        fn impedance_psd(alpha in 0.0f64..=1.0, k in proptest::array::uniform6(0.0f64..2000.0)) {
            let (kk, dd) = variable_impedance_diag(alpha, &Vector6::from(k));
            for i in 0..6 {
                prop_assert!(kk[i] >= 0.0 && dd[i] >= 0.0);
                prop_assert!((dd[i] * dd[i] - 4.0 * kk[i]).abs() <= 1e-9 * (1.0 + kk[i]));
            }
        }
    }
}
