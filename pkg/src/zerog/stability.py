"""Closed-loop stability analysis of the emulation controller.

With tracking error ``x = [q_tilde, qd_tilde]`` the closed loop obeys

    qdd_tilde + K_d qd_tilde + K_p q_tilde + Q(q) (K_d qd_tilde + K_p q_tilde) = 0,
    Q = M_r^-1 J^T M_m J,

a Hurwitz linear system plus a vanishing perturbation. A quadratic Lyapunov
function for the nominal part gives the sufficient condition
``||Q|| <= alpha(k_p, k_d)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import NonDecayingError
from .manipulator import cartesian_inertia
from .spatial import as_inertia6


def q_matrix(model, attachment, q):
    """``Q(q) = M_r^-1 J^T M_m J`` and its spectral norm."""
    st = model.state(q, np.zeros(model.n_joints), attachment.c)
    Q = np.linalg.solve(st.M_r, st.J.T @ attachment.M_m @ st.J)
    return Q, np.linalg.norm(Q, 2)


def _gains(k_p, k_d=None):
    if k_d is None:
        return k_p.k_p, k_p.k_d
    return float(k_p), float(k_d)


def alpha(k_p, k_d=None):
    """Stability threshold ``k_p k_d / ((k_p + 1)^2 + k_d^2)^(3/2)``."""
    k_p, k_d = _gains(k_p, k_d)
    return k_p * k_d / ((k_p + 1.0) ** 2 + k_d ** 2) ** 1.5


def nominal_system(k_p, k_d=None):
    k_p, k_d = _gains(k_p, k_d)
    return np.array([[0.0, 1.0], [-k_p, -k_d]])


def lyapunov_P(k_p, k_d=None):
    """Closed-form solution of ``P A + A^T P = -I`` for the per-axis system."""
    k_p, k_d = _gains(k_p, k_d)
    return np.array([[k_p * (k_p + 1.0) + k_d ** 2, k_d],
                     [k_d, k_p + 1.0]]) / (2.0 * k_p * k_d)


def lambda_max_P_bound(k_p, k_d=None):
    k_p, k_d = _gains(k_p, k_d)
    return ((k_p + 1.0) ** 2 + k_d ** 2) / (2.0 * k_p * k_d)


def lyapunov_residual(k_p, k_d=None):
    P = lyapunov_P(k_p, k_d)
    A = nominal_system(k_p, k_d)
    return np.abs(P @ A + A.T @ P + np.eye(2)).max()


def alpha_from_P_bound(k_p, k_d=None):
    """Same threshold rebuilt from the ``lambda_max(P)`` bound."""
    k_p, k_d = _gains(k_p, k_d)
    return k_p * k_d / (2.0 * k_p * k_d * lambda_max_P_bound(k_p, k_d)) ** 1.5


def lyapunov_decay_rate(k_p, k_d, Q_norm):
    """Guaranteed rate ``Omega`` in ``||x(t)|| <= c ||x(0)|| e^(-Omega t)``; 0 if none."""
    lam = np.linalg.eigvalsh(lyapunov_P(k_p, k_d))[-1]
    margin = 1.0 - 2.0 * np.hypot(k_p, k_d) * lam * Q_norm
    return max(0.0, margin / (2.0 * lam))


def decay_amplitude(k_p, k_d, Q_norm, x0_norm):
    """``a = (k_p^2 + k_d^2)(1 + ||Q||) ||x(0)||`` bounding ``||qdd_tilde||``."""
    return (k_p ** 2 + k_d ** 2) * (1.0 + Q_norm) * x0_norm


def delta_envelope(sigma, a, M_delta, Omega, t):
    """``sigma a lambda_max(M_delta) exp(-Omega t)``; uses the largest |eigenvalue|."""
    lam = np.abs(np.linalg.eigvalsh(M_delta)).max()
    return sigma * a * lam * np.exp(-Omega * np.asarray(t))


def workspace_samples(model, n=4096, q_min=None, q_max=None):
    """Deterministic Halton samples of the joint box."""
    lo = model.q_min if q_min is None else np.asarray(q_min, float)
    hi = model.q_max if q_max is None else np.asarray(q_max, float)
    u = qmc.Halton(d=model.n_joints, scramble=False).random(n + 1)[1:]
    return lo + u * (hi - lo)


@dataclass
class StabilityReport:
    Q_norm_max: float
    alpha: float
    satisfied_eq21: bool
    satisfied_eq22: bool
    P: np.ndarray
    lambda_max_P: float
    sigma: float
    suggested_decay_Omega: float
    lambda_max_Mm: float
    mass_bound: float
    n_samples: int
    k_p: float
    k_d: float

    def as_dict(self):
        return {
            "k_p": self.k_p,
            "k_d": self.k_d,
            "alpha": self.alpha,
            "Q_norm_max": self.Q_norm_max,
            "satisfied_norm_condition": self.satisfied_eq21,
            "lambda_max_M_m": self.lambda_max_Mm,
            "mass_bound": self.mass_bound,
            "satisfied_mass_inequality": self.satisfied_eq22,
            "P_11": self.P[0, 0],
            "P_12": self.P[0, 1],
            "P_22": self.P[1, 1],
            "lambda_max_P": self.lambda_max_P,
            "sigma": self.sigma,
            "suggested_decay_Omega": self.suggested_decay_Omega,
            "n_samples": self.n_samples,
        }

    def to_text(self):
        lines = [f"{k} = {_fmt(v)}" for k, v in self.as_dict().items()]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def check_mass_inequality(model, attachment, gains, samples):
    """Evaluate both stability conditions over a set of joint configurations.

    The norm condition uses the sampled supremum of ``||Q||``; the mass
    inequality ``lambda_max(M_m) <= alpha lambda_min(M_r) / lambda_max(J J^T)``
    must hold at every sample and is the more conservative of the two.
    """
    samples = np.atleast_2d(samples)
    if samples.shape[0] == 0:
        raise ValueError("workspace sample set is empty")
    a = alpha(gains)
    M_m = attachment.M_m
    lam_Mm = np.linalg.eigvalsh(M_m)[-1]
    q_max = 0.0
    sigma = 0.0
    bound = np.inf
    zero = np.zeros(model.n_joints)
    for q in samples:
        st = model.state(q, zero, attachment.c)
        Q = np.linalg.solve(st.M_r, st.J.T @ M_m @ st.J)
        q_max = max(q_max, np.linalg.norm(Q, 2))
        lam_JJ = np.linalg.eigvalsh(st.J @ st.J.T)[-1]
        sigma = max(sigma, np.sqrt(lam_JJ))
        bound = min(bound, a * np.linalg.eigvalsh(st.M_r)[0] / lam_JJ)
    P = lyapunov_P(gains)
    return StabilityReport(
        Q_norm_max=q_max, alpha=a, satisfied_eq21=bool(q_max <= a),
        satisfied_eq22=bool(lam_Mm <= bound), P=P,
        lambda_max_P=float(np.linalg.eigvalsh(P)[-1]), sigma=sigma,
        suggested_decay_Omega=lyapunov_decay_rate(gains.k_p, gains.k_d, q_max),
        lambda_max_Mm=lam_Mm, mass_bound=bound, n_samples=samples.shape[0],
        k_p=gains.k_p, k_d=gains.k_d)


def zero_gain_condition(model, flight, test, state):
    """Frobenius norm of ``M_Cr(q) + M_m - M_s``; zero disables force feedback."""
    M_Cr = cartesian_inertia(model, state)
    return np.linalg.norm(M_Cr + as_inertia6(test).matrix - as_inertia6(flight).matrix, "fro")


def suggest_gains(Q_norm_max, margin=0.05, grid=200):
    """Gains with the fastest nominal decay subject to ``alpha >= (1 + margin) ||Q||``.

    Returns ``(k_p, k_d, feasible)``. When no gains qualify, the
    alpha-maximising pair is returned with ``feasible = False``.
    """
    kp = np.logspace(-2, 2, grid)
    KP, KD = np.meshgrid(kp, kp, indexing="ij")
    A = KP * KD / ((KP + 1) ** 2 + KD ** 2) ** 1.5
    ok = A >= (1.0 + margin) * Q_norm_max
    if not ok.any():
        i, j = np.unravel_index(np.argmax(A), A.shape)
        return float(KP[i, j]), float(KD[i, j]), False
    # slowest pole of s^2 + k_d s + k_p
    disc = KD ** 2 - 4 * KP
    rate = np.where(disc >= 0, 0.5 * (KD - np.sqrt(np.abs(disc))), 0.5 * KD)
    rate = np.where(ok, rate, -np.inf)
    i, j = np.unravel_index(np.argmax(rate), rate.shape)
    return float(KP[i, j]), float(KD[i, j]), True


@dataclass
class DecayFit:
    a: float
    Omega: float
    residual: float
    t_start: float


def fit_decay_envelope(t, x_norm, t_start=None, floor=1e-13):
    """Least-squares fit of ``log ||x||`` against ``t`` after the transient.

    ``t_start`` defaults to 10 % of the record. Samples at or below ``floor``
    are excluded so round-off does not bend the fit. ``residual`` is the RMS
    of the log-residuals, i.e. an approximate relative error of the fit.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x_norm, dtype=float)
    if t.size < 100:
        raise ValueError("need at least 100 samples")
    if x[0] == 0.0:
        raise ValueError("initial error must be non-zero")
    if t_start is None:
        t_start = t[0] + 0.1 * (t[-1] - t[0])
    sel = (t >= t_start) & (x > floor)
    if sel.sum() < 2:
        raise NonDecayingError("not enough samples above the floor to fit")
    slope, icpt = np.polyfit(t[sel], np.log(x[sel]), 1)
    if slope >= 0.0:
        raise NonDecayingError(f"fitted slope {slope:.3e} is not negative")
    res = np.log(x[sel]) - (slope * t[sel] + icpt)
    return DecayFit(float(np.exp(icpt)), float(-slope), float(np.sqrt(np.mean(res ** 2))), float(t_start))
