"""NV ground-state spin physics.

All frequencies are cyclic (MHz), fields in Gauss, times in microseconds
unless a name says otherwise (``t1`` is in ms, ``kappa`` in kHz).  The
electron gyromagnetic ratio is stored as gamma/2pi so a Zeeman shift is
simply ``gamma_e * B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetError

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class NVParams:
    """Physical constants of the NV / 15N system."""

    zero_field_splitting: float = 2870.0  # MHz
    gamma_e: float = 2.8  # MHz/G
    gamma_n: float = 0.43  # kHz/G, bare 15N
    hyperfine: float = 3.0  # MHz
    enhancement_factor: float = 14.0

    def __post_init__(self):
        for name in ("zero_field_splitting", "gamma_e", "gamma_n", "hyperfine", "enhancement_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SpinOperators:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray


@dataclass(frozen=True)
class EsrPair:
    f_minus: float
    f_plus: float


@dataclass(frozen=True)
class ErrorBudget:
    p_dip: float
    p_t1: float
    p_t2: float
    p_off: float

    @property
    def p_err(self) -> float:
        return self.p_dip + self.p_t1 + self.p_t2 + self.p_off


def spin1_operators() -> SpinOperators:
    """Spin-1 matrices in the ``|+1>, |0>, |-1>`` basis."""
    sx = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / SQRT2
    sy = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / SQRT2
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return SpinOperators(sx, sy, sz)


_OPS = spin1_operators()

# tetrahedral bond directions of a [100]-cut crystal; class 0 is [111]
_CRYSTAL_AXES = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
) / np.sqrt(3.0)


def _rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest rotation taking unit vector ``a`` onto unit vector ``b``."""
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    if np.isclose(c, -1.0):
        # antiparallel: rotate by pi about any axis orthogonal to a
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-8:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return 2.0 * np.outer(perp, perp) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def orientation_axes(nv_axis) -> np.ndarray:
    """Lab-frame axes of the four orientation classes (rows), class 0 = ``nv_axis``."""
    n = np.asarray(nv_axis, dtype=float)
    n = n / np.linalg.norm(n)
    rot = _rotation_between(_CRYSTAL_AXES[0], n)
    return _CRYSTAL_AXES @ rot.T


def decompose_field(b_vec, axis) -> tuple[np.ndarray, np.ndarray]:
    """Split field(s) ``(..., 3)`` into axial projection and transverse magnitude."""
    b = np.asarray(b_vec, dtype=float)
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    axial = b @ n
    perp_vec = b - axial[..., None] * n
    return axial, np.linalg.norm(perp_vec, axis=-1)


def nv_hamiltonian(b_nv, params: NVParams = NVParams()) -> np.ndarray:
    """H = D Sz^2 + gamma_e B.S in MHz, field given in the NV frame (z = NV axis)."""
    bx, by, bz = (float(c) for c in b_nv)
    ops = _OPS
    return (
        params.zero_field_splitting * (ops.sz @ ops.sz)
        + params.gamma_e * (bx * ops.sx + by * ops.sy + bz * ops.sz)
    )


def esr_frequencies(b_vec, orientation_class: int = 0, params: NVParams = NVParams(),
                    nv_axis=(0.0, 0.0, 1.0)) -> EsrPair:
    """Transition frequencies |0> -> |-1>, |+1> for a lab-frame field.

    ``nv_axis`` is the lab direction of orientation class 0; the other
    classes follow from the tetrahedral set.
    """
    axis = orientation_axes(nv_axis)[orientation_class]
    axial, perp = decompose_field(np.asarray(b_vec, dtype=float), axis)
    evals = np.linalg.eigvalsh(nv_hamiltonian((perp, 0.0, axial), params))
    if not np.all(np.isfinite(evals)):
        raise ArithmeticError("eigenvalue solver returned non-finite values")
    e0, e1, e2 = np.sort(evals)
    return EsrPair(float(e1 - e0), float(e2 - e0))


def esr_frequencies_axial(b_axial, b_perp, params: NVParams = NVParams()):
    """Vectorised f_-, f_+ for arrays of axial/transverse field (NV frame)."""
    b_axial = np.atleast_1d(np.asarray(b_axial, dtype=float))
    b_perp = np.atleast_1d(np.asarray(b_perp, dtype=float))
    ops = _OPS
    h = (
        params.zero_field_splitting * (ops.sz @ ops.sz)[None]
        + params.gamma_e * (b_perp[:, None, None] * ops.sx[None] + b_axial[:, None, None] * ops.sz[None])
    )
    evals = np.sort(np.linalg.eigvalsh(h), axis=-1)
    return evals[:, 1] - evals[:, 0], evals[:, 2] - evals[:, 0]


def esr_linewidth(t2_star: float, power_broadening: float = 0.0) -> float:
    """Single-NV Lorentzian FWHM (MHz): 1/(pi T2*) combined in quadrature with power broadening."""
    return float(np.hypot(1.0 / (np.pi * t2_star), power_broadening))


def rabi_population(omega, detuning, duration):
    """Transition probability for a square pulse with detuning (generalised Rabi formula)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("Rabi frequency must be non-negative")
    omega_r2 = omega**2 + np.asarray(detuning, dtype=float) ** 2
    omega_r = np.sqrt(omega_r2)
    with np.errstate(invalid="ignore", divide="ignore"):
        amp = np.where(omega_r2 > 0, omega**2 / np.where(omega_r2 > 0, omega_r2, 1.0), 0.0)
    return amp * np.sin(np.pi * omega_r * np.asarray(duration, dtype=float)) ** 2


def max_crosstalk(omega: float, detuning: float) -> float:
    """Maximum over pulse length of the off-resonant transition probability."""
    denom = omega**2 + detuning**2
    if denom == 0:
        return 0.0
    return omega**2 / denom


def echo_envelope(tau, t2: float, stretch: float = 1.0):
    if t2 <= 0 or stretch <= 0:
        raise ValueError("t2 and stretch must be positive")
    return np.exp(-((np.asarray(tau, dtype=float) / t2) ** stretch))


def nmr_larmor(b_perp, params: NVParams = NVParams()):
    """Effective 15N precession frequency (MHz) in a transverse field."""
    b_perp = np.asarray(b_perp, dtype=float)
    if np.any(b_perp < 0):
        raise ValueError("transverse field magnitude must be non-negative")
    return params.enhancement_factor * params.gamma_n * 1e-3 * b_perp


def echo_signal_model(tau, t2: float, stretch: float, f_a: float, f_b: float, depth: float):
    """Hahn-echo signal with 15N-induced envelope modulation.

    exp[-(tau/T2)^p] * (1 - depth * sin^2(pi f_a tau) * sin^2(pi f_b tau))
    """
    if not 0.0 <= depth <= 1.0:
        raise ValueError("modulation depth must lie in [0, 1]")
    tau = np.asarray(tau, dtype=float)
    mod = np.sin(np.pi * f_a * tau) ** 2 * np.sin(np.pi * f_b * tau) ** 2
    return echo_envelope(tau, t2, stretch) * (1.0 - depth * mod)


def error_budget(omega: float, detuning: float, kappa: float = 0.3, t1: float = 1.0,
                 t2: float = 100.0, tau: float | None = None) -> ErrorBudget:
    """Site-selective driving error terms.

    omega, detuning in MHz; kappa in kHz; t1 in ms; t2 and tau in us.
    The decoherence term is taken as (omega * T2)^-3.  With ``tau=None``
    the crosstalk term is its maximum over pulse length.
    """
    if omega <= 0:
        raise BudgetError("error budget undefined for zero Rabi frequency")
    if t1 <= 0 or t2 <= 0:
        raise BudgetError("relaxation times must be positive")
    p_dip = (kappa * 1e-3 / omega) ** 2
    p_t1 = 1.0 / (omega * t1 * 1e3)
    p_t2 = (omega * t2) ** -3
    if tau is None:
        p_off = max_crosstalk(omega, detuning)
    else:
        p_off = float(rabi_population(omega, detuning, tau))
    return ErrorBudget(p_dip, p_t1, p_t2, p_off)


def addressing_fidelity(omega: float, gradient: float, separation: float,
                        params: NVParams = NVParams()) -> float:
    """Delta^2 / (Delta^2 + Omega^2) with Delta = gamma_e * gradient * separation."""
    delta = params.gamma_e * gradient * separation
    denom = delta**2 + omega**2
    if denom == 0:
        return 1.0
    return delta**2 / denom
