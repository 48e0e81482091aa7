"""Built-in orbits with closed-form coefficients.

Every preset is already trivialized: on flat configuration spaces a constant
orthonormal frame is parallel, so the frame derivation reduces to choosing
the monodromy frame matrix ``A``.

* ``flat_torus``: geodesic x(t) = l t e1 of L = |v|^2 / 2 on a flat torus.
  ``frame="identity"`` gives A = I (n free); ``"screw"`` glues by a rotation
  about e1 (n = 3); ``"reflection"`` glues by diag(1, -1) (n = 2, the
  non-orientable case).  Energy h gives T = l (2h)^{-1/2}.
* ``circle_free_particle``: the n = 1 case of the flat torus.
* ``harmonic_loop``: circular orbit of radius r for L = |v|^2/2 - |q|^2/2 in
  the plane; isochronous with T = 2 pi and h = r^2.
* ``kepler_circular``: circular orbit of L = |v|^2/2 + 1/|q| at energy
  h < 0, radius r = -1/(2h), period 2 pi (-2h)^{-3/2}.
* ``negative_P_synthetic``: the negated Lagrangian -L of a base preset
  (``"free_particle"`` or ``"kepler"``); P is negative definite, the energy
  changes sign and the orbit cylinder keeps its period function in -h.
"""

from __future__ import annotations

from typing import Any, Callable

import numpy as np

from .errors import ScenarioError
from .orbit_model import Coefficients, LagrangianCallbacks, OrbitData

__all__ = ["PRESETS", "build_preset", "preset_names", "preset_expectations"]

DEFAULT_SAMPLES = 257


def _rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _grid(samples: int) -> np.ndarray:
    if samples < 8:
        raise ScenarioError("preset sampling needs at least 8 points")
    return np.linspace(0.0, 1.0, samples)


def _constant(ts: np.ndarray, value: np.ndarray) -> np.ndarray:
    return np.broadcast_to(value, (ts.size, *value.shape)).copy()


def _quadratic_callbacks(sign: float, position, velocity, potential=None, grad=None) -> LagrangianCallbacks:
    """Callbacks for sign * (|v|^2 / 2 - V(q))."""
    pot = potential or (lambda q: np.zeros(q.shape[0]))
    gr = grad or (lambda q: np.zeros_like(q))
    return LagrangianCallbacks(
        position=position,
        velocity=velocity,
        lagrangian=lambda q, v: sign * (0.5 * np.einsum("ki,ki->k", v, v) - pot(q)),
        dv=lambda q, v: sign * v,
        dq=lambda q, v: -sign * gr(q),
    )


def _free_particle(n: int, length: float, h: float, a: np.ndarray, sign: float, samples: int,
                   name: str, builder: Callable[[float], OrbitData] | None) -> OrbitData:
    if sign * h <= 0:
        raise ScenarioError(f"energy h={h} outside the validity range for this preset")
    speed = np.sqrt(2.0 * sign * h)
    T = length / speed
    e1 = np.zeros(n)
    e1[0] = length
    p = sign * np.eye(n)
    zero = np.zeros((n, n))

    def coeffs(ts: np.ndarray) -> Coefficients:
        return Coefficients(_constant(ts, p), _constant(ts, zero), _constant(ts, zero),
                            _constant(ts, np.zeros(n)), _constant(ts, e1), _constant(ts, np.zeros(n)))

    def period(hh: float) -> float:
        return length / np.sqrt(2.0 * sign * hh)

    grid = _grid(samples)
    c = coeffs(grid)
    callbacks = _quadratic_callbacks(sign, lambda ts: np.outer(ts, e1), lambda ts: _constant(np.atleast_1d(ts), e1))
    tprime = -sign * length * (2.0 * sign * h) ** -1.5
    return OrbitData(n=n, T=T, h=h, grid=grid, P=c.P, Q=c.Q, R=c.R, Lq=c.Lq, xprime=c.xprime, A=a,
                     tprime_h=tprime, xsecond=c.xsecond, name=name, coeff_fn=coeffs, period_fn=period,
                     family=builder, callbacks=callbacks)


def flat_torus(n: int = 2, length: float = 1.0, h: float = 0.5, frame: str = "identity",
               angle: float = 2.0 * np.pi / 5.0, samples: int = DEFAULT_SAMPLES) -> OrbitData:
    if frame == "identity":
        a = np.eye(n)
    elif frame == "screw":
        n = 3
        a = np.eye(3)
        a[1:, 1:] = _rot2(angle)
    elif frame == "reflection":
        n = 2
        a = np.diag([1.0, -1.0])
    else:
        raise ScenarioError(f"unknown flat_torus frame {frame!r}")
    if n < 1:
        raise ScenarioError("n must be positive")

    def builder(hh: float) -> OrbitData:
        return flat_torus(n=n, length=length, h=hh, frame=frame, angle=angle, samples=samples)

    return _free_particle(n, length, h, a, 1.0, samples, "flat_torus", builder)


def circle_free_particle(length: float = 1.0, h: float = 0.5, samples: int = DEFAULT_SAMPLES) -> OrbitData:
    def builder(hh: float) -> OrbitData:
        return circle_free_particle(length=length, h=hh, samples=samples)

    return _free_particle(1, length, h, np.eye(1), 1.0, samples, "circle_free_particle", builder)


def _circle(radius: float, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    ang = 2.0 * np.pi * ts
    q = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    xp = 2.0 * np.pi * radius * np.stack([-np.sin(ang), np.cos(ang)], axis=1)
    xs = -4.0 * np.pi ** 2 * q
    return ang, q, xp, xs


def harmonic_loop(radius: float = 1.0, samples: int = DEFAULT_SAMPLES) -> OrbitData:
    if radius <= 0:
        raise ScenarioError("radius must be positive")
    T = 2.0 * np.pi
    h = radius ** 2

    def coeffs(ts: np.ndarray) -> Coefficients:
        _, q, xp, xs = _circle(radius, ts)
        eye = _constant(ts, np.eye(2))
        return Coefficients(eye, _constant(ts, np.zeros((2, 2))), -eye, -q, xp, xs)

    grid = _grid(samples)
    c = coeffs(grid)
    callbacks = _quadratic_callbacks(
        1.0,
        lambda ts: _circle(radius, np.atleast_1d(ts))[1],
        lambda ts: _circle(radius, np.atleast_1d(ts))[2],
        potential=lambda q: 0.5 * np.einsum("ki,ki->k", q, q),
        grad=lambda q: q,
    )

    def builder(hh: float) -> OrbitData:
        return harmonic_loop(radius=np.sqrt(hh), samples=samples)

    return OrbitData(n=2, T=T, h=h, grid=grid, P=c.P, Q=c.Q, R=c.R, Lq=c.Lq, xprime=c.xprime, A=np.eye(2),
                     tprime_h=0.0, xsecond=c.xsecond, name="harmonic_loop", coeff_fn=coeffs,
                     period_fn=lambda hh: T, family=builder, callbacks=callbacks)


def _kepler(h: float, sign: float, samples: int, radius_perturbation: float, name: str,
            builder: Callable[[float], OrbitData]) -> OrbitData:
    h_phys = sign * h
    if h_phys >= 0:
        raise ScenarioError(f"energy h={h} outside the bound-orbit range of this preset")
    r = -1.0 / (2.0 * h_phys)
    T = 2.0 * np.pi * r ** 1.5

    def coeffs(ts: np.ndarray) -> Coefficients:
        _, q, xp, xs = _circle(r, ts)
        hess = (3.0 * np.einsum("ki,kj->kij", q, q) - r ** 2 * np.eye(2)) / r ** 5
        eye = _constant(ts, np.eye(2))
        return Coefficients(sign * eye, _constant(ts, np.zeros((2, 2))), sign * hess, -sign * q / r ** 3,
                            xp, xs)

    def period(hh: float) -> float:
        return 2.0 * np.pi * (-2.0 * sign * hh) ** -1.5

    grid = _grid(samples)
    c = coeffs(grid)
    scale = 1.0 + radius_perturbation
    callbacks = _quadratic_callbacks(
        sign,
        lambda ts: scale * _circle(r, np.atleast_1d(ts))[1],
        lambda ts: scale * _circle(r, np.atleast_1d(ts))[2],
        potential=lambda q: -1.0 / np.linalg.norm(q, axis=1),
        grad=lambda q: q / np.linalg.norm(q, axis=1)[:, None] ** 3,
    )
    tprime = sign * 6.0 * np.pi * (-2.0 * h_phys) ** -2.5
    return OrbitData(n=2, T=T, h=h, grid=grid, P=c.P, Q=c.Q, R=c.R, Lq=c.Lq, xprime=c.xprime, A=np.eye(2),
                     tprime_h=tprime, xsecond=c.xsecond, name=name, coeff_fn=coeffs, period_fn=period,
                     family=builder, callbacks=callbacks)


def kepler_circular(h: float = -0.5, radius_perturbation: float = 0.0,
                    samples: int = DEFAULT_SAMPLES) -> OrbitData:
    def builder(hh: float) -> OrbitData:
        return kepler_circular(h=hh, samples=samples)

    return _kepler(h, 1.0, samples, radius_perturbation, "kepler_circular", builder)


def negative_p_synthetic(base: str = "free_particle", n: int = 1, length: float = 1.0,
                         h: float | None = None, samples: int = DEFAULT_SAMPLES) -> OrbitData:
    if base == "free_particle":
        hh = -0.5 if h is None else h

        def builder(e: float) -> OrbitData:
            return negative_p_synthetic(base=base, n=n, length=length, h=e, samples=samples)

        return _free_particle(n, length, hh, np.eye(n), -1.0, samples, "negative_P_synthetic", builder)
    if base == "kepler":
        hh = 0.5 if h is None else h

        def builder(e: float) -> OrbitData:
            return negative_p_synthetic(base=base, h=e, samples=samples)

        return _kepler(hh, -1.0, samples, 0.0, "negative_P_synthetic", builder)
    raise ScenarioError(f"unknown negative_P_synthetic base {base!r}")


PRESETS: dict[str, Callable[..., OrbitData]] = {
    "flat_torus": flat_torus,
    "circle_free_particle": circle_free_particle,
    "harmonic_loop": harmonic_loop,
    "kepler_circular": kepler_circular,
    "negative_P_synthetic": negative_p_synthetic,
}


def preset_names() -> list[str]:
    return list(PRESETS)


def build_preset(name: str, **options: Any) -> OrbitData:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    try:
        return builder(**options)
    except TypeError as err:
        raise ScenarioError(f"invalid options for preset {name!r}: {err}") from err


def preset_expectations() -> dict[str, dict[str, int]]:
    """Integer indices of the default presets, derived by hand from closed-form solutions."""
    return {
        "flat_torus": {"ispec_fixed": 0, "ispec_free": 0, "igeo": 2, "iclm_gamma2": 1},
        "circle_free_particle": {"ispec_fixed": 0, "ispec_free": 0, "igeo": 1, "iclm_gamma2": 0},
        "harmonic_loop": {"ispec_fixed": 2, "ispec_free": 3, "igeo": 4, "iclm_gamma2": 4},
        "kepler_circular": {"ispec_fixed": 0, "ispec_free": 1, "igeo": 2, "iclm_gamma2": 2},
        "negative_P_synthetic": {"ispec_fixed": -1, "ispec_free": -1, "igeo": 0},
    }
