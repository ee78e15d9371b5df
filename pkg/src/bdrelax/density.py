"""Relaxed density estimators built on the cell solvers: bulk density,
discrete (symmetric) quasiconvex envelope, jump density, recession slopes,
a randomized quasiconvexity deficit test, and the skew-sensitive
one-homogeneous integrand corpus.

All limsup-type quantities are reported as DensityEstimate records: the
sample sequence along the requested schedule, the last value as the
working extrapolation, and the spread of the last two samples. No claim
about the true limit is encoded beyond that.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .cellsolver import (AffineData, CellSpec, GridDisplacement, Integrand, JumpData,
                         SolverParams, SurfaceIntegrand, abs_sym, frame_for_normal, g_odot,
                         g_penalty, prolong, scaled, solve_ld, solve_sbd, sqrt1plus_sym,
                         _smooth_norm)
from .tensor import frob, sym

DEFAULT_EPS_SCHEDULE = (1.0, 0.5, 0.25)
DEFAULT_T_SCHEDULE = (1e2, 1e3, 1e4)
DEFAULT_MESH_SCHEDULE = (8, 16, 32)


@dataclass
class DensityEstimate:
    """(key, value) samples along a refinement schedule plus the working
    extrapolation (= last sample) and the spread of the last two."""

    samples: list
    extrapolated: float
    spread: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples, diagnostics=None) -> "DensityEstimate":
        samples = list(samples)
        if not samples:
            raise ValueError("no samples")
        vals = [v for _, v in samples]
        extrapolated = vals[-1]
        spread = abs(vals[-1] - vals[-2]) if len(vals) > 1 else 0.0
        converged = spread <= max(1e-8, 0.02 * abs(extrapolated))
        return cls(samples=samples, extrapolated=extrapolated, spread=spread,
                   converged=converged, diagnostics=diagnostics or {})


# ---------------------------------------------------------------------------
# integrand corpus


def mueller_h(A) -> float:
    """One-homogeneous nonconvex density on 2x2 matrices:
    |A11 - A22| + |A12 + A21| + min(|A11 + A22|, |A12 - A21|)."""
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2):
        raise ValueError("mueller_h expects a 2x2 matrix")
    return float(abs(A[0, 0] - A[1, 1]) + abs(A[0, 1] + A[1, 0])
                 + min(abs(A[0, 0] + A[1, 1]), abs(A[0, 1] - A[1, 0])))


A0 = np.array([[1.0, -1.0], [1.0, 1.0]])
J_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def _h_pieces(A):
    A = np.asarray(A, dtype=float)
    l1 = A[..., 0, 0] - A[..., 1, 1]
    l2 = A[..., 0, 1] + A[..., 1, 0]
    l3 = A[..., 0, 0] + A[..., 1, 1]
    l4 = A[..., 0, 1] - A[..., 1, 0]
    return l1, l2, l3, l4


def mueller_h_integrand(mu: float = 1e-6) -> Integrand:
    """mueller_h as a full-gradient Integrand (depends on the skew part)."""

    def raw(X, V, A):
        l1, l2, l3, l4 = _h_pieces(A)
        return np.abs(l1) + np.abs(l2) + np.minimum(np.abs(l3), np.abs(l4))

    def _s(t):
        return np.sqrt(t * t + mu * mu) - mu

    def _sp(t):
        return t / np.sqrt(t * t + mu * mu)

    def value(X, V, A):
        l1, l2, l3, l4 = _h_pieces(A)
        a, b = _s(l3), _s(l4)
        return _s(l1) + _s(l2) + 0.5 * (a + b - _s(a - b))

    def grad(X, V, A):
        l1, l2, l3, l4 = _h_pieces(A)
        a, b = _s(l3), _s(l4)
        da = 0.5 * (1.0 - _sp(a - b)) * _sp(l3)
        db = 0.5 * (1.0 + _sp(a - b)) * _sp(l4)
        d1, d2 = _sp(l1), _sp(l2)
        dA = np.zeros_like(np.asarray(A, dtype=float))
        dA[..., 0, 0] = d1 + da
        dA[..., 1, 1] = -d1 + da
        dA[..., 0, 1] = d2 + db
        dA[..., 1, 0] = d2 - db
        return np.zeros_like(np.asarray(V, dtype=float)), dA

    f = Integrand(name="mueller-h", dim=2, value=value, grad=grad, raw=raw,
                  convex=False, one_homogeneous=True, sym_only=False,
                  v_independent=True, mu=mu)
    return replace(f, recession_exact=f)


def mueller_f_eps(eps: float, mu: float = 1e-6) -> Integrand:
    """mueller_h plus eps |sym A|: coercive in the strain, still skew-sensitive.

    The quasiconvexification step itself has no closed form; this corpus
    entry exposes the raw density and sq_envelope computes its discrete
    envelope on demand.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    h = mueller_h_integrand(mu=mu)
    a = abs_sym(mu=mu)

    def value(X, V, A):
        return h.value(X, V, A) + eps * a.value(X, V, A)

    def grad(X, V, A):
        dV1, dA1 = h.grad(X, V, A)
        dV2, dA2 = a.grad(X, V, A)
        return dV1 + eps * dV2, dA1 + eps * dA2

    def raw(X, V, A):
        return h.raw(X, V, A) + eps * a.raw(X, V, A)

    f = Integrand(name=f"mueller-f-eps({eps:g})", dim=2, value=value, grad=grad, raw=raw,
                  convex=False, one_homogeneous=True, sym_only=False, mu=mu)
    return replace(f, recession_exact=f)


def convex_envelope_witness_A0() -> dict:
    """Two-point convex combination showing the convex envelope of
    mueller_h vanishes at A0: both endpoints are zeros of h and average
    to A0."""
    pairs = [(0.5, 2.0 * np.eye(2)), (0.5, 2.0 * J_ROT)]
    mean = sum(w * B for w, B in pairs)
    return {
        "pairs": pairs,
        "h_values": [mueller_h(B) for _, B in pairs],
        "mean": mean,
        "mean_is_A0": bool(np.allclose(mean, A0, atol=0.0)),
        "h_at_mean": mueller_h(mean),
    }


def laminate_a(mu_reg: float = 1e-2) -> Integrand:
    """Unit-periodic laminate (2 + cos 2 pi x1) * sqrt(mu^2 + |sym A|^2)."""

    def coef(X):
        return 2.0 + np.cos(2.0 * np.pi * np.atleast_2d(X)[:, 0])

    def value(X, V, A):
        S = sym(A)
        return coef(X) * np.sqrt(mu_reg * mu_reg + (S * S).sum(axis=(-2, -1)))

    def grad(X, V, A):
        S = sym(A)
        root = np.sqrt(mu_reg * mu_reg + (S * S).sum(axis=(-2, -1)))
        dA = (coef(X) / root)[:, None, None] * S
        return np.zeros_like(np.asarray(V, dtype=float)), dA

    return Integrand(name=f"laminate-a({mu_reg:g})", dim=2, value=value, grad=grad, raw=value,
                     convex=True, x_periodic=True, sym_only=True)


def truncated_neg_sym_sq() -> Integrand:
    """max(1 - |sym A|^2, 0): bounded, nonconvex, not symmetric quasiconvex."""

    def value(X, V, A):
        S = sym(A)
        return np.maximum(1.0 - (S * S).sum(axis=(-2, -1)), 0.0)

    def grad(X, V, A):
        S = sym(A)
        active = ((S * S).sum(axis=(-2, -1)) < 1.0).astype(float)
        return np.zeros_like(np.asarray(V, dtype=float)), -2.0 * active[:, None, None] * S

    return Integrand(name="truncated-neg-sym-sq", dim=2, value=value, grad=grad, raw=value,
                     convex=False, sym_only=True)


def vmin_abs(mu: float = 1e-6) -> Integrand:
    """(1 + min(|v|, 1)) |sym A|: the v-dependent bulk-density test case."""

    def _vfac(V):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        nv = np.sqrt((V * V).sum(axis=-1) + mu * mu) - mu
        return 1.0 + 0.5 * (nv + 1.0 - np.sqrt((nv - 1.0) ** 2 + mu * mu))

    def raw(X, V, A):
        nv = np.sqrt((np.atleast_2d(V) ** 2).sum(axis=-1))
        return (1.0 + np.minimum(nv, 1.0)) * frob(sym(A))

    def value(X, V, A):
        S = sym(A)
        return _vfac(V) * _smooth_norm((S * S).sum(axis=(-2, -1)), mu)

    def grad(X, V, A):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        S = sym(A)
        q = (S * S).sum(axis=(-2, -1))
        root = np.sqrt(q + mu * mu)
        sn = root - mu
        nv_root = np.sqrt((V * V).sum(axis=-1) + mu * mu)
        nv = nv_root - mu
        dmin = 0.5 * (1.0 - (nv - 1.0) / np.sqrt((nv - 1.0) ** 2 + mu * mu))
        dV = (dmin * sn / nv_root)[:, None] * V
        dA = (_vfac(V) / root)[:, None, None] * S
        return dV, dA

    return Integrand(name="vmin-abs", dim=2, value=value, grad=grad, raw=raw,
                     convex=False, v_independent=False, sym_only=True, mu=mu)


_REGISTRY = {
    "abs-sym": lambda arg: abs_sym() if arg is None else abs_sym(mu=float(arg)),
    "sqrt1plus-sym": lambda arg: sqrt1plus_sym(),
    "mueller-h": lambda arg: mueller_h_integrand(),
    "mueller-f-eps": lambda arg: mueller_f_eps(float(arg if arg is not None else 0.1)),
    "laminate-a": lambda arg: laminate_a() if arg is None else laminate_a(mu_reg=float(arg)),
    "truncated-neg-sym-sq": lambda arg: truncated_neg_sym_sq(),
    "vmin-abs": lambda arg: vmin_abs(),
}


def get_integrand(spec: str) -> Integrand:
    """Look up a corpus integrand by id, e.g. 'abs-sym' or 'mueller-f-eps(0.1)'.

    A '*C' suffix scales the density by C (used for penalty-style bulk
    terms in the SBD experiments).
    """
    spec = spec.strip()
    factor = None
    if "*" in spec:
        spec, fs = spec.split("*", 1)
        factor = float(fs)
    arg = None
    if "(" in spec and spec.endswith(")"):
        spec, arg = spec[:-1].split("(", 1)
    elif ":" in spec:
        spec, arg = spec.split(":", 1)
    if spec not in _REGISTRY:
        raise KeyError(f"unknown integrand id {spec!r}; known: {sorted(_REGISTRY)}")
    f = _REGISTRY[spec](arg)
    if factor is not None:
        f = scaled(f, factor)
    return f


def get_surface_integrand(spec: str) -> SurfaceIntegrand:
    spec = spec.strip()
    arg = None
    if "(" in spec and spec.endswith(")"):
        spec, arg = spec[:-1].split("(", 1)
    if spec in ("odot", "odot-norm"):
        return g_odot() if arg is None else g_odot(mu=float(arg))
    if spec == "penalty":
        return g_penalty() if arg is None else g_penalty(c=float(arg))
    raise KeyError(f"unknown surface integrand id {spec!r}")


# ---------------------------------------------------------------------------
# integrand wrappers for the cell formulas


def _with_v_offset(f0: Integrand, v0, eps: float) -> Integrand:
    """f'(x, w, A) = f0(x, v0 + eps w, A) with chained v-derivatives."""
    v0 = np.asarray(v0, dtype=float).reshape(2)

    def value(X, V, A):
        return f0.value(X, v0[None, :] + eps * V, A)

    def grad(X, V, A):
        dV, dA = f0.grad(X, v0[None, :] + eps * V, A)
        return eps * dV, dA

    def raw(X, V, A):
        return f0.raw(X, v0[None, :] + eps * V, A)

    return replace(f0, name=f"{f0.name}|v-offset", value=value, grad=grad, raw=raw)


def _with_jump_scaling(f0: Integrand, eps: float) -> Integrand:
    """f'(x, w, A) = eps f0(x, w, A / eps) (the jump cell rescaling)."""

    def value(X, V, A):
        return eps * f0.value(X, V, np.asarray(A) / eps)

    def grad(X, V, A):
        dV, dA = f0.grad(X, V, np.asarray(A) / eps)
        return eps * dV, dA

    def raw(X, V, A):
        return eps * f0.raw(X, V, np.asarray(A) / eps)

    return replace(f0, name=f"{f0.name}|jump-scaled({eps:g})", value=value, grad=grad, raw=raw)


# ---------------------------------------------------------------------------
# estimators


def _require_symmetric(A) -> np.ndarray:
    A = np.asarray(A, dtype=float).reshape(2, 2)
    if frob(A - A.T) > 1e-12:
        raise ValueError("matrix argument must be symmetric")
    return A


def bulk_density(f0: Integrand, x0, v, A, eps_schedule=DEFAULT_EPS_SCHEDULE,
                 mesh: int = 16, solver: SolverParams | None = None) -> DensityEstimate:
    """Unit-cube Dirichlet values of the frozen-base-point bulk formula:
    for each eps, minimize f0(x0, v + eps w, e(w)) over w matching A y on
    the boundary."""
    A = _require_symmetric(A)
    x0 = np.asarray(x0, dtype=float).reshape(2)
    solver = solver or SolverParams()
    samples = []
    diags = {}
    for eps in eps_schedule:
        f_eps = _with_v_offset(f0, v, float(eps))
        spec = CellSpec(boundary=AffineData(A, np.zeros(2)), mesh=mesh,
                        solver=solver, freeze_x=x0)
        try:
            sol = solve_ld(spec, f_eps)
        except Exception as exc:
            raise RuntimeError(f"bulk_density solver failed at eps={eps}") from exc
        samples.append((float(eps), sol.value))
        diags[float(eps)] = sol.diagnostics
    return DensityEstimate.from_samples(samples, diagnostics=diags)


def sq_envelope(f0: Integrand, A, mesh_schedule=DEFAULT_MESH_SCHEDULE, x0=(0.0, 0.0),
                solver: SolverParams | None = None, warm_start: bool = True) -> DensityEstimate:
    """Discrete quasiconvex-envelope values at A across a mesh schedule.

    Competitors are constrained through the full gradient; integrands with
    the symOnly flag see only its symmetric part, which realizes the
    symmetric quasiconvexification. Dyadic refinements warm-start from the
    prolonged coarse minimizer, so the reported sequence is non-increasing
    up to line-search noise.
    """
    if not f0.v_independent:
        raise ValueError("sq_envelope requires a v-independent integrand")
    A = np.asarray(A, dtype=float).reshape(2, 2)
    solver = solver or SolverParams(multistarts=8)
    samples = []
    diags = {}
    prev: GridDisplacement | None = None
    for mesh in mesh_schedule:
        spec = CellSpec(boundary=AffineData(A, np.zeros(2)), mesh=int(mesh),
                        solver=solver, freeze_x=np.asarray(x0, dtype=float))
        extra = []
        if warm_start and prev is not None and mesh % prev.grid.mesh == 0:
            factor = mesh // prev.grid.mesh
            if factor > 1:
                extra.append(prolong(prev, factor).values)
            elif factor == 1:
                extra.append(prev.values)
        sol = solve_ld(spec, f0, extra_starts=extra)
        samples.append((int(mesh), sol.value))
        diags[int(mesh)] = sol.diagnostics
        prev = sol.argmin
    return DensityEstimate.from_samples(samples, diagnostics=diags)


def jump_density(f0, x0, v_minus, v_plus, nu, eps_schedule=DEFAULT_EPS_SCHEDULE,
                 mesh: int = 32, solver: SolverParams | None = None,
                 variant: str = "eps") -> DensityEstimate:
    """Jump cell values on the oriented unit cube.

    f0 may be a bulk Integrand (conforming solver, the eps-scaled problem
    eps f0(x0, w, e(w)/eps)) or a pair (f1, g1) for the bulk-plus-surface
    solver. variant='bis' substitutes the exact recession density and
    solves the eps-free problem once.
    """
    nu = np.asarray(nu, dtype=float).reshape(2)
    v_minus = np.asarray(v_minus, dtype=float).reshape(2)
    v_plus = np.asarray(v_plus, dtype=float).reshape(2)
    if np.allclose(v_minus, v_plus):
        raise ValueError("v_plus must differ from v_minus")
    x0 = np.asarray(x0, dtype=float).reshape(2)
    solver = solver or SolverParams()
    data = JumpData(v_minus=v_minus, v_plus=v_plus, nu=nu)
    frame = frame_for_normal(nu)
    sbd_pair = isinstance(f0, tuple)
    if variant == "bis":
        if sbd_pair:
            raise ValueError("bis variant applies to the bulk-only form")
        if f0.recession_exact is None:
            raise ValueError(f"integrand {f0.name} exposes no exact recession")
        spec = CellSpec(boundary=data, mesh=mesh, solver=solver, frame=frame, freeze_x=x0)
        sol = solve_ld(spec, f0.recession_exact)
        return DensityEstimate.from_samples([(0.0, sol.value)],
                                            diagnostics={"bis": sol.diagnostics})
    samples = []
    diags = {}
    for eps in eps_schedule:
        spec = CellSpec(boundary=data, mesh=mesh, solver=solver, frame=frame, freeze_x=x0)
        if sbd_pair:
            f1, g1 = f0
            sol = solve_sbd(spec, _with_jump_scaling(_with_v_offset(f1, np.zeros(2), eps), eps), g1)
            samples.append((float(eps), sol.value))
        else:
            sol = solve_ld(spec, _with_jump_scaling(f0, float(eps)))
            samples.append((float(eps), sol.value))
        diags[float(eps)] = sol.diagnostics
    return DensityEstimate.from_samples(samples, diagnostics=diags)


def recession(f_eval, x0, v, A, t_schedule=DEFAULT_T_SCHEDULE) -> DensityEstimate:
    """Secant slopes (f(x0, v, t A) - f(x0, v, 0)) / t along increasing t."""
    ts = [float(t) for t in t_schedule]
    if any(t < 1.0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t schedule must be increasing and >= 1")
    A = np.asarray(A, dtype=float).reshape(2, 2)
    f0 = float(f_eval(x0, v, np.zeros((2, 2))))
    samples = []
    for t in ts:
        ft = float(f_eval(x0, v, t * A))
        if not np.isfinite(ft):
            raise ValueError(f"non-finite value at t={t}")
        samples.append((t, (ft - f0) / t))
    return DensityEstimate.from_samples(samples)


def integrand_evaluator(f: Integrand):
    """Adapt a corpus Integrand to the pointwise (x0, v, A) -> float shape."""

    def ev(x0, v, A):
        X = np.asarray(x0, dtype=float).reshape(1, 2)
        V = np.asarray(v, dtype=float).reshape(1, 2)
        Am = np.asarray(A, dtype=float).reshape(1, 2, 2)
        return float(f.raw(X, V, Am)[0])

    return ev


def check_symmetric_quasiconvexity(f: Integrand, x0, v, A, trials: int = 100,
                                   seed: int = 0, grid_n: int = 64,
                                   max_mode: int = 2) -> dict:
    """Search for a quasiconvexity violation with random unit-periodic
    trigonometric test fields.

    Returns the worst (most negative) deficit mean of f(x0, v, A + grad
    phi) minus f(x0, v, A) over the period; a nonnegative worst deficit
    certifies only that no violation was found.
    """
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=float).reshape(2)
    v = np.asarray(v, dtype=float).reshape(2)
    A = np.asarray(A, dtype=float).reshape(2, 2)
    ys = (np.arange(grid_n) + 0.5) / grid_n
    Y1, Y2 = np.meshgrid(ys, ys, indexing="ij")
    Y = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
    modes = [(k1, k2) for k1 in range(-max_mode, max_mode + 1)
             for k2 in range(-max_mode, max_mode + 1) if (k1, k2) != (0, 0)]
    X = np.broadcast_to(x0, Y.shape)
    V = np.broadcast_to(v, Y.shape)
    base = float(f.raw(x0.reshape(1, 2), v.reshape(1, 2), A.reshape(1, 2, 2))[0])
    worst = np.inf
    deficits = []
    for _ in range(trials):
        G = np.zeros((len(Y), 2, 2))
        for k in modes:
            a = rng.normal(scale=0.5, size=2)
            b = rng.normal(scale=0.5, size=2)
            phase = 2.0 * np.pi * (Y @ np.asarray(k, dtype=float))
            cs, sn = np.cos(phase), np.sin(phase)
            kv = 2.0 * np.pi * np.asarray(k, dtype=float)
            grad_scalar = -a[:, None] * sn[None, :] + b[:, None] * cs[None, :]  # (comp, m)
            G += np.einsum("im,j->mij", grad_scalar, kv)
        vals = f.raw(X, V, A[None, :, :] + G)
        deficit = float(vals.mean() - base)
        deficits.append(deficit)
        worst = min(worst, deficit)
    return {"worst_deficit": worst, "deficits": deficits, "trials": trials,
            "violation_found": worst < -1e-8}
