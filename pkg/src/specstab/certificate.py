"""Stability certificates: construction, verification, search, and export.

A certificate is a tuple (P, alpha, beta, gamma, eps, N) whose sign
conditions prove closed-loop decay at rate delta:

    Theta1 = [[F'P + PF + 2 delta P + alpha gamma G, P Lcal],
              [Lcal' P,                              -beta  ]]  <= 0,
    Theta2 <= 0, and (left-flux measurement only) Theta3 >= 0,

where Theta2/Theta3 couple the finite design to the spectral tail through
the measurement tail constant.  P is constructed from the shifted Lyapunov
equation F'P + PF + 2 delta P = -I; full P freedom is delegated to the SDPA
export for external solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoFeasibleN, NotHurwitzShifted, OrderTooSmall
from .homogenize import BOUNDED, NEUMANN_AT_0, ReducedPlant, reduce
from .sdpa import SdpaProblem
from .sturm_liouville import Spectrum
from .synthesis import ClosedLoopMatrices, assemble_closed_loop, design_gains

#: absolute feasibility tolerance, scaled by each quantity's magnitude
_FEAS_TOL = 1e-9

_DEFAULT_ALPHA_GRID = (1.1, 2.0, 10.0)


@dataclass(frozen=True)
class CertificateQuery:
    """Search policy for (beta, gamma) at fixed alpha (and eps).

    The grid is logarithmic over grid_range with points_per_decade_triple
    points per three decades, seeded at the proof scalings; the best cell is
    then refined by coordinate bisection.
    """

    alpha: float
    eps: float = 0.125
    grid_range: tuple[float, float] = (1e-6, 1e6)
    points_per_decade_triple: int = 13
    refine_steps: int = 60

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not 0.0 < self.eps <= 0.5:
            raise ValueError(f"eps must lie in (0, 1/2], got {self.eps}")

    def grid(self) -> np.ndarray:
        lo, hi = math.log10(self.grid_range[0]), math.log10(self.grid_range[1])
        decades = hi - lo
        n = int(round(decades / 3.0 * (self.points_per_decade_triple - 1))) + 1
        return np.logspace(lo, hi, n)


@dataclass(frozen=True)
class Certificate:
    """Verified (or best-effort) certificate data with its margins."""

    P: np.ndarray
    alpha: float
    beta: float
    gamma: float
    eps: float
    theta1_max_eig: float
    theta2: float
    theta3: float
    p_min_eig: float
    feasible: bool
    N: int
    N0: int

    def __post_init__(self):
        self.P.setflags(write=False)

    def to_dict(self) -> dict:
        return {
            "P": [[float(v) for v in row] for row in self.P],
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "eps": self.eps, "theta1_max_eig": self.theta1_max_eig,
            "theta2": self.theta2,
            "theta3": None if math.isinf(self.theta3) else self.theta3,
            "p_min_eig": self.p_min_eig, "feasible": self.feasible,
            "N": self.N, "N0": self.N0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(
            P=np.array(d["P"], dtype=float),
            alpha=float(d["alpha"]), beta=float(d["beta"]), gamma=float(d["gamma"]),
            eps=float(d["eps"]), theta1_max_eig=float(d["theta1_max_eig"]),
            theta2=float(d["theta2"]),
            theta3=math.inf if d["theta3"] is None else float(d["theta3"]),
            p_min_eig=float(d["p_min_eig"]), feasible=bool(d["feasible"]),
            N=int(d["N"]), N0=int(d["N0"]),
        )


def lyapunov_solve(F: np.ndarray, delta: float) -> np.ndarray:
    """Unique P > 0 with F'P + PF + 2 delta P = -I.

    Solved as the dense vectorized linear system in the entries of P;
    requires the spectral abscissa of F + delta I to be negative.  The
    residual is checked against 1e-9 before returning.
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    if F.shape != (n, n):
        raise DimensionMismatch(f"F must be square, got {F.shape}")
    A = F + delta * np.eye(n)
    abscissa = float(np.max(np.linalg.eigvals(A).real))
    if abscissa >= 0:
        raise NotHurwitzShifted(
            f"spectral abscissa of F + delta*I is {abscissa:.3e} >= 0")
    eye = np.eye(n)
    M = np.kron(eye, A.T) + np.kron(A.T, eye)
    P = np.linalg.solve(M, -eye.reshape(-1)).reshape(n, n)
    P = 0.5 * (P + P.T)
    residual = float(np.max(np.abs(F.T @ P + P @ F + 2 * delta * P + eye)))
    if residual > 1e-9:
        raise NotHurwitzShifted(
            f"Lyapunov residual {residual:.3e} exceeds 1e-9 (ill-conditioned solve)")
    return P


def _tail_factor(model: ClosedLoopMatrices, reduced: ReducedPlant, eps: float) -> float:
    """Coefficient of beta in Theta2 for the relevant measurement kind."""
    lam_next = float(reduced.spectrum.lambdas[model.N])
    kind = reduced.plant.measurement.kind
    if kind == BOUNDED:
        return reduced.tail_constant / lam_next
    if kind == NEUMANN_AT_0:
        if abs(eps - reduced.tail_eps) > 1e-12:
            raise ValueError(
                f"eps = {eps} does not match the reduced plant's tail constant "
                f"(built with eps = {reduced.tail_eps})")
        return reduced.tail_constant * lam_next ** (0.5 + eps)
    return reduced.tail_constant


def _theta_scalars(model: ClosedLoopMatrices, reduced: ReducedPlant,
                   alpha: float, beta: float, gamma: float, eps: float) -> tuple[float, float]:
    lam_next = float(reduced.spectrum.lambdas[model.N])
    theta2 = 2.0 * gamma * (-(1.0 - 1.0 / alpha) * lam_next + reduced.q_c + reduced.delta) \
        + beta * _tail_factor(model, reduced, eps)
    if reduced.plant.measurement.kind == NEUMANN_AT_0:
        theta3 = 2.0 * gamma * (1.0 - 1.0 / alpha) \
            - beta * reduced.tail_constant / lam_next ** (0.5 - eps)
    else:
        theta3 = math.inf
    return theta2, theta3


def _theta1(model: ClosedLoopMatrices, P: np.ndarray, alpha: float,
            beta: float, gamma: float, delta: float) -> np.ndarray:
    n = model.dim
    T = np.empty((n + 1, n + 1))
    T[:n, :n] = model.F.T @ P + P @ model.F + 2.0 * delta * P + alpha * gamma * model.G
    PL = P @ model.Lcal
    T[:n, n] = PL
    T[n, :n] = PL
    T[n, n] = -beta
    return T


def verify_certificate(model: ClosedLoopMatrices, reduced: ReducedPlant,
                       P: np.ndarray, alpha: float, beta: float, gamma: float,
                       eps: float = 0.125) -> Certificate:
    """Evaluate all certificate margins for the given data; never mutates inputs.

    Feasibility is the conjunction of P > 0, max eig Theta1 <= 0, Theta2 <= 0,
    and Theta3 >= 0 where applicable, each within 1e-9 scaled by the
    quantity's magnitude.
    """
    P = np.asarray(P, dtype=float)
    n = model.dim
    if P.shape != (n, n):
        raise DimensionMismatch(f"P must be {n}x{n} for N = {model.N}, got {P.shape}")
    if reduced.n_coef < model.N or reduced.spectrum.n_modes < model.N + 1:
        raise DimensionMismatch("reduced plant does not cover the model order")
    T1 = _theta1(model, P, alpha, beta, gamma, reduced.delta)
    T1 = 0.5 * (T1 + T1.T)
    theta1_max = float(np.linalg.eigvalsh(T1)[-1])
    theta2, theta3 = _theta_scalars(model, reduced, alpha, beta, gamma, eps)
    p_min = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
    tol1 = _FEAS_TOL * max(1.0, float(np.max(np.abs(T1))))
    lam_next = float(reduced.spectrum.lambdas[model.N])
    scale2 = max(1.0, 2 * gamma * (1 + lam_next), beta * _tail_factor(model, reduced, eps))
    tol2 = _FEAS_TOL * scale2
    tolP = _FEAS_TOL * max(1.0, float(np.max(np.abs(P))))
    feasible = (p_min > tolP) and (theta1_max <= tol1) and (theta2 <= tol2)
    if math.isfinite(theta3):
        tol3 = _FEAS_TOL * max(1.0, 2 * gamma, beta * reduced.tail_constant)
        feasible = feasible and (theta3 >= -tol3)
    return Certificate(P=P.copy(), alpha=alpha, beta=beta, gamma=gamma, eps=eps,
                       theta1_max_eig=theta1_max, theta2=theta2, theta3=theta3,
                       p_min_eig=p_min, feasible=bool(feasible),
                       N=model.N, N0=model.N0)


def _scaled_margin(cert: Certificate, model: ClosedLoopMatrices) -> float:
    """Signed worst margin (negative = feasible) used to rank search points."""
    s1 = max(1.0, float(np.max(np.abs(cert.P))) * float(np.max(np.abs(model.F))))
    parts = [cert.theta1_max_eig / s1,
             cert.theta2 / max(1.0, abs(cert.theta2) + 1.0)]
    if math.isfinite(cert.theta3):
        parts.append(-cert.theta3 / max(1.0, abs(cert.theta3) + 1.0))
    return max(parts)


def _proof_seeds(kind: str, N: int) -> tuple[float, float]:
    """(beta, gamma) scalings used in the feasibility proofs."""
    if kind == BOUNDED:
        return float(N), N ** -0.5
    if kind == NEUMANN_AT_0:
        return N ** 0.125, N ** -0.1875
    return math.sqrt(N), 1.0 / N


def search_certificate(model: ClosedLoopMatrices, reduced: ReducedPlant,
                       query: CertificateQuery) -> Certificate:
    """Constructive certificate search at fixed alpha.

    P is fixed from the shifted Lyapunov equation; (beta, gamma) run over
    the proof-scaling seed and a deterministic log grid, with coordinate
    bisection refinement of the best cell.  Returns the first verified
    certificate, else the best-margin infeasible one.
    """
    delta = reduced.delta
    P = lyapunov_solve(model.F, delta)
    kind = reduced.plant.measurement.kind

    def evaluate(beta: float, gamma: float) -> Certificate:
        return verify_certificate(model, reduced, P, query.alpha, beta, gamma, query.eps)

    candidates = [_proof_seeds(kind, model.N)]
    grid = query.grid()
    best: Certificate | None = None
    best_margin = math.inf
    for beta, gamma in candidates + [(b, g) for b in grid for g in grid]:
        cert = evaluate(beta, gamma)
        if cert.feasible:
            return cert
        m = _scaled_margin(cert, model)
        if m < best_margin:
            best_margin, best = m, cert
    # coordinate bisection around the best grid cell, in log10 space
    lb, lg = math.log10(best.beta), math.log10(best.gamma)
    step_b = step_g = 3.0 / (query.points_per_decade_triple - 1)
    for _ in range(query.refine_steps):
        moved = False
        for db, dg in ((step_b, 0.0), (-step_b, 0.0), (0.0, step_g), (0.0, -step_g)):
            cert = evaluate(10.0 ** (lb + db), 10.0 ** (lg + dg))
            if cert.feasible:
                return cert
            m = _scaled_margin(cert, model)
            if m < best_margin:
                best_margin, best = m, cert
                lb, lg = lb + db, lg + dg
                moved = True
                break
        if not moved:
            step_b *= 0.5
            step_g *= 0.5
            if max(step_b, step_g) < 1e-4:
                break
    return best


def minimal_N(plant, spectrum: Spectrum, gains_rule=None, N_max: int = 10,
              alpha_grid=_DEFAULT_ALPHA_GRID, eps: float = 0.125):
    """Smallest N <= N_max with a verified certificate over the alpha grid.

    Every N from N0+1 up is tested (monotonicity in N is not assumed).
    gains_rule maps a ReducedPlant to a GainSet; defaults to the package
    pole rule.  Raises NoFeasibleN carrying per-N best margins.
    """
    if gains_rule is None:
        gains_rule = design_gains
    margins: dict[int, dict] = {}
    reduced0 = reduce(plant, spectrum, min(N_max + 1, spectrum.n_modes - 1), eps=eps)
    if N_max < reduced0.N0 + 1:
        raise OrderTooSmall(f"N_max = {N_max} < N0+1 = {reduced0.N0 + 1}")
    for N in range(reduced0.N0 + 1, N_max + 1):
        reduced = reduce(plant, spectrum, N, eps=eps)
        gains = gains_rule(reduced)
        model = assemble_closed_loop(reduced, gains, N)
        best_for_N = None
        for alpha in alpha_grid:
            cert = search_certificate(model, reduced, CertificateQuery(alpha=alpha, eps=eps))
            if cert.feasible:
                return N, cert
            m = _scaled_margin(cert, model)
            if best_for_N is None or m < best_for_N[0]:
                best_for_N = (m, alpha, cert)
        margins[N] = {
            "margin": best_for_N[0], "alpha": best_for_N[1],
            "theta1_max_eig": best_for_N[2].theta1_max_eig,
            "theta2": best_for_N[2].theta2,
            "theta3": None if math.isinf(best_for_N[2].theta3) else best_for_N[2].theta3,
        }
    raise NoFeasibleN(
        f"no verified certificate for N <= {N_max} (best margins per N recorded)",
        margins)


def lyapunov_norm_sweep(plant, spectrum: Spectrum, gains_rule=None, N_list=None) -> np.ndarray:
    """Spectral norms of the constructed P^N over a list of orders N.

    With fixed gains the coupling blocks have N-independent norm bounds, so
    the sequence should stay bounded; this sweep records it empirically.
    """
    if gains_rule is None:
        gains_rule = design_gains
    if N_list is None:
        N_list = range(2, 13)
    norms = []
    for N in N_list:
        reduced = reduce(plant, spectrum, N)
        gains = gains_rule(reduced)
        model = assemble_closed_loop(reduced, gains, N)
        P = lyapunov_solve(model.F, reduced.delta)
        norms.append(float(np.linalg.norm(P, 2)))
    return np.array(norms)


def export_sdpa(model: ClosedLoopMatrices, reduced: ReducedPlant, alpha: float,
                eps: float, path) -> None:
    """Write the fixed-alpha feasibility SDP in SDPA sparse format.

    Decision variables: the (2N+1)(2N+2)/2 upper-triangle entries of P
    (row-major), then beta, then gamma.  Blocks: -Theta1 >= 0, P - mu I >= 0,
    beta - mu >= 0, gamma - mu >= 0, -Theta2 >= 0, and Theta3 >= 0 for the
    left-flux measurement; every block is affine in the variables because
    alpha and eps are fixed.
    """
    if model.N < model.N0 + 1:
        raise OrderTooSmall(f"N must be >= N0+1 = {model.N0 + 1}, got {model.N}")
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    n = model.dim
    mu = 1e-6
    delta = reduced.delta
    kind = reduced.plant.measurement.kind
    lam_next = float(reduced.spectrum.lambdas[model.N])
    n_pvars = n * (n + 1) // 2
    m_dim = n_pvars + 2
    k_beta, k_gamma = n_pvars + 1, n_pvars + 2
    sizes = [n + 1, n, -1, -1, -1]
    neumann = kind == NEUMANN_AT_0
    if neumann:
        sizes.append(-1)
    prob = SdpaProblem(m_dim=m_dim, block_sizes=sizes)

    F, G, Lcal = model.F, model.G, model.Lcal
    k = 0
    for r in range(n):
        for s in range(r, n):
            k += 1
            # basis matrix of the p_rs entry: Phi = e_r e_s' (+ e_s e_r' if r != s)
            Phi = np.zeros((n, n))
            Phi[r, s] += 1.0
            Phi[s, r] += 1.0 if r != s else 0.0
            coef = np.zeros((n + 1, n + 1))
            coef[:n, :n] = -(F.T @ Phi + Phi @ F + 2.0 * delta * Phi)
            border = -(Phi @ Lcal)
            coef[:n, n] = border
            coef[n, :n] = border
            for i, j in zip(*np.triu_indices(n + 1)):
                prob.add(k, 1, int(i) + 1, int(j) + 1, float(coef[i, j]))
            # block 2: P - mu I
            prob.add(k, 2, r + 1, s + 1, 1.0)
    # F0 for block 2: mu I
    for r in range(n):
        prob.add(0, 2, r + 1, r + 1, mu)
    # gamma in block 1: -alpha G
    for r in range(n):
        for s in range(r, n):
            prob.add(k_gamma, 1, r + 1, s + 1, -alpha * G[r, s])
    # beta: corner of block 1, and block 3 positivity
    prob.add(k_beta, 1, n + 1, n + 1, 1.0)
    prob.add(k_beta, 3, 1, 1, 1.0)
    prob.add(0, 3, 1, 1, mu)
    prob.add(k_gamma, 4, 1, 1, 1.0)
    prob.add(0, 4, 1, 1, mu)
    # block 5: -Theta2 >= 0
    prob.add(k_gamma, 5, 1, 1, 2.0 * ((1.0 - 1.0 / alpha) * lam_next - reduced.q_c - delta))
    prob.add(k_beta, 5, 1, 1, -_tail_factor(model, reduced, eps))
    if neumann:
        prob.add(k_gamma, 6, 1, 1, 2.0 * (1.0 - 1.0 / alpha))
        prob.add(k_beta, 6, 1, 1, -reduced.tail_constant / lam_next ** (0.5 - eps))
    prob.write(path)
