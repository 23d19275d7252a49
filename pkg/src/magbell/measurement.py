"""Measurement-induced Kraus operators and the evolve-and-project protocol.

Finding the ancilla qutrit in its ground state after a joint evolution
applies a diagonal, population-reshaping Kraus operator to the two magnon
modes.  Repeating the cycle suppresses every Fock component whose
coefficient magnitude is below one and distills the even-parity Bell pair
{|0,0>, |N,N>}.  The module provides the analytic coefficients, their
numeric counterpart from the effective Hamiltonian, the repeated protocol
with optional magnon decay, stabilization runs, and the coupling-ratio
fidelity analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegratorConfig, LindbladSpec, integrate_master, propagator
from .hilbert import (
    DimensionError,
    HilbertSpace,
    Operator,
    QuantumState,
    annihilation,
    bell_state,
    embed,
    fidelity,
)
from .model import LEVEL_G, EffectiveParams, build_jc_effective

DEFAULT_STEPS_PER_ROUND = 2000
NULL_OUTCOME_FLOOR = 1e-12
SLOW_DAMPING_MARGIN = 1e-6
CONVERGED_EVEN_POPULATION = 1.0 - 1e-6


class NullOutcomeError(RuntimeError):
    """Ground-state projection hit a (numerically) zero-probability branch."""


class TargetOverlapError(ValueError):
    """Initial state has no population on the target even-parity pair."""


def rabi_frequency(n: int, m: int, eff: EffectiveParams, delta: float) -> float:
    """Oscillation frequency of the (n, m) block: sqrt(Ge^2 n + Gf^2 m + D^2/4)."""
    if n < 0 or m < 0:
        raise ValueError("occupation numbers must be nonnegative")
    return math.sqrt(eff.G_e**2 * n + eff.G_f**2 * m + 0.25 * delta**2)


def kraus_coefficient(n: int, m: int, eff: EffectiveParams, delta: float, tau: float) -> complex:
    """Ground-state return coefficient alpha_nm(tau) of the (n, m) Fock pair.

    alpha_nm = cos(O tau) + i (D / 2 O) sin(O tau) with O = rabi_frequency.
    The (0, 0) pair is decoupled, so its coefficient is returned analytically
    as exp(i D tau / 2): unit magnitude for every tau and detuning, with no
    0/0 ambiguity at D = 0.
    """
    if n == 0 and m == 0:
        return complex(np.exp(0.5j * delta * tau))
    omega = rabi_frequency(n, m, eff, delta)
    if omega == 0.0:
        return 1.0 + 0.0j
    return complex(
        math.cos(omega * tau) + 1j * (delta / (2.0 * omega)) * math.sin(omega * tau)
    )


def interval_for_target(N: int, eff: EffectiveParams, delta: float) -> float:
    """Measurement interval 2 pi / Omega_NN that keeps |alpha_NN| = 1."""
    if N < 1:
        raise ValueError(f"target excitation must be >= 1, got {N}")
    return 2.0 * math.pi / rabi_frequency(N, N, eff, delta)


def analytic_kraus(space: HilbertSpace, eff: EffectiveParams, delta: float, tau: float) -> Operator:
    """Diagonal ground-outcome Kraus operator on a two-mode magnon space.

    Entry (n, m) is exp(-i D tau / 2) alpha_nm(tau); the first subsystem
    couples through G_e, the second through G_f.
    """
    if len(space.subsystems) != 2:
        raise DimensionError("analytic_kraus needs a two-subsystem magnon space")
    dn, dm = space.dims
    n, m = np.meshgrid(np.arange(dn), np.arange(dm), indexing="ij")
    omega = np.sqrt(eff.G_e**2 * n + eff.G_f**2 * m + 0.25 * delta**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(omega > 0.0, 0.5 * delta / np.where(omega > 0.0, omega, 1.0), 0.0)
    alpha = np.cos(omega * tau) + 1j * ratio * np.sin(omega * tau)
    alpha = np.where(omega == 0.0, 1.0 + 0.0j, alpha)
    alpha[0, 0] = np.exp(0.5j * delta * tau)
    diag = np.exp(-0.5j * delta * tau) * alpha.ravel()
    return Operator(space, np.diag(diag))


def numeric_kraus(H_eff: Operator, tau: float) -> Operator:
    """Ground-outcome Kraus operator <g| exp(-i H_eff tau) |g>.

    H_eff must live on a space whose first subsystem is the dim-3 qutrit;
    the result acts on the remaining magnon space.
    """
    space = H_eff.space
    if space.labels[0] != "atom" or space.dims[0] != 3:
        raise DimensionError("numeric_kraus expects the qutrit first, with dimension 3")
    u = propagator(H_eff, tau).matrix
    block = space.total_dim // 3
    lo = LEVEL_G * block
    v = u[lo:lo + block, lo:lo + block]
    return Operator(space.subspace(space.labels[1:]), v)


def apply_projection(rho_tot: QuantumState) -> tuple[QuantumState, float]:
    """Project the qutrit onto |g>, renormalize, and drop the qutrit factor.

    Returns the conditional magnon state and the pre-normalization outcome
    probability.  Raises NullOutcomeError below the probability floor.
    """
    space = rho_tot.space
    if space.labels[0] != "atom" or space.dims[0] != 3:
        raise DimensionError("apply_projection expects the qutrit first, with dimension 3")
    block = space.total_dim // 3
    lo = LEVEL_G * block
    magnon_space = space.subspace(space.labels[1:])
    if rho_tot.kind == "pure":
        branch = rho_tot.data[lo:lo + block]
        prob = float(np.linalg.norm(branch) ** 2)
        if prob < NULL_OUTCOME_FLOOR:
            raise NullOutcomeError(f"ground-state outcome probability {prob:.3e} below floor")
        return QuantumState(magnon_space, "pure", branch / math.sqrt(prob)), prob
    sub = rho_tot.data[lo:lo + block, lo:lo + block]
    prob = float(np.real(np.trace(sub)))
    if prob < NULL_OUTCOME_FLOOR:
        raise NullOutcomeError(f"ground-state outcome probability {prob:.3e} below floor")
    return QuantumState(magnon_space, "mixed", sub / prob), prob


@dataclass(frozen=True)
class ProtocolConfig:
    """Settings for the repeated evolve-and-project protocol.

    tau is the per-round free-evolution interval (already halved in
    half-interval mode).  decoherence, when set, is the (gamma_n, gamma_m)
    pair of magnon decay rates and switches each round to master-equation
    evolution.
    """

    eff: EffectiveParams
    tau: float
    rounds: int
    target_N: int = 1
    decoherence: tuple[float, float] | None = None
    interval_mode: str = "full"
    steps_per_round: int = DEFAULT_STEPS_PER_ROUND

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.target_N < 1:
            raise ValueError(f"target_N must be >= 1, got {self.target_N}")
        if self.interval_mode not in ("full", "half"):
            raise ValueError(f"interval_mode must be 'full' or 'half', got {self.interval_mode!r}")
        if self.decoherence is not None:
            gn, gm = self.decoherence
            if gn < 0 or gm < 0:
                raise ValueError("decay rates must be nonnegative")
            object.__setattr__(self, "decoherence", (float(gn), float(gm)))
        if self.steps_per_round < 1:
            raise ValueError("steps_per_round must be >= 1")

    @classmethod
    def for_target(
        cls,
        eff: EffectiveParams,
        rounds: int,
        target_N: int = 1,
        interval_mode: str = "full",
        decoherence: tuple[float, float] | None = None,
        delta: float | None = None,
        steps_per_round: int = DEFAULT_STEPS_PER_ROUND,
    ) -> "ProtocolConfig":
        """Config with tau picked so the (N, N) pair is held exactly."""
        if delta is None:
            delta = eff.common_detuning()
        tau = interval_for_target(target_N, eff, delta)
        if interval_mode == "half":
            tau *= 0.5
        return cls(eff=eff, tau=tau, rounds=rounds, target_N=target_N,
                   decoherence=decoherence, interval_mode=interval_mode,
                   steps_per_round=steps_per_round)


@dataclass(frozen=True, eq=False)
class ProtocolRecord:
    """Per-round log of a protocol run (index 0 is the initial state).

    success_probability is cumulative; even_population is the normalized
    population on {|0,0>, |N,N>}.  slow_states lists non-target Fock pairs
    whose per-round damping factor exceeds 1 - 1e-6 (distillation will stall
    on them); converged_round is the first round where the even-pair
    population passed 1 - 1e-6, or None.
    """

    fidelity_plus: np.ndarray
    fidelity_minus: np.ndarray
    success_probability: np.ndarray
    even_population: np.ndarray
    final_state: QuantumState
    slow_states: tuple[tuple[int, int], ...]
    converged_round: int | None


def _even_pair_population(state: QuantumState, N: int) -> float:
    pops = state.populations()
    space = state.space
    return float(pops[space.index((0, 0))] + pops[space.index((N, N))])


def run_protocol(initial: QuantumState, cfg: ProtocolConfig) -> ProtocolRecord:
    """Run M rounds of (attach ground-state qutrit, evolve tau, project).

    Closed runs apply the precomputed ground-outcome Kraus operator; with
    decoherence set, each round integrates the magnon-loss master equation
    on the joint space before projecting.
    """
    mag_space = initial.space
    if mag_space.labels != ("n", "m"):
        raise DimensionError(f"initial state must live on ('n', 'm'), got {mag_space.labels}")
    N = cfg.target_N
    if N >= min(mag_space.dims):
        raise DimensionError(f"target excitation {N} outside cutoffs {mag_space.dims}")
    target_plus = bell_state(mag_space, N, +1)
    target_minus = bell_state(mag_space, N, -1)
    if _even_pair_population(initial, N) <= NULL_OUTCOME_FLOOR:
        raise TargetOverlapError(
            f"initial population on {{|0,0>, |{N},{N}>}} is numerically zero"
        )

    jc_space = HilbertSpace((("atom", 3),) + mag_space.subsystems)
    h_eff = build_jc_effective(cfg.eff, jc_space)
    vg = numeric_kraus(h_eff, cfg.tau)

    damping = np.abs(np.diag(vg.matrix))
    slow = tuple(
        mag_space.occupations(k)
        for k in np.flatnonzero(damping > 1.0 - SLOW_DAMPING_MARGIN)
        if mag_space.occupations(k) not in ((0, 0), (N, N))
    )

    rounds = cfg.rounds
    f_plus = np.empty(rounds + 1)
    f_minus = np.empty(rounds + 1)
    p_cum = np.empty(rounds + 1)
    even_pop = np.empty(rounds + 1)

    state = initial
    cumulative = 1.0
    converged = None

    def log(k: int):
        nonlocal converged
        f_plus[k] = fidelity(state, target_plus)
        f_minus[k] = fidelity(state, target_minus)
        p_cum[k] = cumulative
        even_pop[k] = _even_pair_population(state, N)
        if converged is None and even_pop[k] >= CONVERGED_EVEN_POPULATION:
            converged = k

    log(0)

    if cfg.decoherence is None:
        v = vg.matrix
        for k in range(1, rounds + 1):
            if state.kind == "pure":
                branch = v @ state.data
                prob = float(np.linalg.norm(branch) ** 2)
                if prob < NULL_OUTCOME_FLOOR:
                    raise NullOutcomeError(f"round {k}: outcome probability {prob:.3e}")
                state = QuantumState(mag_space, "pure", branch / math.sqrt(prob))
            else:
                rho = v @ state.data @ v.conj().T
                prob = float(np.real(np.trace(rho)))
                if prob < NULL_OUTCOME_FLOOR:
                    raise NullOutcomeError(f"round {k}: outcome probability {prob:.3e}")
                state = QuantumState(mag_space, "mixed", rho / prob)
            cumulative *= prob
            log(k)
    else:
        gamma_n, gamma_m = cfg.decoherence
        collapse = (
            (embed(annihilation(jc_space.dim("n")), jc_space, "n"), gamma_n),
            (embed(annihilation(jc_space.dim("m")), jc_space, "m"), gamma_m),
        )
        spec = LindbladSpec(h_eff, collapse)
        icfg = IntegratorConfig(dt=cfg.tau / cfg.steps_per_round)
        ground = np.zeros((3, 3), dtype=complex)
        ground[LEVEL_G, LEVEL_G] = 1.0
        for k in range(1, rounds + 1):
            rho_tot = QuantumState(jc_space, "mixed", np.kron(ground, state.density()))
            rho_tot = integrate_master(rho_tot, spec, cfg.tau, icfg)
            state, prob = apply_projection(rho_tot)
            cumulative *= prob
            log(k)

    return ProtocolRecord(
        fidelity_plus=f_plus,
        fidelity_minus=f_minus,
        success_probability=p_cum,
        even_population=even_pop,
        final_state=state,
        slow_states=slow,
        converged_round=converged,
    )


def stabilize(bell: QuantumState, cfg: ProtocolConfig) -> tuple[np.ndarray, np.ndarray]:
    """Hold a Bell state against magnon loss by repeated projection.

    Returns (F_stab, F_free): the per-round fidelity under the
    evolve-and-project cycle, and the fidelity of a measurement-free
    master-equation run over the same horizon, both sampled at multiples of
    tau (index 0 is t = 0).
    """
    if cfg.decoherence is None:
        raise ValueError("stabilize requires decoherence rates in the config")
    record = run_protocol(bell, cfg)
    f_stab = record.fidelity_plus

    mag_space = bell.space
    jc_space = HilbertSpace((("atom", 3),) + mag_space.subsystems)
    h_eff = build_jc_effective(cfg.eff, jc_space)
    gamma_n, gamma_m = cfg.decoherence
    spec = LindbladSpec(h_eff, (
        (embed(annihilation(jc_space.dim("n")), jc_space, "n"), gamma_n),
        (embed(annihilation(jc_space.dim("m")), jc_space, "m"), gamma_m),
    ))
    icfg = IntegratorConfig(dt=cfg.tau / cfg.steps_per_round)

    target = bell_state(mag_space, cfg.target_N, +1)
    projector = np.kron(np.eye(3, dtype=complex), np.outer(target.data, target.data.conj()))
    ground = np.zeros((3, 3), dtype=complex)
    ground[LEVEL_G, LEVEL_G] = 1.0

    f_free = np.empty(cfg.rounds + 1)
    rho = QuantumState(jc_space, "mixed", np.kron(ground, bell.density()))
    f_free[0] = float(np.real(np.trace(rho.data @ projector)))
    for k in range(1, cfg.rounds + 1):
        rho = integrate_master(rho, spec, cfg.tau, icfg)
        f_free[k] = float(np.real(np.trace(rho.data @ projector)))
    return f_stab, f_free


def coupling_ratio_fidelity(xi: float, approximate: bool = False) -> float:
    """Single-round Bell fidelity versus the coupling ratio xi = G_f / G_e.

    Starting from equal single-excitation superpositions and measuring once
    at the interval holding the (1, 1) pair, F = 2 / (2 + a01^2 + a10^2).
    The approximate branch linearizes both coefficients around xi = 1.
    """
    if xi <= 0:
        raise ValueError(f"coupling ratio must be positive, got {xi}")
    if approximate:
        c = math.cos(math.sqrt(2.0) * math.pi)
        s = (math.pi / math.sqrt(2.0)) * math.sin(math.sqrt(2.0) * math.pi)
        a01 = c - s * (xi - 1.0)
        a10 = c + s * (xi - 1.0)
    else:
        root = math.sqrt(1.0 + xi * xi)
        a01 = math.cos(2.0 * math.pi * xi / root)
        a10 = math.cos(2.0 * math.pi / root)
    return 2.0 / (2.0 + a01 * a01 + a10 * a10)


def qubit_parity_reference(state: QuantumState) -> tuple[QuantumState, float]:
    """Reference even-parity projection |00><00| + |11><11| on two qubits."""
    if state.kind != "pure":
        raise ValueError("qubit parity reference expects a pure state")
    if state.space.dims != (2, 2):
        raise DimensionError(f"expected a two-qubit space, got dims {state.space.dims}")
    vec = np.zeros(4, dtype=complex)
    vec[state.space.index((0, 0))] = state.data[state.space.index((0, 0))]
    vec[state.space.index((1, 1))] = state.data[state.space.index((1, 1))]
    prob = float(np.linalg.norm(vec) ** 2)
    if prob < NULL_OUTCOME_FLOOR:
        raise NullOutcomeError(f"even-parity outcome probability {prob:.3e} below floor")
    return QuantumState(state.space, "pure", vec / math.sqrt(prob)), prob
