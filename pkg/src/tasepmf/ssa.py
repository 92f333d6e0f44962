"""Gillespie (direct method) simulation of TASEP as a Monte Carlo oracle."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels
from .errors import InvalidInputError
from .lattice import LatticeParams

UNIFORM_BLOCK = 1 << 16


@dataclass(frozen=True)
class SsaConfig:
    params: LatticeParams
    n_samples: int = 16
    t_burn: float = 100.0
    t_measure: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) < 1:
            raise InvalidInputError("n_samples must be >= 1")
        if self.t_burn < 0 or self.t_measure < 0:
            raise InvalidInputError("t_burn and t_measure must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError("seed must fit in 64 bits")


@dataclass
class SsaEstimate:
    """Replica means and standard errors (sample std / sqrt(replicas)).

    ``pairs[d, b]`` estimates the two-point function on sites ``(d+1, d)``
    with pattern ``b = 2*c[d+1] + c[d]``.
    """

    density: np.ndarray
    density_stderr: np.ndarray
    pairs: np.ndarray
    pairs_stderr: np.ndarray
    flux: float
    flux_stderr: float
    # exit rate minus beta * density[0], paired within each replica
    flux_balance: float
    flux_balance_stderr: float
    n_samples: int
    events: int

    @property
    def n(self) -> int:
        return self.density.size


@dataclass
class _Replica:
    density: np.ndarray
    pairs: np.ndarray
    exits: int
    events: int


def _run_replica(params: LatticeParams, t_burn, t_measure, seed_seq, kernels):
    rng = np.random.default_rng(seed_seq)
    n = params.n
    config = np.zeros(n, dtype=np.uint8)
    h = np.ascontiguousarray(params.hop_array, dtype=float)
    if h.size == 0:
        h = np.zeros(1)
    occ = np.zeros(n)
    pair = np.zeros(max(4 * (n - 1), 1))
    scratch_occ = np.zeros_like(occ)
    scratch_pair = np.zeros_like(pair)
    events = 0

    def advance(t, t_stop, occ_acc, pair_acc):
        nonlocal events
        exits = 0
        while t < t_stop:
            block = rng.random(UNIFORM_BLOCK)
            t, used, ex = kernels.ssa_advance(config, t, t_stop, params.alpha, params.beta,
                                              h, block, occ_acc, pair_acc)
            exits += ex
            events += used // 2
        return t, exits

    t, _ = advance(0.0, t_burn, scratch_occ, scratch_pair)
    _, exits = advance(t, t_burn + t_measure, occ, pair)
    window = t_measure if t_measure > 0 else 1.0
    return _Replica(occ / window, pair[:4 * (n - 1)].reshape(n - 1, 4) / window, exits, events)


def _mean_se(samples):
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])


def simulate(config: SsaConfig, backend: str | None = None, workers: int | None = None) -> SsaEstimate:
    """Time-averaged estimates over ``[t_burn, t_burn + t_measure]`` from independent replicas.

    Replica ``k`` draws from ``SeedSequence(seed).spawn(...)[k]``, so results
    do not depend on ``workers`` (default: a thread per core; the compiled
    kernel releases the GIL).  Every replica starts from the empty lattice.
    """
    kernels = get_kernels(backend)
    seqs = np.random.SeedSequence(int(config.seed)).spawn(int(config.n_samples))

    def job(seq):
        return _run_replica(config.params, config.t_burn, config.t_measure, seq, kernels)

    if workers is None or workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(job, seqs))
    else:
        reps = [job(s) for s in seqs]
    density, density_se = _mean_se([r.density for r in reps])
    pairs, pairs_se = _mean_se([r.pairs for r in reps])
    window = config.t_measure if config.t_measure > 0 else 1.0
    flux, flux_se = _mean_se([r.exits / window for r in reps])
    beta = config.params.beta
    balance, balance_se = _mean_se([r.exits / window - beta * r.density[0] for r in reps])
    return SsaEstimate(density, density_se, pairs, pairs_se, float(flux), float(flux_se),
                       float(balance), float(balance_se),
                       int(config.n_samples), int(sum(r.events for r in reps)))
