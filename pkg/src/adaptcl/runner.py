"""Experiment driver: AdaptCL and the BSP / ASP / SSP baselines on a simulated clock."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import env
from .aggregate import AggregationRule, aggregate, extract_submodel
from .config import ExperimentConfig
from .data import Dataset, make_blobs, partition_noniid
from .model import MLP, GlobalIndex, ModelShape, accuracy, init_mlp, sparse_train, steps_for
from .prune import (CIG_METHODS, build_order, compute_mask, mean_pairwise_similarity,
                    reconfigure, retention_ratio)
from .rate import RateHistory, RatePolicy, decide_rates

log = logging.getLogger(__name__)

RATE_BYTES = 4  # one float32 per worker per round


@dataclass
class RoundMetrics:
    round: int
    sim_time: float
    phi: list[float]
    H: float
    gamma: list[float]
    accuracy: float
    rates: list[float]
    similarity: float  # mean over worker pairs with identical pruning histories
    staleness: int = 0  # asynchronous policies only


@dataclass
class RunResult:
    config: ExperimentConfig
    rounds: list[RoundMetrics]
    model: MLP
    indexes: list[GlobalIndex]
    payload_bytes: int = 0
    overhead_bytes: int = 0  # global index + pruned rate
    worker_rounds: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def total_time(self) -> float:
        return self.rounds[-1].sim_time if self.rounds else 0.0

    @property
    def final_accuracy(self) -> float:
        return self.rounds[-1].accuracy

    @property
    def best(self) -> RoundMetrics:
        return max(self.rounds, key=lambda r: (r.accuracy, -r.sim_time))

    @property
    def asynchronous(self) -> bool:
        return self.config.policy in ("fedasync-s", "ssp-s")

    @property
    def reported(self) -> tuple[float, float]:
        """(accuracy, time) as reported in comparisons: best aggregation for
        asynchronous policies, the last round otherwise."""
        if self.asynchronous:
            return self.best.accuracy, self.best.sim_time
        return self.final_accuracy, self.total_time

    @property
    def mean_param_reduction(self) -> float:
        return 1.0 - float(np.mean([retention_ratio(i) for i in self.indexes]))

    def overhead_fraction(self) -> float:
        """Index + rate bytes per worker-round relative to the dense model size."""
        if not self.worker_rounds:
            return 0.0
        full = self.model.shape.param_bytes
        return self.overhead_bytes / self.worker_rounds / full


@dataclass
class _Setup:
    data: Dataset
    shards: list[np.ndarray]
    shape: ModelShape
    model: MLP
    profiles: list[env.WorkerProfile]


def setup(cfg: ExperimentConfig) -> _Setup:
    data = make_blobs(cfg.num_classes, cfg.samples, cfg.test_samples, cfg.feature_dim,
                      cfg.class_sep, cfg.seed)
    shards = partition_noniid(data.y_train, cfg.workers, cfg.noniid_s,
                              np.random.default_rng([cfg.seed, 0x5A4D]))
    shape = ModelShape((cfg.feature_dim, *cfg.hidden, cfg.num_classes))
    model = init_mlp(shape, np.random.default_rng([cfg.seed, 0x1417]))
    n = len(shards[-1])
    samples = steps_for(cfg.epochs, n, cfg.batch_size) * min(cfg.batch_size, n)
    t_train = cfg.a_w * env.training_work(model.macs_per_sample(), samples)
    bandwidths = env.make_bandwidths(cfg.b_max, cfg.sigma, cfg.workers,
                                     shape.param_bytes / env.MB, t_train)
    jitter = env.Jitter(cfg.noise, cfg.seed) if cfg.noise > 0 else None
    profiles = [env.WorkerProfile(w, b, cfg.a_w, jitter) for w, b in enumerate(bandwidths)]
    return _Setup(data, shards, shape, model, profiles)


def _local_train(cfg, model, X, y, epochs, lam, rng) -> int:
    """Train in place; returns samples processed."""
    steps = sparse_train(model, X, y, epochs, lam, cfg.lr, cfg.batch_size, rng,
                         cfg.weight_decay)
    return steps * min(cfg.batch_size, len(X))


def _heterogeneity(phis) -> float:
    return env.heterogeneity(phis) if len(phis) >= 2 else 0.0


def _equal_history_similarity(indexes, issued) -> float:
    pairs = [(a, b) for a, b in combinations(range(len(indexes)), 2) if issued[a] == issued[b]]
    return mean_pairwise_similarity(indexes, pairs)


def run_bsp(cfg: ExperimentConfig, prune: bool, lam: float) -> RunResult:
    """Synchronous rounds; with ``prune`` this is AdaptCL, without it FedAVG."""
    s = setup(cfg)
    X, y = s.data.X_train, s.data.y_train
    W = cfg.workers
    global_model = s.model
    rule = AggregationRule(cfg.aggregation)
    policy = RatePolicy(cfg.alpha, cfg.rho_min, cfg.rho_max, cfg.gamma_min, cfg.rho_gap)
    schedule = cfg.schedule()
    indexes = [GlobalIndex.full(s.shape)] * W
    histories = [RateHistory() for _ in range(W)]
    issued: list[tuple] = [() for _ in range(W)]  # (round, rate) of every applied prune
    rates = [0.0] * W
    orders: list = [None] * W
    frozen = None
    if cfg.prune_method in ("index", "no-adjacent"):
        frozen = build_order(cfg.prune_method, None, cfg.seed, shape=s.shape)
    clock = env.SimClock()
    result = RunResult(cfg, [], global_model, indexes)

    for t in range(1, cfg.rounds + 1):
        subs, phis = [], []
        for w in range(W):
            rng = np.random.default_rng([cfg.seed, w, t])
            Xw, yw = X[s.shards[w]], y[s.shards[w]]
            sub = extract_submodel(global_model, indexes[w])
            send_bytes = sub.param_bytes
            samples = _local_train(cfg, sub, Xw, yw, cfg.beta * cfg.epochs, lam, rng)
            work = env.training_work(sub.macs_per_sample(), samples)
            reshaped = False
            if rates[w] > 0:
                mask = compute_mask(orders[w], sub.index, rates[w], cfg.gamma_min)
                if mask.units:
                    sub = reconfigure(sub, mask.units)
                    reshaped = True
                    issued[w] = issued[w] + ((t - 1, rates[w]),)
            samples = _local_train(cfg, sub, Xw, yw, (1 - cfg.beta) * cfg.epochs, lam, rng)
            work += env.training_work(sub.macs_per_sample(), samples)
            phi = env.round_update_time(s.profiles[w], send_bytes / env.MB,
                                        sub.param_bytes / env.MB, work, t)
            result.payload_bytes += send_bytes + sub.param_bytes
            if prune:
                result.overhead_bytes += RATE_BYTES + sub.index.nbytes
            result.worker_rounds += 1
            # a round that changed the model mid-way describes neither size
            if not reshaped:
                histories[w].record(phi)
            indexes[w] = sub.index
            subs.append(sub)
            phis.append(phi)

        global_model = aggregate(subs, rule, global_model)
        clock.advance(t, max(phis))
        rates = [0.0] * W
        if prune and t % cfg.prune_interval == 0:
            rates = _pruning_event(cfg, t, policy, schedule, histories, indexes)
            if cfg.prune_method == "cig-bnscalor" and frozen is None and any(rates):
                frozen = build_order("cig-bnscalor", global_model)
            for w in range(W):
                if cfg.prune_method in CIG_METHODS:
                    orders[w] = frozen
                else:
                    orders[w] = build_order(cfg.prune_method, None, cfg.seed, worker_id=w,
                                            prune_event=t // cfg.prune_interval,
                                            shape=s.shape)

        result.rounds.append(RoundMetrics(
            round=t,
            sim_time=clock.now,
            phi=phis,
            H=_heterogeneity(phis),
            gamma=[retention_ratio(i) for i in indexes],
            accuracy=accuracy(global_model, s.data.X_test, s.data.y_test),
            rates=list(rates),
            similarity=_equal_history_similarity(indexes, issued),
        ))
    result.model = global_model
    result.indexes = list(indexes)
    result.extra["clock_log"] = clock.log
    return result


def _pruning_event(cfg, t, policy, schedule, histories, indexes) -> list[float]:
    W = cfg.workers
    gammas = [retention_ratio(i) for i in indexes]
    fresh = []
    for w in range(W):
        if histories[w].pending_times:
            histories[w].flush(gammas[w])
            fresh.append(w)
    if schedule is not None:
        return [float(r) for r in schedule.get(t, (0.0,) * W)]
    rates = [0.0] * W
    if not fresh:
        return rates
    # workers without a clean measurement this interval sit the event out
    decisions = decide_rates([histories[w] for w in fresh], policy,
                             [gammas[w] < 1.0 for w in fresh])
    for w, d in zip(fresh, decisions):
        rates[w] = d.rate
    log.debug("round %d rates %s", t, np.round(rates, 3))
    return rates


def run_adaptcl(cfg: ExperimentConfig) -> RunResult:
    return run_bsp(cfg, prune=True, lam=cfg.lam)


def run_fedavg(cfg: ExperimentConfig, sparse: bool) -> RunResult:
    return run_bsp(cfg, prune=False, lam=cfg.lam if sparse else 0.0)


def _mix(global_model: MLP, local: MLP, mu: float) -> MLP:
    return aggregate([global_model, local],
                     AggregationRule("by-worker", (1.0 - mu, mu)), global_model)


def run_async(cfg: ExperimentConfig, bound: int | None) -> RunResult:
    """Event-driven asynchronous training.

    ``bound=None`` is FedAsync (polynomial staleness mixing); an integer bound
    gives SSP, where a worker may lead the slowest by at most ``bound`` rounds
    and every arrival is mixed in with weight 1/W.
    """
    s = setup(cfg)
    X, y = s.data.X_train, s.data.y_train
    W, T = cfg.workers, cfg.rounds
    full_mb = s.shape.param_bytes / env.MB
    global_model, version = s.model, 0
    done = [0] * W
    phis = [0.0] * W
    inflight: dict[int, tuple[MLP, int]] = {}
    heap: list[tuple[float, int]] = []
    waiting: set[int] = set()
    result = RunResult(cfg, [], global_model, [GlobalIndex.full(s.shape)] * W)

    def depart(w, t_start):
        local = global_model.copy()
        rng = np.random.default_rng([cfg.seed, w, done[w] + 1])
        samples = _local_train(cfg, local, X[s.shards[w]], y[s.shards[w]], cfg.epochs,
                               cfg.lam, rng)
        work = env.training_work(local.macs_per_sample(), samples)
        phis[w] = env.round_update_time(s.profiles[w], full_mb, full_mb, work, done[w] + 1)
        inflight[w] = (local, version)
        result.payload_bytes += 2 * s.shape.param_bytes
        result.worker_rounds += 1
        heapq.heappush(heap, (t_start + phis[w], w))

    def may_start(w):
        return done[w] < T and (bound is None or done[w] - min(done) <= bound)

    for w in range(W):
        depart(w, 0.0)
    while heap:
        now, w = heapq.heappop(heap)
        local, base_version = inflight.pop(w)
        staleness = version - base_version
        mu = 1.0 / W if bound is not None else cfg.mu0 * (staleness + 1) ** (-cfg.a_mix)
        global_model = _mix(global_model, local, mu)
        version += 1
        done[w] += 1
        result.rounds.append(RoundMetrics(
            round=version, sim_time=now, phi=list(phis), H=_heterogeneity(phis),
            gamma=[1.0] * W,
            accuracy=accuracy(global_model, s.data.X_test, s.data.y_test),
            rates=[0.0] * W, similarity=1.0, staleness=staleness))
        if done[w] < T:
            waiting.add(w)
        for v in sorted(waiting):
            if may_start(v):
                waiting.discard(v)
                depart(v, now)
    result.model = global_model
    return result


def run_fedasync(cfg: ExperimentConfig) -> RunResult:
    return run_async(cfg, None)


def run_ssp(cfg: ExperimentConfig) -> RunResult:
    return run_async(cfg, cfg.s_ssp)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    if cfg.policy == "adaptcl":
        return run_adaptcl(cfg)
    if cfg.policy in ("fedavg", "fedavg-s"):
        return run_fedavg(cfg, sparse=cfg.policy == "fedavg-s")
    if cfg.policy == "fedasync-s":
        return run_fedasync(cfg)
    if cfg.policy == "ssp-s":
        return run_ssp(cfg)
    raise ValueError(f"unknown policy {cfg.policy!r}")


def pruning_events_until_balanced(result: RunResult, ratio: float = 1.10) -> int | None:
    """Pruning events elapsed before max(phi)/min(phi) first drops to ``ratio``."""
    PI = result.config.prune_interval
    for r in result.rounds:
        if max(r.phi) / min(r.phi) <= ratio:
            return (r.round - 1) // PI
    return None
