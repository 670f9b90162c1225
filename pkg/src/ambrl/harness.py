"""Experiment cells, exact regret bookkeeping, aggregation, log-fit and export."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from . import amb as amb_mod
from . import baselines
from .environments import (SjInstanceSpec, TreeInstanceSpec, random_layered_mdp,
                           sj_hard_instance, tree_lower_bound_base)
from .mdp import (EpisodeStreams, ExactSolution, TabularMdp, _rollout,
                  backward_induction, load, policy_value)

CSV_COLUMNS = ("episode", "inst_regret", "cum_regret", "decided_count", "eliminated_pairs", "seed")
ALGOS = ("amb", "ucb")
CHUNK = 1 << 16
DENSE_UNTIL = 10_000
POINTS_PER_DECADE = 200


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  ``env`` is a dict with a ``kind`` key or a path to an MDP file.

    Environment kinds and their parameters:
      ``sj``: ``n``, ``delta_min``;
      ``tree``: ``n``, ``A``, ``gamma`` (optional ``perturb: [i, j]``);
      ``random``: ``levels``, ``A``, ``seed``, optional ``min_gap``;
      ``file``: ``path``.
    """

    env: dict | str
    algo: str = "amb"
    episodes: int = 10_000
    delta: float = 0.1
    bonus_c: float = 1.0
    seeds: tuple[int, ...] = (0,)
    out: str | None = None
    record_every: int | None = None
    check: bool = True

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.algo == "amb" and not (0 < self.delta < 1 / 3):
            raise ValueError(f"delta must lie in (0, 1/3) for amb, got {self.delta}")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be positive")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        seeds = doc.pop("seeds", None)
        base = int(doc.pop("base_seed", 0))
        if isinstance(seeds, int):
            seeds = tuple(range(base, base + seeds))
        elif seeds is None:
            seeds = (base,)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(seeds=tuple(seeds), **doc)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        """Hash of everything that determines a cell's output except the seed."""
        doc = asdict(self)
        for k in ("seeds", "out", "check"):
            doc.pop(k)
        blob = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def build_env(env: dict | str) -> TabularMdp:
    if isinstance(env, (str, Path)):
        return load(env)
    kind = env.get("kind")
    if kind == "sj":
        return sj_hard_instance(SjInstanceSpec(int(env["n"]), float(env["delta_min"])))
    if kind == "tree":
        from .environments import tree_lower_bound_perturbed
        spec = TreeInstanceSpec(int(env["n"]), int(env.get("A", 2)), float(env.get("gamma", 0.1)))
        mdp = tree_lower_bound_base(spec)
        if env.get("perturb"):
            i, j = env["perturb"]
            mdp = tree_lower_bound_perturbed(mdp, int(i), int(j), spec.gamma)
        return mdp
    if kind == "random":
        return random_layered_mdp(list(env["levels"]), int(env["A"]), int(env.get("seed", 0)),
                                  env.get("min_gap"))
    if kind == "file":
        return load(env["path"])
    raise ValueError(f"unknown environment kind {kind!r}")


def recorded_episodes(num_episodes: int, record_every: int | None = None) -> np.ndarray:
    """Episodes kept in a series: all of them up to 10^4, then log-spaced.

    Powers of two and the final episode are always included.
    """
    K_ = num_episodes
    if record_every is not None:
        ks = set(range(record_every, K_ + 1, record_every))
    else:
        ks = set(range(1, min(K_, DENSE_UNTIL) + 1))
        if K_ > DENSE_UNTIL:
            decades = math.log10(K_ / DENSE_UNTIL)
            grid = DENSE_UNTIL * 10 ** np.linspace(0, decades, int(math.ceil(decades * POINTS_PER_DECADE)) + 1)
            ks.update(int(round(k)) for k in grid)
            p = 1
            while p <= K_:
                ks.add(p)
                p *= 2
    ks.add(K_)
    return np.array(sorted(k for k in ks if 1 <= k <= K_), dtype=np.int64)


@dataclass
class RegretSeries:
    episodes: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    decided_count: np.ndarray
    eliminated_pairs: np.ndarray
    seed: int
    algo: str = "amb"
    config_hash: str = ""
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.episodes)

    def at(self, k: int) -> float:
        """Cumulative regret after episode ``k`` (must be a recorded episode)."""
        i = np.searchsorted(self.episodes, k)
        if i == len(self.episodes) or self.episodes[i] != k:
            raise KeyError(f"episode {k} was not recorded")
        return float(self.cum_regret[i])


def regret_of_policy(solution: ExactSolution, mdp: TabularMdp, pi) -> float:
    return solution.v0_star - policy_value(mdp, pi)


def _kernel_inputs(mdp: TabularMdp, sol: ExactSolution):
    return (np.ascontiguousarray(mdp.transition), np.ascontiguousarray(mdp.cum_transition),
            np.ascontiguousarray(mdp.reward_mean), np.ascontiguousarray(mdp.initial),
            np.ascontiguousarray(mdp.cum_initial), np.ascontiguousarray(mdp.num_actions),
            np.ascontiguousarray(mdp.level_offsets), mdp.horizon)


def _learner_config(config: ExperimentConfig, mdp: TabularMdp) -> amb_mod.AmbConfig:
    # the baseline shares the bonus, which needs a delta even though it has no elimination
    return amb_mod.AmbConfig(delta=config.delta, horizon=mdp.horizon,
                             num_episodes=config.episodes, bonus_c=config.bonus_c)


def run_cell(config: ExperimentConfig, seed: int, mdp: TabularMdp | None = None,
             solution: ExactSolution | None = None, engine: str = "compiled") -> RegretSeries:
    """Run one (config, seed) cell and return its thinned regret series.

    ``engine="reference"`` drives the pure-Python learners instead of the
    compiled loop; both consume identical random streams.
    """
    t0 = time.perf_counter()
    mdp = mdp if mdp is not None else build_env(config.env)
    sol = solution if solution is not None else backward_induction(mdp)
    lcfg = _learner_config(config, mdp)
    streams = EpisodeStreams(seed)
    if engine == "compiled":
        inst, dec, elim, flags = _run_compiled(config, mdp, sol, lcfg, streams)
    elif engine == "reference":
        inst, dec, elim, flags = _run_reference(config, mdp, sol, lcfg, streams)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    cum = np.cumsum(inst)
    diagnostics = {
        "sandwich_violations": int(flags[K.SANDWICH]),
        "admissible_grew": int(flags[K.GREW]),
        "decided_shrank": int(flags[K.SHRANK]),
        "decided_thawed": int(flags[K.THAWED]),
        "first_invalid_episode": int(flags[K.FIRST_INVALID]),
        "first_optimal_eliminated_episode": int(flags[K.FIRST_OPT_LOST]),
        "min_inst_regret": float(inst.min()),
    }
    if config.check:
        _assert_invariants(diagnostics, cum)
    ks = recorded_episodes(config.episodes, config.record_every)
    idx = ks - 1
    return RegretSeries(ks, inst[idx], cum[idx], dec[idx], elim[idx], int(seed), config.algo,
                        config.digest(), time.perf_counter() - t0, diagnostics)


def _assert_invariants(diag: dict, cum: np.ndarray) -> None:
    broken = [k for k in ("sandwich_violations", "admissible_grew", "decided_shrank", "decided_thawed")
              if diag[k]]
    if diag["min_inst_regret"] < -1e-9:
        broken.append("negative instantaneous regret")
    if np.any(np.diff(cum) < -1e-9):
        broken.append("cumulative regret decreased")
    if broken:
        raise InvariantViolation(", ".join(broken))


def _run_compiled(config, mdp, sol, lcfg, streams):
    Kn, H = config.episodes, mdp.horizon
    S, A = mdp.num_states, mdp.max_actions
    base = _kernel_inputs(mdp, sol)
    q_star = np.ascontiguousarray(sol.q_star)
    v_star = np.ascontiguousarray(sol.v_star)
    opt = np.ascontiguousarray(sol.optimal_mask)
    log_term = lcfg.log_term(S, A)
    inst = np.empty(Kn)
    dec = np.zeros(Kn, dtype=np.int64)
    elim = np.zeros(Kn, dtype=np.int64)
    flags = K.new_flags()
    if config.algo == "amb":
        st = amb_mod.init(mdp, lcfg)
    else:
        st = baselines.ucb_init(mdp, lcfg)
    for start in range(0, Kn, CHUNK):
        B = min(CHUNK, Kn - start)
        u0, ut, ur = streams.draw(B, H)
        sl = slice(start, start + B)
        if config.algo == "amb":
            K.amb_run(*base, q_star, v_star, opt, sol.v0_star, log_term, lcfg.bonus_c, lcfg.tolerance,
                      st.q_upper, st.q_lower, st.v_upper, st.v_lower, st.visit_count,
                      st.admissible, st.decided, u0, ut, ur, start + 1, config.check,
                      inst[sl], dec[sl], elim[sl], flags)
        else:
            K.ucb_run(*base, q_star, v_star, sol.v0_star, log_term, lcfg.bonus_c,
                      st.q_upper, st.v_upper, st.visit_count, u0, ut, ur, start + 1, config.check,
                      inst[sl], flags)
    return inst, dec, elim, flags


def _run_reference(config, mdp, sol, lcfg, streams):
    Kn, H = config.episodes, mdp.horizon
    inst = np.empty(Kn)
    dec = np.zeros(Kn, dtype=np.int64)
    elim = np.zeros(Kn, dtype=np.int64)
    flags = K.new_flags()
    is_amb = config.algo == "amb"
    st = amb_mod.init(mdp, lcfg) if is_amb else baselines.ucb_init(mdp, lcfg)
    opt = sol.optimal_mask
    mask = mdp.action_mask
    for i in range(Kn):
        k = i + 1
        pi = st.policy()
        inst[i] = regret_of_policy(sol, mdp, pi)
        u0, ut, ur = streams.draw(1, H)
        traj = _rollout(mdp, pi, u0[0], ut[0], ur[0], k)
        if not is_amb:
            baselines.ucb_update_episode(st, traj, lcfg)
            if config.check:
                q = st.q_upper[mask]
                flags[K.SANDWICH] += bool(np.any(q < 0) or np.any(q > H))
                if flags[K.FIRST_INVALID] < 0 and np.any(q < sol.q_star[mask] - K.VALIDITY_TOL):
                    flags[K.FIRST_INVALID] = k
            continue
        before = (st.admissible.copy(), st.decided.copy(), st.q_upper.copy(), st.q_lower.copy())
        amb_mod.update_episode(st, traj, lcfg)
        dec[i] = int(st.decided.sum())
        elim[i] = st.eliminated_pairs(mdp.num_actions)
        if config.check:
            _reference_checks(st, before, sol, mask, opt, H, k, flags)
    return inst, dec, elim, flags


def _reference_checks(st, before, sol, mask, opt, H, k, flags):
    adm0, dec0, qu0, ql0 = before
    qu, ql = st.q_upper[mask], st.q_lower[mask]
    vu, vl = st.v_upper[:-1], st.v_lower[:-1]
    flags[K.SANDWICH] += bool(np.any(ql < 0) or np.any(ql > qu) or np.any(qu > H)
                              or np.any(vl < 0) or np.any(vl > vu) or np.any(vu > H))
    flags[K.GREW] += bool(np.any(st.admissible & ~adm0))
    flags[K.SHRANK] += bool(np.any(dec0 & ~st.decided))
    flags[K.THAWED] += bool(np.any((st.q_upper != qu0)[dec0]) or np.any((st.q_lower != ql0)[dec0]))
    und = ~st.decided
    tol = K.VALIDITY_TOL
    qs = np.where(mask, sol.q_star, 0.0)
    bad_q = (st.q_lower > qs + tol) | (st.q_upper < qs - tol)
    bad_v = (vl > sol.v_star[:-1] + tol) | (vu < sol.v_star[:-1] - tol)
    if flags[K.FIRST_INVALID] < 0 and (np.any((bad_q & mask)[und]) or np.any(bad_v[und])):
        flags[K.FIRST_INVALID] = k
    if flags[K.FIRST_OPT_LOST] < 0 and np.any(opt & ~st.admissible):
        flags[K.FIRST_OPT_LOST] = k


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[RegretSeries]:
    """All seeds of one config, sorted by seed."""
    mdp = build_env(config.env)
    sol = backward_induction(mdp)
    seeds = sorted(set(config.seeds))
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_cell_job, [(config, s) for s in seeds]))
    else:
        out = [run_cell(config, s, mdp, sol) for s in seeds]
    return sorted(out, key=lambda r: r.seed)


def _cell_job(args):
    config, seed = args
    return run_cell(config, seed)


# -- aggregation ----------------------------------------------------------------

@dataclass
class RegretSummary:
    episodes: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    q10: np.ndarray
    q90: np.ndarray
    count: int
    members: list[RegretSeries]

    @property
    def seeds(self) -> list[int]:
        return [m.seed for m in self.members]

    def mean_at(self, k: int) -> float:
        i = np.searchsorted(self.episodes, k)
        if i == len(self.episodes) or self.episodes[i] != k:
            raise KeyError(f"episode {k} was not recorded")
        return float(self.mean[i])


def aggregate(series: Sequence[RegretSeries]) -> RegretSummary:
    if not series:
        raise ValueError("nothing to aggregate")
    members = sorted(series, key=lambda r: (r.seed, r.algo))
    eps = members[0].episodes
    for r in members[1:]:
        if not np.array_equal(r.episodes, eps):
            raise ValueError("series were recorded at different episodes")
    cum = np.stack([r.cum_regret for r in members])
    return RegretSummary(
        episodes=eps.copy(),
        mean=cum.mean(axis=0),
        median=np.median(cum, axis=0),
        q10=np.quantile(cum, 0.1, axis=0),
        q90=np.quantile(cum, 0.9, axis=0),
        count=len(members),
        members=members,
    )


class LogFit(NamedTuple):
    a: float
    b: float
    residual: float


def fit_log_regret(obj: RegretSeries | RegretSummary, start: int | None = None,
                   stop: int | None = None) -> LogFit:
    """Least-squares fit of ``cum_regret(k) ~ a ln k + b`` over episodes in [start, stop].

    The default window is the last two decades of recorded episodes.
    """
    ks = obj.episodes
    ys = obj.cum_regret if isinstance(obj, RegretSeries) else obj.mean
    stop = int(ks[-1]) if stop is None else stop
    start = max(1, stop // 100) if start is None else start
    sel = (ks >= start) & (ks <= stop)
    if sel.sum() < 10:
        raise ValueError(f"need at least 10 recorded points in [{start}, {stop}], got {int(sel.sum())}")
    x = np.log(ks[sel].astype(float))
    y = ys[sel]
    if np.ptp(x) == 0:
        raise ValueError("degenerate fit window")
    X = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ np.array([a, b]) - y) ** 2)))
    return LogFit(float(a), float(b), resid)


def log_fit_quality(obj, fit: LogFit | None = None, threshold: float = 0.02, **window) -> dict:
    """Fit plus a goodness flag: RMS residual relative to the regret range in the window."""
    fit = fit or fit_log_regret(obj, **window)
    ys = obj.cum_regret if isinstance(obj, RegretSeries) else obj.mean
    scale = float(np.ptp(ys)) or 1.0
    rel = fit.residual / scale
    return {"a": fit.a, "b": fit.b, "residual": fit.residual, "relative_residual": rel,
            "logarithmic": rel <= threshold}


# -- export ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _rows(series: RegretSeries) -> Iterable[list[str]]:
    for i in range(len(series)):
        yield [str(int(series.episodes[i])), _fmt(series.inst_regret[i]), _fmt(series.cum_regret[i]),
               str(int(series.decided_count[i])), str(int(series.eliminated_pairs[i])), str(series.seed)]


def export(obj, path, fmt: str = "csv") -> Path:
    """Write a series, a list of series or a summary as CSV or JSON."""
    path = Path(path)
    if isinstance(obj, RegretSummary):
        members = obj.members
    elif isinstance(obj, RegretSeries):
        members = [obj]
    else:
        members = sorted(obj, key=lambda r: r.seed)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for m in members:
                    w.writerows(_rows(m))
        elif fmt == "json":
            doc = {"series": [_series_doc(m) for m in members]}
            if isinstance(obj, RegretSummary):
                doc["summary"] = {
                    "count": obj.count, "seeds": obj.seeds,
                    "episode": obj.episodes.tolist(), "mean": obj.mean.tolist(),
                    "median": obj.median.tolist(), "q10": obj.q10.tolist(), "q90": obj.q90.tolist(),
                }
            path.write_text(json.dumps(doc, indent=1) + "\n")
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def _series_doc(m: RegretSeries) -> dict:
    return {
        "seed": m.seed, "algo": m.algo, "config_hash": m.config_hash,
        "episode": m.episodes.tolist(), "inst_regret": m.inst_regret.tolist(),
        "cum_regret": m.cum_regret.tolist(), "decided_count": m.decided_count.tolist(),
        "eliminated_pairs": m.eliminated_pairs.tolist(),
    }


def read_csv(path) -> list[RegretSeries]:
    """Inverse of ``export(..., fmt="csv")``; one series per seed."""
    by_seed: dict[int, list[list[str]]] = {}
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in r:
            by_seed.setdefault(int(row[5]), []).append(row)
    out = []
    for seed, rows in sorted(by_seed.items()):
        cols = list(zip(*rows))
        out.append(RegretSeries(
            np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=float),
            np.array(cols[2], dtype=float), np.array(cols[3], dtype=np.int64),
            np.array(cols[4], dtype=np.int64), seed))
    return out


def compare(config: ExperimentConfig, workers: int = 1) -> dict:
    """Run AMB and the UCB baseline on the same instance and seeds."""
    runs = {algo: run_experiment(replace(config, algo=algo), workers) for algo in ALGOS}
    summaries = {algo: aggregate(r) for algo, r in runs.items()}
    Kn = config.episodes
    amb_k = summaries["amb"].mean_at(Kn)
    ucb_k = summaries["ucb"].mean_at(Kn)
    return {
        "episodes": Kn,
        "seeds": summaries["amb"].seeds,
        "mean_regret_at_K": {"amb": amb_k, "ucb": ucb_k},
        "ratio_amb_over_ucb": amb_k / ucb_k if ucb_k > 0 else math.inf,
        "summaries": summaries,
    }
