"""Idea-diffusion cascades over an influence network.

Each individual is Unknown (I), Undecided (U), Support (S) or Reject (R).
Anyone not in I informs out-neighbours in I (I -> U) after an
Exp(e^{O_src}) time; S and R individuals influence out-neighbours in a
different non-I state after an Exp(e^{O_src + tau[src, dst] I_dst}) time
(U -> src state, S/R -> U). The earliest pending transition fires, one
individual at a time.

Two engines produce the next jump:

* ``reference`` draws one exponential per candidate and takes the minimum.
* ``race`` draws the waiting time from the total rate and picks the winner
  with probability proportional to its rate. By the competing-exponentials
  law both have the same (winner, dt) distribution.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .graph import DirectedNetwork

log = logging.getLogger(__name__)


class State(IntEnum):
    I = 0
    U = 1
    S = 2
    R = 3


INFORM, INFLUENCE = 0, 1
KIND_NAMES = ("inform", "influence")

# allowed (old, new) pairs
TRANSITIONS = frozenset({(State.I, State.U), (State.U, State.S), (State.U, State.R),
                         (State.S, State.U), (State.R, State.U)})


class InvalidJump(ValueError):
    pass


@dataclass
class DiffusionParams:
    O: np.ndarray
    I: np.ndarray
    tau: np.ndarray
    network: DirectedNetwork

    def __post_init__(self):
        n = self.network.n
        self.O = np.asarray(self.O, dtype=np.float64)
        self.I = np.asarray(self.I, dtype=np.float64)
        self.tau = np.asarray(self.tau, dtype=np.float64)
        if self.O.shape != (n,) or self.I.shape != (n,) or self.tau.shape != (n, n):
            raise ValueError("O, I must have length n and tau must be n x n")
        if np.any(self.I < 0):
            raise ValueError("susceptibilities must be non-negative")
        src, dst = self.network.sources, self.network.targets
        # precomputed per-edge rates, indexed like network.edges
        self.inform_rate = np.exp(self.O[src])
        self.influence_rate = np.exp(self.O[src] + self.tau[src, dst] * self.I[dst])

    @property
    def n(self) -> int:
        return self.network.n


@dataclass(frozen=True)
class StoppingRule:
    stable_band: float = 0.05
    stable_jumps_required: int | None = None  # default 3n
    max_jumps_factor: int = 10

    def __post_init__(self):
        if not 0 < self.stable_band <= 1:
            raise ValueError("stable_band must lie in (0, 1]")
        if self.stable_jumps_required is not None and self.stable_jumps_required < 1:
            raise ValueError("stable_jumps_required must be >= 1")

    def required(self, n: int) -> int:
        return 3 * n if self.stable_jumps_required is None else self.stable_jumps_required


@dataclass(frozen=True)
class Candidates:
    edge: np.ndarray     # index into network.edges
    source: np.ndarray
    target: np.ndarray
    kind: np.ndarray     # INFORM or INFLUENCE
    rate: np.ndarray

    def __len__(self):
        return len(self.edge)

    def as_set(self) -> set:
        return {(int(s), int(t), KIND_NAMES[k]) for s, t, k in zip(self.source, self.target, self.kind)}


@dataclass(frozen=True)
class Jump:
    source: int
    target: int
    kind: int
    dt: float


def candidate_transitions(states, params: DiffusionParams) -> Candidates:
    """Pending transitions in edge order (by source, then target)."""
    st = np.asarray(states)
    src, dst = params.network.sources, params.network.targets
    s_src, s_dst = st[src], st[dst]
    inform = (s_src != State.I) & (s_dst == State.I)
    influence = (s_src >= State.S) & (s_dst != State.I) & (s_dst != s_src)
    idx = np.flatnonzero(inform | influence)
    kind = np.where(inform[idx], INFORM, INFLUENCE)
    rate = np.where(kind == INFORM, params.inform_rate[idx], params.influence_rate[idx])
    return Candidates(idx, src[idx], dst[idx], kind, rate)


def sample_inform_time(source: int, rng, params: DiffusionParams, size=None):
    """Waiting time for ``source`` to inform: Exp with rate e^{O_source}."""
    return rng.exponential(np.exp(-params.O[source]), size)


def sample_influence_time(source: int, target: int, rng, params: DiffusionParams, size=None):
    rate = np.exp(params.O[source] + params.tau[source, target] * params.I[target])
    return rng.exponential(1.0 / rate, size)


def next_jump_reference(states, params: DiffusionParams, rng, candidates=None) -> Jump | None:
    """One exponential draw per candidate; the smallest wins. ``None`` when
    nothing can happen."""
    c = candidate_transitions(states, params) if candidates is None else candidates
    if len(c) == 0:
        return None
    t = rng.exponential(1.0 / c.rate)
    k = int(np.argmin(t))
    return Jump(int(c.source[k]), int(c.target[k]), int(c.kind[k]), float(t[k]))


def next_jump_race(states, params: DiffusionParams, rng, candidates=None) -> Jump | None:
    """Total-rate waiting time plus a rate-weighted choice of winner."""
    c = candidate_transitions(states, params) if candidates is None else candidates
    if len(c) == 0:
        return None
    cum = np.cumsum(c.rate)
    total = cum[-1]
    dt = rng.exponential(1.0 / total)
    k = int(np.searchsorted(cum, rng.random() * total, side="right"))
    k = min(k, len(c) - 1)
    return Jump(int(c.source[k]), int(c.target[k]), int(c.kind[k]), float(dt))


ENGINES = {"reference": next_jump_reference, "race": next_jump_race}


def apply_jump(states, jump: Jump, inplace: bool = False) -> np.ndarray:
    """Fire one transition; exactly one individual changes state."""
    st = np.asarray(states) if inplace else np.array(states, copy=True)
    s, t = State(int(st[jump.source])), State(int(st[jump.target]))
    if jump.kind == INFORM:
        if s == State.I or t != State.I:
            raise InvalidJump(f"cannot inform: source {s.name}, target {t.name}")
        new = State.U
    else:
        if s not in (State.S, State.R) or t == State.I or t == s:
            raise InvalidJump(f"cannot influence: source {s.name}, target {t.name}")
        new = s if t == State.U else State.U
    st[jump.target] = new
    return st


def counts(states) -> np.ndarray:
    return np.bincount(np.asarray(states, dtype=np.int64), minlength=4)


@dataclass
class CascadeTrace:
    initial: np.ndarray
    final: np.ndarray
    dt: np.ndarray
    source: np.ndarray
    target: np.ndarray
    old_state: np.ndarray
    new_state: np.ndarray
    counts: np.ndarray          # (n_jumps, 4) after each jump
    stop_reason: str
    stable_counter: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_jumps(self) -> int:
        return len(self.dt)

    @property
    def elapsed(self) -> float:
        return float(self.dt.sum())


def run_cascade(params: DiffusionParams, initial_states, stopping: StoppingRule | None = None,
                engine: str = "race", rng=None) -> CascadeTrace:
    """Simulate until no transition is possible or group counts stay within
    ``stable_band * n`` of the counts at the start of the current stable
    streak for ``stable_jumps_required`` consecutive jumps."""
    stopping = stopping or StoppingRule()
    rng = np.random.default_rng() if rng is None else rng
    step = ENGINES[engine]
    n = params.n
    st = np.array(initial_states, dtype=np.int8)
    if st.shape != (n,) or st.min(initial=0) < 0 or st.max(initial=0) > 3:
        raise ValueError("initial states must be n values in {I, U, S, R}")
    init = st.copy()
    band = stopping.stable_band * n
    need = stopping.required(n)
    cap = stopping.max_jumps_factor * n

    rows_dt, rows_src, rows_dst, rows_old, rows_new, rows_counts = [], [], [], [], [], []
    cur = counts(st)
    anchor = cur.copy()
    stable = 0
    reason = "exhausted"
    while True:
        if len(rows_dt) >= cap:
            reason = "jump_cap"
            log.warning("cascade hit the %d-jump cap (n=%d); stopping", cap, n)
            break
        jump = step(st, params, rng)
        if jump is None:
            reason = "exhausted"
            break
        old = int(st[jump.target])
        apply_jump(st, jump, inplace=True)
        new = int(st[jump.target])
        cur[old] -= 1
        cur[new] += 1
        rows_dt.append(jump.dt)
        rows_src.append(jump.source)
        rows_dst.append(jump.target)
        rows_old.append(old)
        rows_new.append(new)
        rows_counts.append(cur.copy())
        if np.max(np.abs(cur - anchor)) <= band:
            stable += 1
        else:
            stable = 0
            anchor = cur.copy()
        if stable >= need:
            reason = "stable"
            break
    return CascadeTrace(
        initial=init,
        final=st.astype(np.int64),
        dt=np.array(rows_dt, dtype=np.float64),
        source=np.array(rows_src, dtype=np.int64),
        target=np.array(rows_dst, dtype=np.int64),
        old_state=np.array(rows_old, dtype=np.int64),
        new_state=np.array(rows_new, dtype=np.int64),
        counts=np.array(rows_counts, dtype=np.int64).reshape(-1, 4),
        stop_reason=reason,
        stable_counter=stable,
        meta={"engine": engine},
    )


def cascade_summaries(trace: CascadeTrace) -> dict:
    n = len(trace.final)
    reach = float(np.isin(trace.final, (State.S, State.R)).sum()) / n
    return {"total_time": trace.elapsed, "reach": reach, "n_jumps": trace.n_jumps,
            "stop_reason": trace.stop_reason}


def write_trace(trace: CascadeTrace, path) -> None:
    names = [s.name for s in State]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["jump_index", "dt", "elapsed", "source", "target", "old_state", "new_state",
                    "n_I", "n_U", "n_S", "n_R"])
        elapsed = np.cumsum(trace.dt)
        for k in range(trace.n_jumps):
            w.writerow([k, repr(float(trace.dt[k])), repr(float(elapsed[k])), int(trace.source[k]),
                        int(trace.target[k]), names[trace.old_state[k]], names[trace.new_state[k]],
                        *map(int, trace.counts[k])])


def write_summary(trace: CascadeTrace, path) -> dict:
    summary = {"schema": "cascade-summary/1", **cascade_summaries(trace)}
    Path(path).write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def parse_states(tokens) -> np.ndarray:
    """Map state letters (``I``, ``U``, ``S``, ``R``) to codes."""
    return np.array([State[t.strip().upper()] for t in tokens], dtype=np.int64)
