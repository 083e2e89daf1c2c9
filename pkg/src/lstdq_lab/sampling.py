"""I.i.d. transition datasets ``(s, a, r, s', a')`` and seed substreams.

Randomness comes from counter-based Philox generators keyed by
``(seed, chunk_index)``.  Chunk ``k`` always covers rows
``[k * CHUNK, (k + 1) * CHUNK)``, so any chunk can be generated on its own
and the dataset does not depend on generation order or worker count.
"""

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mdp import StateActionDist, occupancy

CHUNK = 4096
_MASK64 = (1 << 64) - 1


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int
    a_next: int


def substream_seed(root_seed, name):
    """64-bit seed for the named substream ``name`` of ``root_seed``.

    Names follow the ``"dataset"``, ``"instance"``, ``"sweep:n:i"``
    convention.  Distinct names give statistically independent streams.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32).tolist()
    ss = np.random.SeedSequence([int(root_seed) & _MASK64, *words])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _chunk_generator(seed, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & _MASK64, chunk])))


def _cumulative(probs):
    # Dividing by the total makes every entry from the last positive mass on
    # exactly 1.0, so trailing zero-mass categories are unreachable.
    cum = np.cumsum(probs, axis=-1)
    return cum / cum[..., -1:]


def _inverse_cdf(cum_rows, u):
    """Category ``k`` with ``cum[k-1] <= u < cum[k]`` per row (zero-mass categories never hit)."""
    idx = (cum_rows <= u[:, None]).sum(axis=1)
    return np.minimum(idx, cum_rows.shape[1] - 1)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar storage of ``n`` transitions plus the sampling metadata.

    Iterating or indexing yields :class:`Transition` tuples.
    """

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    a_next: np.ndarray
    seed: int
    mu_d: StateActionDist

    def __post_init__(self):
        cols = {}
        for name, dtype in (("s", np.int64), ("a", np.int64), ("r", float),
                            ("s_next", np.int64), ("a_next", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype, copy=True).ravel()
            arr.setflags(write=False)
            cols[name] = arr
            object.__setattr__(self, name, arr)
        n = cols["s"].size
        if n == 0:
            raise ValueError("dataset must be nonempty")
        if any(c.size != n for c in cols.values()):
            raise ValueError("dataset columns have different lengths")
        for name in ("s", "a", "s_next", "a_next"):
            if np.any(cols[name] < 0):
                raise ValueError(f"negative index in column {name}")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n(self):
        return self.s.size

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return Transition(int(self.s[i]), int(self.a[i]), float(self.r[i]),
                          int(self.s_next[i]), int(self.a_next[i]))

    def __iter__(self):
        for i in range(self.n):
            yield self[i]

    def validate_for(self, mdp):
        """Check index ranges and reward bounds against ``mdp``."""
        S, A = mdp.num_states, mdp.num_actions
        if self.s.max() >= S or self.s_next.max() >= S:
            raise ValueError("state index out of range")
        if self.a.max() >= A or self.a_next.max() >= A:
            raise ValueError("action index out of range")
        if np.any(self.r < 0) or np.any(self.r > mdp.r_max):
            raise ValueError("reward outside [0, r_max]")


def _sample_chunk(mdp, pi, cum_mu, cum_p, cum_pi, seed, chunk, size):
    rng = _chunk_generator(seed, chunk)
    u = rng.random((size, 4))
    A = mdp.num_actions
    pair = _inverse_cdf(np.broadcast_to(cum_mu, (size, cum_mu.size)), u[:, 0])
    s, a = np.divmod(pair, A)
    h = mdp.reward_noise_halfwidth
    r = mdp.mean_reward[s, a]
    if h > 0:
        r = r + h * (2.0 * u[:, 1] - 1.0)
    s_next = _inverse_cdf(cum_p[s, a], u[:, 2])
    a_next = _inverse_cdf(cum_pi[s_next], u[:, 3])
    return s, a, r, s_next, a_next


def sample_dataset(mdp, pi, mu_d, n, seed):
    """Draw ``n`` i.i.d. tuples from ``mu_d``, ``R``, ``P`` and ``pi``.

    ``(s, a) ~ mu_d``, ``r ~ R(s, a)``, ``s' ~ P(. | s, a)``, ``a' ~ pi(. | s')``.
    Identical inputs give bit-identical datasets.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if len(mu_d) != mdp.num_pairs:
        raise ValueError("mu_d does not match the MDP's state-action pairs")
    cum_mu = _cumulative(mu_d.probs)
    cum_p = _cumulative(mdp.transition)
    cum_pi = _cumulative(pi.action_probs)
    parts = []
    for chunk, start in enumerate(range(0, n, CHUNK)):
        size = min(CHUNK, n - start)
        parts.append(_sample_chunk(mdp, pi, cum_mu, cum_p, cum_pi, seed, chunk, size))
    cols = [np.concatenate(c) for c in zip(*parts)]
    return Dataset(*cols, seed=seed, mu_d=mu_d)


def onpolicy_mu_d(mdp, pi):
    """The discounted occupancy of ``pi``, used as an on-policy data distribution."""
    return occupancy(mdp, pi)
