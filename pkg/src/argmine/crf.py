"""Linear-chain CRF: log-partition, NLL with exact gradients, Viterbi.

Training uses the unconstrained partition function (all paths); the scheme
constraint mask only bites at decode time, where disallowed transitions score
-inf.  Gold sequences are validated against the mask before training.
"""

from __future__ import annotations

import numpy as np

from .nn.params import Parameter
from .tagging import tag_vocabulary

NEG_INF = -np.inf


class CrfError(Exception):
    pass


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.exp(a - m).sum(axis=axis))


def scheme_transition_allowed(scheme: str, src: str, dst: str) -> bool:
    """Whether tag ``src`` may directly precede tag ``dst`` under the scheme."""
    sp, sc = (src[0], src[2:]) if src != "O" else ("O", None)
    dp, dc = (dst[0], dst[2:]) if dst != "O" else ("O", None)
    if scheme == "BIOUL":
        if sp in ("O", "L", "U"):
            return dp in ("O", "B", "U")
        # from B or I: must continue the same span
        return dp in ("I", "L") and dc == sc
    if scheme == "BIO2":
        if sp == "O":
            return dp in ("O", "B")
        # from B or I
        if dp in ("O", "B"):
            return True
        return dp == "I" and dc == sc
    raise ValueError(f"unknown scheme {scheme!r}")


def scheme_start_allowed(scheme: str, tag: str) -> bool:
    p = tag[0] if tag != "O" else "O"
    if scheme == "BIOUL":
        return p in ("O", "B", "U")
    if scheme == "BIO2":
        return p in ("O", "B")
    raise ValueError(f"unknown scheme {scheme!r}")


def scheme_end_allowed(scheme: str, tag: str) -> bool:
    p = tag[0] if tag != "O" else "O"
    if scheme == "BIOUL":
        return p in ("O", "L", "U")
    if scheme == "BIO2":
        return True
    raise ValueError(f"unknown scheme {scheme!r}")


def build_constraint_masks(scheme: str, labels: list[str]):
    """(start_mask[L], transition_mask[L, L], end_mask[L]) of allowed moves."""
    n = len(labels)
    start = np.array([scheme_start_allowed(scheme, t) for t in labels])
    end = np.array([scheme_end_allowed(scheme, t) for t in labels])
    trans = np.zeros((n, n), dtype=bool)
    for i, s in enumerate(labels):
        for j, d in enumerate(labels):
            trans[i, j] = scheme_transition_allowed(scheme, s, d)
    return start, trans, end


class CrfParams:
    """Transition scores plus the (fixed) decode-time constraint mask."""

    def __init__(self, num_labels: int, name: str = "crf",
                 start_mask: np.ndarray | None = None,
                 transition_mask: np.ndarray | None = None,
                 end_mask: np.ndarray | None = None):
        self.num_labels = num_labels
        self.transitions = Parameter(f"{name}.transitions",
                                     np.zeros((num_labels, num_labels)))
        self.start = Parameter(f"{name}.start", np.zeros(num_labels))
        self.end = Parameter(f"{name}.end", np.zeros(num_labels))
        ones = np.ones
        self.start_mask = (start_mask if start_mask is not None
                           else ones(num_labels, dtype=bool))
        self.transition_mask = (transition_mask if transition_mask is not None
                                else ones((num_labels, num_labels), dtype=bool))
        self.end_mask = (end_mask if end_mask is not None
                         else ones(num_labels, dtype=bool))

    @classmethod
    def for_scheme(cls, scheme: str, classes: tuple[str, ...], name: str = "crf"):
        labels = tag_vocabulary(scheme, classes)
        start, trans, end = build_constraint_masks(scheme, labels)
        crf = cls(len(labels), name=name, start_mask=start,
                  transition_mask=trans, end_mask=end)
        crf.labels = labels
        return crf

    def params(self) -> list[Parameter]:
        return [self.transitions, self.start, self.end]

    def validate_path(self, tags: np.ndarray) -> None:
        tags = np.asarray(tags, dtype=np.int64)
        if not self.start_mask[tags[0]]:
            raise CrfError(f"gold path starts with disallowed label {tags[0]}")
        for a, b in zip(tags[:-1], tags[1:]):
            if not self.transition_mask[a, b]:
                raise CrfError(f"gold path uses disallowed transition {a}->{b}")
        if not self.end_mask[tags[-1]]:
            raise CrfError(f"gold path ends with disallowed label {tags[-1]}")


def log_partition(emissions: np.ndarray, crf: CrfParams) -> float:
    """log sum over all tag paths of exp(path score), in log space."""
    emissions = np.asarray(emissions, dtype=np.float64)
    n = emissions.shape[0]
    if n < 1:
        raise CrfError("need at least one token")
    alpha = crf.start.value + emissions[0]
    trans = crf.transitions.value
    for t in range(1, n):
        alpha = _logsumexp(alpha[:, None] + trans, axis=0) + emissions[t]
    return float(_logsumexp(alpha + crf.end.value, axis=0))


def path_score(emissions: np.ndarray, crf: CrfParams, tags: np.ndarray) -> float:
    tags = np.asarray(tags, dtype=np.int64)
    n = emissions.shape[0]
    score = crf.start.value[tags[0]] + emissions[0, tags[0]]
    for t in range(1, n):
        score += crf.transitions.value[tags[t - 1], tags[t]] + emissions[t, tags[t]]
    return float(score + crf.end.value[tags[-1]])


def nll(emissions: np.ndarray, crf: CrfParams, tags: np.ndarray,
        compute_grad: bool = True):
    """Negative log-likelihood of the gold path; optionally exact gradients.

    Returns ``(loss, d_emissions)``; CRF parameter gradients are accumulated
    in place.  Gradients come from forward-backward marginals.
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    tags = np.asarray(tags, dtype=np.int64)
    n, num_labels = emissions.shape
    if len(tags) != n:
        raise CrfError(f"got {len(tags)} tags for {n} tokens")
    crf.validate_path(tags)
    trans = crf.transitions.value

    alpha = np.empty((n, num_labels))
    alpha[0] = crf.start.value + emissions[0]
    for t in range(1, n):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    log_z = float(_logsumexp(alpha[n - 1] + crf.end.value, axis=0))
    loss = log_z - path_score(emissions, crf, tags)
    if not compute_grad:
        return loss, None

    beta = np.empty((n, num_labels))
    beta[n - 1] = crf.end.value
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)

    node_marg = np.exp(alpha + beta - log_z)
    d_emissions = node_marg.copy()
    d_emissions[np.arange(n), tags] -= 1.0

    d_start = node_marg[0].copy()
    d_start[tags[0]] -= 1.0
    crf.start.grad += d_start
    d_end = node_marg[n - 1].copy()
    d_end[tags[n - 1]] -= 1.0
    crf.end.grad += d_end

    d_trans = np.zeros_like(trans)
    for t in range(n - 1):
        pair = np.exp(
            alpha[t][:, None] + trans + (emissions[t + 1] + beta[t + 1])[None, :]
            - log_z
        )
        d_trans += pair
    for a, b in zip(tags[:-1], tags[1:]):
        d_trans[a, b] -= 1.0
    crf.transitions.grad += d_trans
    return loss, d_emissions


def viterbi(emissions: np.ndarray, crf: CrfParams,
            use_mask: bool = True) -> list[int]:
    """Best-scoring path under the constraint mask; ties -> lowest label index."""
    emissions = np.asarray(emissions, dtype=np.float64)
    n, num_labels = emissions.shape
    if n < 1:
        raise CrfError("need at least one token")
    if use_mask:
        start = np.where(crf.start_mask, crf.start.value, NEG_INF)
        end = np.where(crf.end_mask, crf.end.value, NEG_INF)
        trans = np.where(crf.transition_mask, crf.transitions.value, NEG_INF)
    else:
        start, end, trans = crf.start.value, crf.end.value, crf.transitions.value

    delta = start + emissions[0]
    back = np.empty((n, num_labels), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + trans                     # [from, to]
        back[t] = cand.argmax(axis=0)                     # first max = lowest index
        delta = cand[back[t], np.arange(num_labels)] + emissions[t]
    delta = delta + end
    best = int(delta.argmax())
    path = [best]
    for t in range(n - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path
