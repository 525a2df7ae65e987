"""Linear-chain CRF output layer.

Scores a tag path ``y`` for emissions ``e`` (L x T) as::

    start[y0] + sum_l e[l, y_l] + sum_l trans[y_{l-1}, y_l] + end[y_{L-1}]

``trans[i, j]`` scores tag ``j`` following tag ``i``.  The log-partition is the
forward recursion over these scores; Viterbi is the same recursion with max.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, concat, index, logsumexp, reshape, sum, where


@dataclass
class CrfLayer:
    transitions: Tensor
    start_scores: Tensor
    end_scores: Tensor

    @classmethod
    def zeros(cls, n_tags, prefix="crf."):
        return cls(
            Tensor(np.zeros((n_tags, n_tags)), requires_grad=True, name=prefix + "transitions"),
            Tensor(np.zeros(n_tags), requires_grad=True, name=prefix + "start"),
            Tensor(np.zeros(n_tags), requires_grad=True, name=prefix + "end"),
        )

    @property
    def n_tags(self):
        return self.transitions.shape[0]

    def arrays(self):
        return self.transitions.data, self.start_scores.data, self.end_scores.data


def _as_layer(crf):
    if isinstance(crf, CrfLayer):
        return crf
    trans, start, end = crf
    return CrfLayer(Tensor(trans), Tensor(start), Tensor(end))


def batch_log_partition(emissions, crf, mask=None):
    """Log-partition per sequence for time-major emissions (L, B, T).

    ``mask`` (L, B) marks real positions; sequences are left-aligned, so a
    False entry means the sequence has already ended.
    """
    L, B, T = emissions.shape
    trans = reshape(crf.transitions, (1, T, T))
    alpha = emissions[0] + crf.start_scores
    for t in range(1, L):
        scores = reshape(alpha, (B, T, 1)) + trans
        nxt = logsumexp(scores, axis=1) + emissions[t]
        if mask is None or mask[t].all():
            alpha = nxt
        else:
            alpha = where(mask[t][:, None], nxt, alpha)
    return logsumexp(alpha + crf.end_scores, axis=1)


def batch_path_score_total(emissions, crf, tags, lengths):
    """Sum over a batch of the scores of the given paths.

    ``tags`` is (L, B) with entries past each sequence's length ignored.
    """
    L, B, T = emissions.shape
    tags = np.asarray(tags, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    rows, cols, prev, cur = [], [], [], []
    for b in range(B):
        n = int(lengths[b])
        for t in range(n):
            rows.append(t * B + b)
            cols.append(tags[t, b])
            if t:
                prev.append(tags[t - 1, b])
                cur.append(tags[t, b])
    batch = np.arange(B)
    last = tags[lengths - 1, batch]
    flat = reshape(emissions, (L * B, T))
    parts = [
        index(flat, (np.array(rows), np.array(cols))),
        index(crf.start_scores, tags[0]),
        index(crf.end_scores, last),
    ]
    if prev:
        parts.append(index(crf.transitions, (np.array(prev), np.array(cur))))
    return sum(concat(parts, axis=0))


def crf_log_partition(emissions, crf):
    """log Z for one sequence of emissions (L x T); differentiable."""
    crf = _as_layer(crf)
    e = emissions if isinstance(emissions, Tensor) else Tensor(emissions)
    L, T = e.shape
    return reshape(batch_log_partition(reshape(e, (L, 1, T)), crf), ())


def crf_path_score(emissions, crf, tags):
    crf = _as_layer(crf)
    e = emissions if isinstance(emissions, Tensor) else Tensor(emissions)
    L, T = e.shape
    tags = np.asarray(tags, dtype=np.int64).reshape(L, 1)
    return batch_path_score_total(reshape(e, (L, 1, T)), crf, tags, [L])


def viterbi_decode(emissions, crf):
    """Best path and its score; ties go to the lowest tag id."""
    e = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions, dtype=np.float64)
    if isinstance(crf, CrfLayer):
        trans, start, end = crf.arrays()
    else:
        trans, start, end = (np.asarray(a, dtype=np.float64) for a in crf)
    L, T = e.shape
    if L < 1:
        raise ValueError("viterbi_decode needs at least one position")
    score = start + e[0]
    back = np.zeros((L, T), dtype=np.int64)
    cols = np.arange(T)
    for t in range(1, L):
        cand = score[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], cols] + e[t]
    final = score + end
    best = int(np.argmax(final))
    path = [best]
    for t in range(L - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, float(final[best])
