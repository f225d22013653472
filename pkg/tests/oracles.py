"""Naive reference implementations used as independent test oracles."""

from itertools import product


def brute_spans(tags):
    """Every (i, j, T) that is a maximal conlleval chunk, found by enumeration."""
    out = set()
    n = len(tags)
    for i, j in product(range(n), range(n)):
        if j < i or tags[i] == "O":
            continue
        t = tags[i][2:]
        opens = tags[i] == f"B-{t}" or i == 0 or tags[i - 1] not in (f"B-{t}", f"I-{t}")
        inside = all(tags[k] == f"I-{t}" for k in range(i + 1, j + 1))
        closes = j == n - 1 or tags[j + 1] != f"I-{t}"
        if opens and inside and closes:
            out.add((i, j, t))
    return out


def brute_f1(gold, pred):
    tp = n_p = n_g = 0
    for g, p in zip(gold, pred):
        gs, ps = brute_spans(g), brute_spans(p)
        n_g += len(gs)
        n_p += len(ps)
        tp += sum(1 for s in ps if s in gs)
    prec = tp / n_p if n_p else 0.0
    rec = tp / n_g if n_g else 0.0
    return prec, rec, (2 * prec * rec / (prec + rec) if prec + rec else 0.0)


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y != 1]
    wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
    return wins / (len(pos) * len(neg))
