"""Character- and word-level text poisoning against a shallow bag-of-words surrogate."""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..embed import build_vocab, count_matrix, token_spans
from ..errors import ValidationError
from ..surrogate import fit_softmax_regression
from .perturbation import BudgetSpec, PerturbationSet, TextEdit, apply_text_edit

LETTERS = string.ascii_lowercase
MIN_CHAR_TOKEN_LEN = 3


@dataclass(eq=False)
class TextSurrogate:
    """Multinomial logistic regression on bag-of-words counts."""

    vocab: object
    W: np.ndarray
    b: np.ndarray

    @property
    def num_classes(self):
        return self.W.shape[1]

    def logits(self, texts):
        return count_matrix(texts, self.vocab) @ self.W + self.b

    def predict(self, texts):
        return self.logits(texts).argmax(axis=1)

    def loss(self, logits, label):
        return float(logsumexp(logits) - logits[label])


def train_text_surrogate(texts, labels, nodes, vocab=None, num_classes=None, weight_decay=5e-4):
    """Fit the text surrogate on the texts/labels of ``nodes`` (the attacker's labeled set)."""
    texts = list(texts)
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise ValidationError("no labeled nodes to train the text surrogate on")
    if vocab is None:
        vocab = build_vocab(texts)
    labels = np.asarray(labels)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    X = count_matrix([texts[i] for i in nodes], vocab)
    W, b = fit_softmax_regression(X, labels[nodes], num_classes, weight_decay)
    return TextSurrogate(vocab, W, b)


def _char_variants(token):
    """``(op, offset_in_token, payload, new_token)`` for every single-character edit."""
    out = []
    L = len(token)
    for i in range(L - 1):
        if token[i] != token[i + 1]:
            out.append(("swap", i, "", token[:i] + token[i + 1] + token[i] + token[i + 2 :]))
    for i in range(L):
        out.append(("delete", i, "", token[:i] + token[i + 1 :]))
        for ch in LETTERS:
            if ch != token[i]:
                out.append(("substitute", i, ch, token[:i] + ch + token[i + 1 :]))
    for i in range(L + 1):
        for ch in LETTERS:
            out.append(("insert", i, ch, token[:i] + ch + token[i:]))
    return out


class _NodeState:
    def __init__(self, clf, text):
        self.clf = clf
        self.text = text
        self.logits = clf.logits([text])[0]
        self.label = int(np.argmax(self.logits))

    def loss_with(self, delta):
        return self.clf.loss(self.logits + delta, self.label)

    def row(self, token):
        j = None if token is None else self.clf.vocab.get(token)
        return None if j is None else self.clf.W[j]

    def swap_delta(self, old, new):
        d = np.zeros_like(self.logits)
        r_old, r_new = self.row(old), self.row(new)
        if r_old is not None:
            d -= r_old
        if r_new is not None:
            d += r_new
        return d

    def importance(self, eligible, spans):
        """Leave-one-out loss increase per eligible token ordinal, most important first."""
        cur = self.loss_with(0.0)
        scored = []
        for k in eligible:
            r = self.row(spans[k][2])
            gain = 0.0 if r is None else self.loss_with(-r) - cur
            scored.append((-gain, k))
        scored.sort()
        return [k for _, k in scored]


def char_attack_text(text, clf, edits_per_node, rng, node=0):
    """Greedy adversarial typos for one text.

    Returns ``(new_text, edits, losses)`` where ``losses[i]`` is the surrogate loss
    after ``i`` edits.  Tokens shorter than three characters are never touched and
    each token is edited at most once.
    """
    state = _NodeState(clf, text)
    losses = [state.loss_with(0.0)]
    edits = []
    edited = set()
    for _ in range(edits_per_node):
        spans = token_spans(state.text)
        eligible = [k for k, (s, e, tok) in enumerate(spans)
                    if k not in edited and e - s >= MIN_CHAR_TOKEN_LEN]
        applied = False
        for k in state.importance(eligible, spans):
            start, end, tok = spans[k]
            variants = _char_variants(tok)
            oov_loss = state.loss_with(state.swap_delta(tok, None))
            cache = {}
            scores = np.empty(len(variants))
            for i, (_, _, _, new_tok) in enumerate(variants):
                if new_tok not in clf.vocab:
                    scores[i] = oov_loss
                    continue
                if new_tok not in cache:
                    cache[new_tok] = state.loss_with(state.swap_delta(tok, new_tok))
                scores[i] = cache[new_tok]
            best = scores.max()
            if best <= losses[-1]:
                continue
            ties = np.flatnonzero(scores == best)
            op, off, payload, _ = variants[int(ties[rng.integers(len(ties))])]
            edit = TextEdit(node, op, start + off, payload)
            state.text = apply_text_edit(state.text, op, start + off, payload)
            state.logits = clf.logits([state.text])[0]
            edits.append(edit)
            edited.add(k)
            losses.append(state.loss_with(0.0))
            applied = True
            break
        if not applied:
            break
    return state.text, edits, losses


def word_attack_text(text, clf, vocab, edits_per_node, top_k=50, node=0):
    """Greedy word substitution for one text.

    The most important tokens (leave-one-out) are replaced, one per edit, by the
    candidate among the ``top_k`` most frequent vocabulary tokens that maximizes
    the surrogate loss.  A replacement is only made when it strictly increases
    the loss, so the loss trace is non-decreasing.
    """
    candidates = list(vocab.tokens[:top_k])
    cand_rows = np.array([clf.W[j] if (j := clf.vocab.get(c)) is not None else np.zeros(clf.num_classes)
                          for c in candidates]).reshape(len(candidates), clf.num_classes)
    state = _NodeState(clf, text)
    losses = [state.loss_with(0.0)]
    edits = []
    replaced = set()
    for _ in range(edits_per_node):
        spans = token_spans(state.text)
        eligible = [k for k in range(len(spans)) if k not in replaced]
        applied = False
        for k in state.importance(eligible, spans):
            start, _, tok = spans[k]
            old_row = state.row(tok)
            logits = state.logits + cand_rows - (0.0 if old_row is None else old_row)
            vals = logsumexp(logits, axis=1) - logits[:, state.label]
            vals[[i for i, c in enumerate(candidates) if c == tok]] = -np.inf
            if len(vals) == 0 or vals.max() <= losses[-1]:
                continue
            best_tok = candidates[int(np.argmax(vals))]
            edit = TextEdit(node, "replace", start, best_tok)
            state.text = apply_text_edit(state.text, "replace", start, best_tok)
            state.logits = clf.logits([state.text])[0]
            edits.append(edit)
            replaced.add(k)
            losses.append(state.loss_with(0.0))
            applied = True
            break
        if not applied:
            break
    return state.text, edits, losses


def _nodes(texts, nodes):
    return range(len(texts)) if nodes is None else [int(i) for i in nodes]


def char_attack(texts, clf, edits_per_node, seed, nodes=None):
    """Character-level attack over many texts; returns a :class:`PerturbationSet`.

    Empty texts are skipped and noted in the set's warnings.
    """
    texts = list(texts)
    rng = np.random.default_rng(seed)
    pset = PerturbationSet("char", seed, BudgetSpec.textual(edits_per_node))
    if edits_per_node == 0:
        return pset
    for i in _nodes(texts, nodes):
        if not token_spans(texts[i]):
            pset.warnings.append(f"node {i}: empty text skipped")
            continue
        _, edits, _ = char_attack_text(texts[i], clf, edits_per_node, rng, node=i)
        pset.text_edits.extend(edits)
    return pset


def word_attack(texts, clf, vocab, edits_per_node, seed, nodes=None, top_k=50):
    """Word-substitution attack over many texts; returns a :class:`PerturbationSet`."""
    texts = list(texts)
    pset = PerturbationSet("word", seed, BudgetSpec.textual(edits_per_node))
    if edits_per_node == 0:
        return pset
    for i in _nodes(texts, nodes):
        if not token_spans(texts[i]):
            pset.warnings.append(f"node {i}: empty text skipped")
            continue
        _, edits, _ = word_attack_text(texts[i], clf, vocab, edits_per_node, top_k, node=i)
        pset.text_edits.extend(edits)
    return pset


def random_char_edits(texts, edits_per_node, seed, nodes=None):
    """Same-budget baseline: random single-character edits on random eligible tokens."""
    texts = list(texts)
    rng = np.random.default_rng(seed)
    pset = PerturbationSet("random_char", seed, BudgetSpec.textual(edits_per_node))
    for i in _nodes(texts, nodes):
        text = texts[i]
        edited = set()
        for _ in range(edits_per_node):
            spans = token_spans(text)
            eligible = [k for k, (s, e, _) in enumerate(spans)
                        if k not in edited and e - s >= MIN_CHAR_TOKEN_LEN]
            if not eligible:
                break
            k = eligible[rng.integers(len(eligible))]
            start, _, tok = spans[k]
            variants = _char_variants(tok)
            op, off, payload, _ = variants[rng.integers(len(variants))]
            text = apply_text_edit(text, op, start + off, payload)
            pset.text_edits.append(TextEdit(i, op, start + off, payload))
            edited.add(k)
    return pset
