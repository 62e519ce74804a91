"""Experiment orchestration: prepare, poison, train, then evaluate, defend and certify.

An experiment is one JSON document.  Clean victims are trained once per
``(victim, seed)``; every ``(attack, seed)`` pair poisons the clean graph and
then trains fresh victims on the poisoned data, so no attack row ever sees
clean-trained weights.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import logging
import math
import multiprocessing
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import attacks as atk
from .certify import SmoothingConfig, certify_set
from .defense import PurifyConfig, purify
from .embed import build_vocab, bow_embed, load_embeddings, tfidf_embed
from .errors import ConfigError, PoisonBenchError
from .metrics import accuracy, embedding_metrics, rda
from .tagraph import SbmParams, generate_synthetic_tag, load_graph, load_graph_dir, split_nodes
from .victims import ARCH_KINDS, GnnArch, TrainConfig, predict, train_gnn

logger = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "dataset", "embedding", "arch", "attack", "budget", "seed", "acc_clean", "acc_attack", "rda",
    "dbi", "sil", "hom", "elmi", "esmi", "ncon", "ca", "mcr", "wall_ms",
)
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
EMBEDDING_KINDS = ("bow", "tfidf", "external")
DEFAULT_RATES = {"dice": (0.10, 0.40), "meta": (0.05, 0.20), "random": (0.05, 0.20)}
DEFAULT_PER_TARGET = (1, 2, 3, 4, 5)
DEFAULT_TEXT_EDITS = 3
THREADS_ENV = "POISONBENCH_THREADS"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class AttackSpec:
    """One attack at one budget.  ``structural`` or ``textual`` may be empty, not both."""

    structural: str = ""
    textual: str = ""
    rate: float = 0.0
    per_target: int = 0
    edits: int = 0
    min_degree: int = 10
    sample_rate: float = 1.0
    oracle_labels: bool = False
    seeds: tuple = ()
    options: tuple = ()

    @property
    def name(self):
        return "+".join(p for p in (self.structural, self.textual) if p)

    @property
    def targeted(self):
        return self.structural in ("targeted", "random_target")

    @property
    def budget_level(self):
        """Number written to the report's budget column."""
        if self.structural:
            return float(self.per_target) if self.targeted else float(self.rate)
        return float(self.edits)

    def budget(self):
        if self.targeted:
            return atk.BudgetSpec.targeted(self.per_target, self.edits)
        return atk.BudgetSpec.rate(self.rate, self.edits)

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["options"] = dict(self.options)
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    embedding: dict
    victims: tuple
    attacks: tuple
    seeds: tuple = DEFAULT_SEEDS
    split: dict = field(default_factory=lambda: {"train_frac": 0.1, "val_frac": 0.1, "seed": 0})
    train: dict = field(default_factory=dict)
    defense: dict = field(default_factory=dict)
    certification: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=lambda: {"enabled": True})
    clean_eval: bool = True
    output_dir: str = "results"
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def dataset_name(self):
        return self.dataset.get("name") or ("sbm" if "sbm" in self.dataset else "graph")

    def train_config(self, seed):
        return TrainConfig(seed=int(seed), **self.train)

    def to_dict(self):
        return self.raw


def _expand_attack(entry, where, problems):
    """Turn one attack entry (possibly carrying budget lists) into AttackSpecs."""
    if not isinstance(entry, dict) or "name" not in entry:
        problems.append(f"{where}: attack entries need a 'name'")
        return []
    parts = str(entry["name"]).split("+")
    structural = [p for p in parts if p in atk.STRUCTURAL_ATTACKS]
    textual = [p for p in parts if p in atk.TEXTUAL_ATTACKS]
    unknown = [p for p in parts if p not in atk.STRUCTURAL_ATTACKS + atk.TEXTUAL_ATTACKS]
    if unknown or len(structural) > 1 or len(textual) > 1:
        problems.append(f"{where}: cannot parse attack name {entry['name']!r}")
        return []
    s = structural[0] if structural else ""
    t = textual[0] if textual else ""
    seeds = tuple(int(x) for x in entry.get("seeds", ()))
    common = dict(
        structural=s,
        textual=t,
        min_degree=int(entry.get("min_degree", 10)),
        sample_rate=float(entry.get("sample_rate", 1.0)),
        oracle_labels=bool(entry.get("oracle_labels", False)),
        seeds=seeds,
        options=tuple(sorted(entry.get("options", {}).items())),
    )

    def as_list(key, default):
        v = entry.get(key, default)
        return list(v) if isinstance(v, (list, tuple)) else [v]

    edits = as_list("edits", DEFAULT_TEXT_EDITS if t else 0)
    if s in ("targeted", "random_target"):
        levels = [("per_target", int(k)) for k in as_list("per_target", DEFAULT_PER_TARGET)]
        for _, k in levels:
            if not 1 <= k <= 5:
                problems.append(f"{where}: per_target={k} not in [1, 5]")
    elif s:
        levels = [("rate", float(r)) for r in as_list("rate", DEFAULT_RATES.get(s, (0.05, 0.20)))]
        for _, r in levels:
            if not 0.0 <= r <= 1.0:
                problems.append(f"{where}: rate={r} not in [0, 1]")
    else:
        levels = [(None, None)]
    specs = []
    for key, level in levels:
        for e in edits:
            if int(e) < 0:
                problems.append(f"{where}: edits must be non-negative")
            kw = dict(common, edits=int(e))
            if key:
                kw[key] = level
            specs.append(AttackSpec(**kw))
    return specs


def _check_sbm(d, problems):
    try:
        params = SbmParams(**d)
        params.validate()
        return params
    except TypeError as exc:
        problems.append(f"dataset.sbm: {exc}")
    except ConfigError as exc:
        problems.append(f"dataset.sbm: {exc}")
    return None


def parse_config(doc, base_dir=None):
    """Validate a config document, reporting every problem in one :class:`ConfigError`."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    problems = []

    def path_of(p):
        q = Path(p)
        return q if q.is_absolute() else base / q

    dataset = dict(doc.get("dataset") or {})
    if "sbm" in dataset:
        _check_sbm(dataset["sbm"], problems)
    elif "path" in dataset:
        if not path_of(dataset["path"]).is_dir():
            problems.append(f"dataset.path {dataset['path']!r} is not a directory")
        else:
            dataset["path"] = str(path_of(dataset["path"]))
    elif {"edges", "texts", "labels"} <= dataset.keys():
        for key in ("edges", "texts", "labels"):
            if not path_of(dataset[key]).is_file():
                problems.append(f"dataset.{key} {dataset[key]!r} does not exist")
            else:
                dataset[key] = str(path_of(dataset[key]))
    else:
        problems.append("dataset needs 'sbm' parameters, a 'path' directory, or edges/texts/labels files")

    embedding = dict(doc.get("embedding") or {"kind": "bow"})
    kind = embedding.get("kind")
    if kind not in EMBEDDING_KINDS:
        problems.append(f"embedding.kind must be one of {EMBEDDING_KINDS}, got {kind!r}")
    elif kind == "external":
        if "path" not in embedding or not path_of(embedding["path"]).is_file():
            problems.append("embedding.path must name an existing embedding file")
        else:
            embedding["path"] = str(path_of(embedding["path"]))

    victims = []
    for i, v in enumerate(doc.get("victims") or []):
        v = {"arch": v} if isinstance(v, str) else dict(v)
        if v.get("arch") not in ARCH_KINDS:
            problems.append(f"victims[{i}]: arch must be one of {ARCH_KINDS}")
            continue
        try:
            GnnArch(kind=v["arch"], **{k: x for k, x in v.items() if k != "arch"})
        except (TypeError, ConfigError) as exc:
            problems.append(f"victims[{i}]: {exc}")
            continue
        victims.append(v)
    if not victims:
        problems.append("at least one victim is required")

    seeds = doc.get("seeds", list(DEFAULT_SEEDS))
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        problems.append("seeds must be a non-empty list of integers")
        seeds = list(DEFAULT_SEEDS)

    attacks = []
    for i, entry in enumerate(doc.get("attacks") or []):
        attacks.extend(_expand_attack(entry, f"attacks[{i}]", problems))
    clean_eval = bool(doc.get("clean_eval", True))
    if not attacks and not clean_eval:
        problems.append("nothing to do: no attacks and clean_eval is false")
    if kind == "external" and any(a.textual for a in attacks):
        problems.append("textual attacks need a text-derived embedding (bow or tfidf)")

    train = dict(doc.get("train") or {})
    if "seed" in train:
        problems.append("train.seed is not allowed; training seeds come from 'seeds'")
    try:
        TrainConfig(**train)
    except (TypeError, ConfigError) as exc:
        problems.append(f"train: {exc}")

    split = {"train_frac": 0.1, "val_frac": 0.1, "seed": 0, **(doc.get("split") or {})}
    if not (0 < split["train_frac"] and 0 <= split["val_frac"] and split["train_frac"] + split["val_frac"] < 1):
        problems.append("split fractions must satisfy 0 < train, 0 <= val, train + val < 1")

    defense = dict(doc.get("defense") or {})
    if defense.get("enabled"):
        try:
            _purify_config(defense, 0.0)
        except (TypeError, ConfigError) as exc:
            problems.append(f"defense: {exc}")

    certification = dict(doc.get("certification") or {})
    if certification.get("enabled"):
        try:
            _smoothing_config(certification, 0)
        except (TypeError, ConfigError) as exc:
            problems.append(f"certification: {exc}")

    unknown = set(doc) - {"dataset", "embedding", "victims", "attacks", "seeds", "split", "train",
                          "defense", "certification", "metrics", "clean_eval", "output_dir"}
    if unknown:
        problems.append(f"unknown config keys: {sorted(unknown)}")

    if problems:
        raise ConfigError("invalid experiment config:\n  - " + "\n  - ".join(problems))
    return ExperimentConfig(
        dataset=dataset,
        embedding=embedding,
        victims=tuple(victims),
        attacks=tuple(attacks),
        seeds=tuple(seeds),
        split=split,
        train=train,
        defense=defense,
        certification=certification,
        metrics=dict(doc.get("metrics") or {"enabled": True}),
        clean_eval=clean_eval,
        output_dir=str(path_of(doc.get("output_dir", "results"))),
        raw=json.loads(json.dumps(doc)),
    )


def load_config(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_config(doc, base_dir=path.parent)


def _purify_config(spec, rate):
    extra = {k: v for k, v in spec.items() if k != "enabled"}
    if not extra:
        return PurifyConfig.default(rate)
    return PurifyConfig(**extra)


def _smoothing_config(spec, seed):
    keys = {"p_del", "num_samples", "alpha"}
    return SmoothingConfig(seed=int(seed), **{k: v for k, v in spec.items() if k in keys})


# ---------------------------------------------------------------------------
# pipeline pieces


def load_dataset(cfg):
    d = cfg.dataset
    if "sbm" in d:
        return generate_synthetic_tag(SbmParams(**d["sbm"]))
    if "path" in d:
        return load_graph_dir(d["path"])
    return load_graph(d["edges"], d["texts"], d["labels"])


def featurize(graph, embedding):
    """Node features for ``graph``; text-derived kinds use a vocabulary built from its texts."""
    kind = embedding["kind"]
    if kind == "external":
        return load_embeddings(embedding["path"], expected_rows=graph.num_nodes,
                               normalize=bool(embedding.get("normalize", False)))
    vocab = build_vocab(graph.texts, embedding.get("max_vocab"), embedding.get("min_df", 1))
    return bow_embed(graph.texts, vocab) if kind == "bow" else tfidf_embed(graph.texts, vocab)


def poison(graph, features, split, spec, seed):
    """Run one attack on the clean inputs.  Returns ``(pset, poisoned_graph, eval_nodes)``.

    Targeted rows are scored on their target nodes, the rest on the test split.
    """
    budget = spec.budget()
    options = dict(spec.options)
    eval_nodes = np.asarray(split.test)
    targets = None
    if spec.targeted:
        targets = atk.select_targets(graph, split, spec.min_degree, spec.sample_rate, seed)
        eval_nodes = np.asarray(targets.nodes)
    if spec.structural and spec.textual:
        pset = atk.combined_attack(graph, features, split, (spec.structural, budget),
                                   (spec.textual, spec.edits), seed,
                                   oracle_labels=spec.oracle_labels, targets=targets, **options)
    elif spec.structural:
        pset = atk.structural_attack(spec.structural, graph, features, split, budget, seed,
                                     oracle_labels=spec.oracle_labels, targets=targets, **options)
    else:
        pset = atk.textual_attack(spec.textual, graph, split, spec.edits, seed)
    return pset, atk.apply_perturbation(graph, pset), eval_nodes


def _victim_arch(v):
    return GnnArch(kind=v["arch"], **{k: x for k, x in v.items() if k != "arch"})


def _victim_label(v):
    return v["arch"]


@dataclass
class ReportRow:
    dataset: str
    embedding: str
    arch: str
    attack: str
    budget: float
    seed: int
    acc_clean: float | None = None
    acc_attack: float | None = None
    rda: float | None = None
    dbi: float | None = None
    sil: float | None = None
    hom: float | None = None
    elmi: float | None = None
    esmi: float | None = None
    ncon: float | None = None
    ca: float | None = None
    mcr: float | None = None
    wall_ms: float | None = None
    error: str | None = None
    provenance: dict = field(default_factory=dict)

    def csv_values(self):
        out = []
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{f.name: d.get(f.name) for f in fields(cls) if f.name in d})


def _as_float(x):
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _fill_metrics(row, bundle):
    if bundle is None:
        return
    row.dbi = _as_float(bundle.dbi)
    row.sil = _as_float(bundle.silhouette)
    row.hom = _as_float(bundle.homophily_k)
    row.elmi = _as_float(bundle.elmi)
    row.esmi = _as_float(bundle.esmi)
    row.ncon = _as_float(bundle.ncon)


def _metrics_for(cfg, graph, features, seed):
    m = cfg.metrics
    if not m.get("enabled", True):
        return None
    return embedding_metrics(features, graph, k=m.get("k", 10), bins=m.get("bins", 10),
                             sample_cap=m.get("sample_cap", 2000), seed=seed)


def _certify_into(row, cfg, model, graph, features, nodes, seed):
    spec = cfg.certification
    if not spec.get("enabled"):
        return
    cap = spec.get("max_nodes")
    nodes = np.asarray(nodes)
    if cap is not None and len(nodes) > cap:
        nodes = np.sort(np.random.default_rng(seed).choice(nodes, cap, replace=False))
    res = certify_set(model, graph, features, nodes, cfg=_smoothing_config(spec, seed),
                      correct_by=spec.get("correct_by", "smoothed"), graph_label=row.attack)
    row.ca = res.certified_accuracy
    row.mcr = res.mean_certified_radius
    row.provenance["mcr_certified_only"] = _as_float(res.mcr_certified_only)
    row.provenance["certified_graph"] = graph.content_hash()


# ---------------------------------------------------------------------------
# units of work (module level so worker processes can import them)


def _clean_unit(cfg, victim_idx, seed):
    """Train the clean victim for one (victim, seed); returns its predictions and a row."""
    t0 = time.perf_counter()
    graph, split, features = _prepare(cfg)
    v = cfg.victims[victim_idx]
    row = ReportRow(cfg.dataset_name, cfg.embedding["kind"], _victim_label(v), "clean", 0.0, int(seed),
                    provenance={"victim": v, "train": cfg.train, "split": cfg.split, "attack": None})
    pred = None
    try:
        model = train_gnn(_victim_arch(v), graph, features, split, cfg.train_config(seed))
        pred, _ = predict(model, graph, features)
        row.acc_clean = accuracy(pred, graph.labels, split.test)
        _fill_metrics(row, _metrics_for(cfg, graph, features, seed))
        _certify_into(row, cfg, model, graph, features, split.test, seed)
    except PoisonBenchError as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    row.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return row, pred


def _attack_unit(cfg, attack_idx, seed, clean_preds):
    """Poison once for (attack, seed), then train and score every victim on the result."""
    t0 = time.perf_counter()
    graph, split, features = _prepare(cfg)
    spec = cfg.attacks[attack_idx]
    rows = []
    base = dict(attack=spec.to_dict(), train=cfg.train, split=cfg.split)
    try:
        pset, poisoned, eval_nodes = poison(graph, features, split, spec, seed)
        p_features = featurize(poisoned, cfg.embedding) if spec.textual else features
        bundle = _metrics_for(cfg, poisoned, p_features, seed)
        stage = [(spec.name, poisoned, p_features, bundle)]
        if cfg.defense.get("enabled"):
            pcfg = _purify_config(cfg.defense, spec.rate if not spec.targeted else 0.0)
            purified = purify(poisoned, p_features, pcfg)
            stage.append((spec.name + "+purify", purified, p_features,
                          _metrics_for(cfg, purified, p_features, seed)))
        poison_ms = 1000.0 * (time.perf_counter() - t0)
    except PoisonBenchError as exc:
        for v in cfg.victims:
            row = ReportRow(cfg.dataset_name, cfg.embedding["kind"], _victim_label(v), spec.name,
                            spec.budget_level, int(seed), error=f"{type(exc).__name__}: {exc}",
                            provenance=dict(base, victim=v))
            row.wall_ms = 1000.0 * (time.perf_counter() - t0)
            rows.append(row)
        return rows

    for vi, v in enumerate(cfg.victims):
        for name, g, feats, bundle in stage:
            t1 = time.perf_counter()
            row = ReportRow(cfg.dataset_name, cfg.embedding["kind"], _victim_label(v), name,
                            spec.budget_level, int(seed),
                            provenance=dict(base, victim=v, perturbation=pset.content_hash(),
                                            poisoned_graph=g.content_hash(),
                                            eval_nodes=len(eval_nodes),
                                            attack_warnings=list(pset.warnings)))
            try:
                clean_pred = clean_preds.get((vi, int(seed)))
                if clean_pred is None:
                    raise PoisonBenchError("clean baseline unavailable for this victim and seed")
                row.acc_clean = accuracy(clean_pred, graph.labels, eval_nodes)
                # fresh victim on the poisoned data; nothing is shared with the clean run
                model = train_gnn(_victim_arch(v), g, feats, split, cfg.train_config(seed))
                pred, _ = predict(model, g, feats)
                row.acc_attack = accuracy(pred, graph.labels, eval_nodes)
                row.rda = rda(row.acc_clean, row.acc_attack)
                _fill_metrics(row, bundle)
                _certify_into(row, cfg, model, g, feats, eval_nodes, seed)
            except PoisonBenchError as exc:
                row.error = f"{type(exc).__name__}: {exc}"
            row.wall_ms = poison_ms + 1000.0 * (time.perf_counter() - t1)
            rows.append(row)
    return rows


_PREP_CACHE = {}


def _prepare(cfg):
    key = json.dumps([cfg.dataset, cfg.embedding, cfg.split], sort_keys=True)
    if key not in _PREP_CACHE:
        _PREP_CACHE.clear()
        graph = load_dataset(cfg)
        split = split_nodes(graph, cfg.split["train_frac"], cfg.split["val_frac"], cfg.split["seed"])
        _PREP_CACHE[key] = (graph, split, featurize(graph, cfg.embedding))
    return _PREP_CACHE[key]


def worker_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _run_units(fn, jobs, workers):
    """Map ``fn`` over ``jobs`` and return results in job order, whatever the worker count."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    ctx = multiprocessing.get_context("spawn")
    with concurrent.futures.ProcessPoolExecutor(min(workers, len(jobs)), mp_context=ctx) as pool:
        futures = [pool.submit(fn, *j) for j in jobs]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# report


@dataclass
class RobustnessReport:
    config: dict
    seeds: tuple
    rows: list

    def to_dict(self):
        return {
            "config": self.config,
            "seeds": list(self.seeds),
            "columns": list(REPORT_COLUMNS),
            "rows": [r.to_dict() for r in self.rows],
            "content_hash": self.content_hash(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["config"], tuple(d["seeds"]), [ReportRow.from_dict(r) for r in d["rows"]])

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def content_hash(self):
        """Hash of the config and every row, leaving out wall-clock timings."""
        rows = []
        for r in self.rows:
            d = r.to_dict()
            d.pop("wall_ms")
            rows.append(d)
        blob = json.dumps({"config": self.config, "seeds": list(self.seeds), "rows": rows},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_values())
        return buf.getvalue()

    def attack_rows(self):
        return [r for r in self.rows if r.attack != "clean"]

    def __eq__(self, other):
        if not isinstance(other, RobustnessReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def run_experiment(cfg):
    """Execute the whole pipeline and return the report (rows in a fixed order).

    Clean rows come first, ordered by (victim, seed); then one row per
    (attack, seed, victim), plus a purified row when a defense is configured.
    Failing rows keep their error message and the run carries on.
    """
    workers = worker_count()
    logger.info("seeds: %s", list(cfg.seeds))
    clean_jobs = [(cfg, vi, s) for vi in range(len(cfg.victims)) for s in cfg.seeds]
    clean = _run_units(_clean_unit, clean_jobs, workers)
    clean_preds = {(vi, int(s)): pred for (cfg_, vi, s), (_, pred) in zip(clean_jobs, clean)}
    rows = [row for row, _ in clean] if cfg.clean_eval else []
    attack_jobs = [(cfg, ai, s, clean_preds)
                   for ai, spec in enumerate(cfg.attacks) for s in (spec.seeds or cfg.seeds)]
    for chunk in _run_units(_attack_unit, attack_jobs, workers):
        rows.extend(chunk)
    return RobustnessReport(cfg.to_dict(), tuple(cfg.seeds), rows)


def _plot_series(report, attack, arch):
    pts = {}
    for r in report.attack_rows():
        if r.attack == attack and r.arch == arch and r.acc_attack is not None:
            pts.setdefault(r.budget, []).append((r.acc_attack, r.rda))
    out = []
    for b in sorted(pts):
        acc = float(np.mean([p[0] for p in pts[b]]))
        drop = float(np.mean([p[1] for p in pts[b]]))
        out.append((b, acc, drop))
    return out


def emit_report(report, out_dir, formats=("csv", "json")):
    """Write ``report.csv`` / ``report.json`` plus ``plots/`` series; returns the written paths."""
    if not report.rows:
        raise ConfigError("cannot emit an empty report")
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ConfigError(f"unknown report formats {sorted(bad)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = out / "report.csv"
        p.write_text(report.to_csv(), encoding="utf-8")
        written.append(p)
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report.to_json(), encoding="utf-8")
        written.append(p)
    plots = out / "plots"
    pairs = sorted({(r.attack, r.arch) for r in report.attack_rows()})
    if pairs:
        plots.mkdir(exist_ok=True)
    for attack, arch in pairs:
        series = _plot_series(report, attack, arch)
        if not series:
            continue
        stem = f"{attack}_{arch}".replace("+", "-")
        for col, idx in (("acc", 1), ("rda", 2)):
            p = plots / f"{stem}_budget_vs_{col}.csv"
            lines = [f"budget,{col}"] + [f"{s[0]!r},{s[idx]!r}" for s in series]
            p.write_text("\n".join(lines) + "\n", encoding="utf-8")
            written.append(p)
    return written


def load_report(path):
    return RobustnessReport.from_json(Path(path).read_text(encoding="utf-8"))
