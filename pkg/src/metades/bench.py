"""Replicated benchmark protocol, result persistence and table rendering."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .base import bagging_pool
from .baselines import BASELINES, MCB_THRESHOLD, MLA_EPSILON, run_baseline
from .dataset import GENERATORS, Dataset, load_csv, minmax_scaler, protocol_split
from .descore import MODES, DesConfig, evaluate_modes
from .metaclassifier import train_meta
from .metafeatures import EmptySelectionError, ReferenceCache, build_meta_dataset
from .stats import AccuracyTable, friedman_mean_ranks, wilcoxon_signed_rank

log = logging.getLogger(__name__)

RESULT_FORMAT = "metades-run"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on. ``dataset`` is a generator name or a CSV path."""

    name: str = "banana"
    dataset: str = "banana"
    n_samples: int = 1000
    label_column: str = "-1"
    replications: int = 20
    pool_size: int = 100
    epochs: int = 100
    learning_rate: float = 0.1
    support_slope: float = 1.0
    K: int = 7
    K_p: int = 5
    h_C: float = 0.70
    upsilon: float = 0.5
    posterior: str = "true"
    meta_train_fraction: float = 0.75
    modes: tuple[str, ...] = MODES
    baselines: tuple[str, ...] = tuple(BASELINES)
    include_majority: bool = True
    mcb_threshold: float = MCB_THRESHOLD
    mla_epsilon: float = MLA_EPSILON
    normalize: bool = True
    seed: int = 0
    jobs: int = 1
    output_dir: str = ""

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}; choose from {MODES}")
        for b in self.baselines:
            if b not in BASELINES:
                raise ValueError(f"unknown baseline {b!r}; choose from {tuple(BASELINES)}")
        self.des_config()

    def des_config(self) -> DesConfig:
        return DesConfig(self.K, self.K_p, self.h_C, self.upsilon, "H", self.posterior)

    @property
    def methods(self) -> list[str]:
        out = [f"META-DES.{m}" for m in self.modes] + list(self.baselines)
        return out + (["majority"] if self.include_majority else [])

    def snapshot(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        kwargs = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(fields[key].type, raw, key)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Parse a flat ``key = value`` file; ``#`` starts a comment.

        List values are comma-separated. A relative CSV dataset path is
        resolved against the config file's directory.
        """
        path = Path(path)
        values = {}
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        ds = values.get("dataset", "banana")
        if ds not in GENERATORS and not Path(ds).is_absolute():
            values["dataset"] = str((path.parent / ds).resolve())
        return cls.from_dict(values)


def _coerce(annotation, raw, key):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    t = str(annotation)
    try:
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        if t == "bool":
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if t.startswith("tuple"):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {t}") from None
    return raw


@dataclass
class RunResult:
    name: str
    config: dict
    seeds: list[int]
    methods: list[str]
    accuracies: dict[str, list[float]]
    meta_accuracy: list
    meta_sizes: list[int]
    meta_fallback: list[bool]
    diagnostics: list[str] = field(default_factory=list)

    def mean(self, method: str) -> float:
        return float(np.mean(self.accuracies[method]))

    def std(self, method: str) -> float:
        acc = self.accuracies[method]
        return float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0

    def summary(self) -> dict:
        return {m: {"mean": self.mean(m), "std": self.std(m)} for m in self.methods}

    def to_json(self) -> str:
        doc = {"format": RESULT_FORMAT, **dataclasses.asdict(self), "summary": self.summary()}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        doc = json.loads(text)
        if doc.pop("format", None) != RESULT_FORMAT:
            raise ValueError("not a run result document")
        doc.pop("summary", None)
        return cls(**doc)

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunResult":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def replication_seed(master_seed: int, r: int) -> int:
    """First 8 bytes (big endian) of sha256 of ``"<master_seed>:<r>"``."""
    digest = hashlib.sha256(f"{master_seed}:{r}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset in GENERATORS:
        return GENERATORS[cfg.dataset](cfg.n_samples, cfg.seed)
    label = cfg.label_column
    try:
        label = int(label)
    except ValueError:
        pass
    return load_csv(cfg.dataset, label)


def run_replication(cfg: ExperimentConfig, data: Dataset, r: int) -> dict:
    """One pass of the protocol; everything random derives from the replication seed."""
    seed = replication_seed(cfg.seed, r)
    split_seed, pool_seed, meta_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    part = protocol_split(data, split_seed)
    parts = (part.train, part.meta_train, part.dsel, part.test)
    if cfg.normalize:
        scale = minmax_scaler(part.train)
        parts = tuple(scale(p) for p in parts)
    train, meta_train, dsel, test = parts

    pool = bagging_pool(train, cfg.pool_size, cfg.epochs, cfg.learning_rate, pool_seed, cfg.support_slope)
    des = cfg.des_config()
    accuracies, diags = {}, []
    meta_acc, meta_size, fallback = None, 0, False
    cache = ReferenceCache(pool, dsel)
    if cfg.modes:
        try:
            meta = build_meta_dataset(pool, meta_train, des.K, des.K_p, des.h_C, posterior=des.posterior)
        except EmptySelectionError:
            log.warning("replication %d: no sample below h_C=%s, meta-training on all of the meta-training set",
                        r, des.h_C)
            fallback = True
            meta = build_meta_dataset(pool, meta_train, des.K, des.K_p, des.h_C,
                                      sample_ids=np.arange(len(meta_train)), posterior=des.posterior)
        model = train_meta(meta, cfg.meta_train_fraction, meta_seed)
        meta_acc, meta_size = model.validation_accuracy, len(meta)
        for m, ev in evaluate_modes(pool, model, test, dsel, des, cfg.modes, cache).items():
            accuracies[f"META-DES.{m}"] = ev.accuracy
            diags.extend(ev.diagnostics)
    others = list(cfg.baselines) + (["majority"] if cfg.include_majority else [])
    for name in others:
        options = {}
        if name == "MCB":
            options["similarity_threshold"] = cfg.mcb_threshold
        elif name == "MLA":
            options["epsilon"] = cfg.mla_epsilon
        acc, _, d = run_baseline(name, pool, test, dsel, des.K, cache, **options)
        accuracies[name] = acc
        diags.extend(d)
    for d in diags:
        d["replication"] = r
    return {"seed": seed, "accuracies": accuracies, "meta_accuracy": meta_acc, "meta_size": meta_size,
            "meta_fallback": fallback, "diagnostics": diags}


def _replication_job(args):
    cfg, data, r = args
    try:
        return run_replication(cfg, data, r)
    except Exception as exc:
        raise RuntimeError(f"replication {r} failed: {exc}") from exc


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None) -> RunResult:
    """Run every replication and collect accuracies in replication order.

    With ``cfg.output_dir`` set, per-query diagnostics are written there as
    JSON lines, one file per replication.
    """
    data = load_dataset(cfg) if data is None else data
    jobs = [(cfg, data, r) for r in range(cfg.replications)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            reps = list(ex.map(_replication_job, jobs))
    else:
        reps = [_replication_job(j) for j in jobs]

    paths = []
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r, rep in enumerate(reps):
            p = out / f"{cfg.name}_rep{r:02d}.jsonl"
            with p.open("w", encoding="utf-8") as fh:
                for rec in rep["diagnostics"]:
                    fh.write(json.dumps(rec) + "\n")
            paths.append(str(p))
    methods = cfg.methods
    return RunResult(
        name=cfg.name,
        config=cfg.snapshot(),
        seeds=[rep["seed"] for rep in reps],
        methods=methods,
        accuracies={m: [rep["accuracies"][m] for rep in reps] for m in methods},
        meta_accuracy=[rep["meta_accuracy"] for rep in reps],
        meta_sizes=[rep["meta_size"] for rep in reps],
        meta_fallback=[rep["meta_fallback"] for rep in reps],
        diagnostics=paths,
    )


def accuracy_table(results) -> AccuracyTable:
    """Percent mean/std per (result, method); methods in first-seen order."""
    methods = []
    for res in results:
        methods += [m for m in res.methods if m not in methods]
    means = np.full((len(results), len(methods)), np.nan)
    stds = np.full_like(means, np.nan)
    for i, res in enumerate(results):
        for j, m in enumerate(methods):
            if m in res.accuracies:
                means[i, j] = 100.0 * res.mean(m)
                stds[i, j] = 100.0 * res.std(m)
    if np.isnan(means).any():
        raise ValueError("every result must report every method to share a table")
    return AccuracyTable(tuple(methods), tuple(r.name for r in results), means, stds)


def _wilcoxon_cell(ref: np.ndarray, other: np.ndarray, alpha: float = 0.05) -> str:
    w = wilcoxon_signed_rank(other, ref)
    mark = "~"
    if w.p_value < alpha:
        mark = "+" if w.direction == "a>b" else "-"
    return f"{mark} (p={w.p_value:.4f})"


def emit_tables(results, fmt: str = "markdown", reference: str | None = None, ranks: bool = True) -> str:
    """Render ``mean(std)`` per dataset and method, in percent.

    ``reference`` adds a Wilcoxon row marking each other method ``+``/``-``
    when it is significantly better/worse than the reference over the
    datasets (``~`` otherwise). ``ranks`` adds the Friedman mean-rank row.
    """
    table = accuracy_table(list(results))
    rows = [[ds] + [f"{table.means[i, j]:.2f}({table.stddevs[i, j]:.2f})" for j in range(len(table.methods))]
            for i, ds in enumerate(table.datasets)]
    if reference is not None:
        ref = table.column(reference)
        rows.append(["Wilcoxon signed-rank"] + ["n/a" if m == reference else _wilcoxon_cell(ref, table.column(m))
                                                for m in table.methods])
    if ranks:
        rows.append(["Friedman mean rank"] + [f"{r:.2f}" for r in friedman_mean_ranks(table)])
    header = ["Dataset"] + list(table.methods)
    if fmt in ("md", "markdown"):
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        import csv
        import io
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows([header] + rows)
        return buf.getvalue()
    raise ValueError(f"unknown table format {fmt!r}")


def parse_table(text: str, fmt: str = "markdown") -> tuple[list[str], list[str], list[list[str]]]:
    """Split a rendered table back into header, first-column labels and cells."""
    if fmt in ("md", "markdown"):
        lines = [ln.strip() for ln in text.strip().splitlines()]
        rows = [[c.strip() for c in ln.strip("|").split("|")] for ln in lines if not ln.startswith("|-")]
    elif fmt == "csv":
        import csv
        import io
        rows = list(csv.reader(io.StringIO(text)))
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    header, body = rows[0], rows[1:]
    return header, [r[0] for r in body], [r[1:] for r in body]


def format_summary(res: RunResult) -> str:
    width = max(len(m) for m in res.methods)
    lines = [f"{res.name}: {len(res.seeds)} replications"]
    for m in res.methods:
        lines.append(f"  {m:<{width}}  {100 * res.mean(m):6.2f} ({100 * res.std(m):.2f})")
    meta = [a for a in res.meta_accuracy if a is not None and not math.isnan(a)]
    if meta:
        lines.append(f"  meta-classifier validation accuracy {100 * float(np.mean(meta)):.2f}")
    return "\n".join(lines)
