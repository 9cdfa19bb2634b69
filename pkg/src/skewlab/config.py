"""Experiment configuration: strict INI with defaults for every key.

Unknown sections or keys are rejected with their file line number -- a typo
must never silently fall back to a default. An empty file parses to the
default benchmark configuration; ``resolved_ini`` writes back the fully
explicit form, and parsing that text reproduces the config exactly
(round-trip contract). ``config_hash`` fingerprints the resolved form.
"""

import configparser
import hashlib
import io
import os
import re
from dataclasses import dataclass

from .augment import AugmentConfig
from .backbone import BackboneLossConfig
from .balance import BalanceConfig
from .data import ImbalanceProfile
from .model import ModelConfig
from .train import TrainConfig

ENV_OUTPUT_ROOT = "SKEWLAB_OUT"
DEFAULT_OUTPUT_ROOT = "skewlab_runs"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "generated"        # generated | csv
    profile: str = "lt"            # lt | step
    n_classes: int = 10
    n_largest: int = 500
    imbalance_ratio: float = 100.0
    dim: int = 8
    spread: float = 6.0
    labeled_fraction: float = 0.2
    seed: int = 0
    test_per_class: int = 200
    csv_path: str = ""

    def __post_init__(self):
        if self.kind not in ("generated", "csv"):
            raise ConfigError(f"dataset.kind must be generated|csv, got {self.kind!r}")
        if self.kind == "csv" and not self.csv_path:
            raise ConfigError("dataset.kind=csv requires dataset.csv_path")
        if not 0.0 < self.labeled_fraction < 1.0:
            raise ConfigError(
                f"dataset.labeled_fraction must be in (0, 1), got {self.labeled_fraction}"
            )
        if self.test_per_class < 1:
            raise ConfigError("dataset.test_per_class must be >= 1")
        # delegate profile validation
        ImbalanceProfile(self.profile, self.n_classes, self.n_largest, self.imbalance_ratio)

    def imbalance_profile(self):
        return ImbalanceProfile(self.profile, self.n_classes, self.n_largest,
                                self.imbalance_ratio)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    augment: AugmentConfig
    backbone: BackboneLossConfig
    balance: BalanceConfig
    train: TrainConfig
    hidden: tuple = (128, 128)
    representation_dim: int = 32
    seeds: tuple = (1, 2, 3, 4, 5)
    output_dir: str = ""

    def model_config(self):
        return ModelConfig(
            input_dim=self.dataset.dim,
            n_classes=self.dataset.n_classes,
            hidden=self.hidden,
            representation_dim=self.representation_dim,
        )


def default_config():
    """The benchmark configuration every acceptance figure refers to."""
    return ExperimentConfig(
        dataset=DatasetConfig(),
        augment=AugmentConfig(),
        backbone=BackboneLossConfig(),
        balance=BalanceConfig(),
        train=TrainConfig(),
    )


# ---------------------------------------------------------------------------
# schema: section -> key -> (python type, extractor name)
# ---------------------------------------------------------------------------

def _parse_bool(s, where):
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {s!r}")


def _parse_int(s, where):
    try:
        return int(s.strip())
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {s!r}") from None


def _parse_float(s, where):
    try:
        return float(s.strip())
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {s!r}") from None


def _parse_int_list(s, where):
    items = [p.strip() for p in s.split(",") if p.strip()]
    if not items:
        raise ConfigError(f"{where}: expected a comma-separated integer list, got {s!r}")
    return tuple(_parse_int(p, where) for p in items)


def _parse_str(s, where):
    return s.strip()


_SCHEMA = {
    "dataset": {
        "kind": _parse_str,
        "profile": _parse_str,
        "n_classes": _parse_int,
        "n_largest": _parse_int,
        "imbalance_ratio": _parse_float,
        "dim": _parse_int,
        "spread": _parse_float,
        "labeled_fraction": _parse_float,
        "seed": _parse_int,
        "test_per_class": _parse_int,
        "csv_path": _parse_str,
    },
    "augment": {
        "weak_noise_sigma": _parse_float,
        "strong_noise_sigma": _parse_float,
        "strong_dropout_rate": _parse_float,
    },
    "model": {
        "hidden": _parse_int_list,
        "representation_dim": _parse_int,
    },
    "backbone": {
        "mode": _parse_str,
        "tau": _parse_float,
        "lambda_u": _parse_float,
    },
    "balance": {
        "tau": _parse_float,
        "use_cls_mask": _parse_bool,
        "use_con_mask": _parse_bool,
        "use_threshold": _parse_bool,
        "use_soft_labels": _parse_bool,
        "use_annealing": _parse_bool,
        "use_consistency": _parse_bool,
        "anneal_cls_mask": _parse_bool,
        "reweight_instead_of_mask": _parse_bool,
    },
    "train": {
        "mode": _parse_str,
        "iterations": _parse_int,
        "batch_size": _parse_int,
        "learning_rate": _parse_float,
        "adam_beta1": _parse_float,
        "adam_beta2": _parse_float,
        "adam_eps": _parse_float,
        "ema_decay": _parse_float,
        "eval_every": _parse_int,
        "eval_with_ema": _parse_bool,
        "decoupled_split": _parse_float,
    },
    "run": {
        "seeds": _parse_int_list,
        "output_dir": _parse_str,
    },
}

_KEY_RE = re.compile(r"^\s*([^;#\[][^=:]*?)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_numbers(text):
    """(section, key) -> 1-based line number, best-effort scan of raw text."""
    out = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = lineno
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = lineno
    return out


def parse_config_text(text, origin="<config>"):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    lines = _line_numbers(text)

    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            lineno = lines.get((section, None), "?")
            raise ConfigError(f"{origin}: line {lineno}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                lineno = lines.get((section, key), "?")
                raise ConfigError(
                    f"{origin}: line {lineno}: unknown key {section}.{key}"
                )
            where = f"{origin}: {section}.{key}"
            values[(section, key)] = _SCHEMA[section][key](raw, where)

    def get(section, key, fallback):
        return values.get((section, key), fallback)

    try:
        dataset = DatasetConfig(
            kind=get("dataset", "kind", "generated"),
            profile=get("dataset", "profile", "lt"),
            n_classes=get("dataset", "n_classes", 10),
            n_largest=get("dataset", "n_largest", 500),
            imbalance_ratio=get("dataset", "imbalance_ratio", 100.0),
            dim=get("dataset", "dim", 8),
            spread=get("dataset", "spread", 6.0),
            labeled_fraction=get("dataset", "labeled_fraction", 0.2),
            seed=get("dataset", "seed", 0),
            test_per_class=get("dataset", "test_per_class", 200),
            csv_path=get("dataset", "csv_path", ""),
        )
        augment = AugmentConfig(
            weak_noise_sigma=get("augment", "weak_noise_sigma", 1.5),
            strong_noise_sigma=get("augment", "strong_noise_sigma", 2.5),
            strong_dropout_rate=get("augment", "strong_dropout_rate", 0.0),
        )
        backbone = BackboneLossConfig(
            mode=get("backbone", "mode", "fixmatch"),
            tau=get("backbone", "tau", 0.95),
            lambda_u=get("backbone", "lambda_u", 1.0),
        )
        balance = BalanceConfig(
            tau=get("balance", "tau", 0.95),
            use_cls_mask=get("balance", "use_cls_mask", True),
            use_con_mask=get("balance", "use_con_mask", True),
            use_threshold=get("balance", "use_threshold", True),
            use_soft_labels=get("balance", "use_soft_labels", True),
            use_annealing=get("balance", "use_annealing", True),
            use_consistency=get("balance", "use_consistency", True),
            anneal_cls_mask=get("balance", "anneal_cls_mask", False),
            reweight_instead_of_mask=get("balance", "reweight_instead_of_mask", False),
        )
        train = TrainConfig(
            mode=get("train", "mode", "end_to_end"),
            iterations=get("train", "iterations", 20000),
            batch_size=get("train", "batch_size", 64),
            learning_rate=get("train", "learning_rate", 0.002),
            adam_beta1=get("train", "adam_beta1", 0.9),
            adam_beta2=get("train", "adam_beta2", 0.999),
            adam_eps=get("train", "adam_eps", 1e-8),
            ema_decay=get("train", "ema_decay", 0.999),
            eval_every=get("train", "eval_every", 1000),
            eval_with_ema=get("train", "eval_with_ema", True),
            decoupled_split=get("train", "decoupled_split", 0.5),
        )
        seeds = get("run", "seeds", (1, 2, 3, 4, 5))
        if len(set(seeds)) != len(seeds):
            raise ConfigError(f"run.seeds contains duplicates: {seeds}")
        cfg = ExperimentConfig(
            dataset=dataset,
            augment=augment,
            backbone=backbone,
            balance=balance,
            train=train,
            hidden=tuple(get("model", "hidden", (128, 128))),
            representation_dim=get("model", "representation_dim", 32),
            seeds=tuple(int(s) for s in seeds),
            output_dir=get("run", "output_dir", ""),
        )
        cfg.model_config()  # validate model dims against the dataset block
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    return cfg


def parse_config(path):
    with open(str(path), "r") as fh:
        return parse_config_text(fh.read(), origin=str(path))


def resolved_ini(cfg):
    """Fully explicit INI text; parsing it reproduces ``cfg`` exactly."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return str(v)

    d, a, bb, bal, tr = cfg.dataset, cfg.augment, cfg.backbone, cfg.balance, cfg.train
    sections = [
        ("dataset", [
            ("kind", d.kind), ("profile", d.profile), ("n_classes", d.n_classes),
            ("n_largest", d.n_largest), ("imbalance_ratio", d.imbalance_ratio),
            ("dim", d.dim), ("spread", d.spread),
            ("labeled_fraction", d.labeled_fraction), ("seed", d.seed),
            ("test_per_class", d.test_per_class), ("csv_path", d.csv_path),
        ]),
        ("augment", [
            ("weak_noise_sigma", a.weak_noise_sigma),
            ("strong_noise_sigma", a.strong_noise_sigma),
            ("strong_dropout_rate", a.strong_dropout_rate),
        ]),
        ("model", [
            ("hidden", cfg.hidden),
            ("representation_dim", cfg.representation_dim),
        ]),
        ("backbone", [
            ("mode", bb.mode), ("tau", bb.tau), ("lambda_u", bb.lambda_u),
        ]),
        ("balance", [
            ("tau", bal.tau), ("use_cls_mask", bal.use_cls_mask),
            ("use_con_mask", bal.use_con_mask), ("use_threshold", bal.use_threshold),
            ("use_soft_labels", bal.use_soft_labels),
            ("use_annealing", bal.use_annealing),
            ("use_consistency", bal.use_consistency),
            ("anneal_cls_mask", bal.anneal_cls_mask),
            ("reweight_instead_of_mask", bal.reweight_instead_of_mask),
        ]),
        ("train", [
            ("mode", tr.mode), ("iterations", tr.iterations),
            ("batch_size", tr.batch_size), ("learning_rate", tr.learning_rate),
            ("adam_beta1", tr.adam_beta1), ("adam_beta2", tr.adam_beta2),
            ("adam_eps", tr.adam_eps), ("ema_decay", tr.ema_decay),
            ("eval_every", tr.eval_every), ("eval_with_ema", tr.eval_with_ema),
            ("decoupled_split", tr.decoupled_split),
        ]),
        ("run", [
            ("seeds", cfg.seeds), ("output_dir", cfg.output_dir),
        ]),
    ]
    buf = io.StringIO()
    for name, items in sections:
        buf.write(f"[{name}]\n")
        for key, val in items:
            buf.write(f"{key} = {fmt(val)}\n")
        buf.write("\n")
    return buf.getvalue()


def config_hash(cfg):
    return hashlib.sha256(resolved_ini(cfg).encode("utf-8")).hexdigest()[:16]


def resolve_output_dir(cfg, cli_out=None, default_name="run"):
    """--out flag beats config output_dir beats $SKEWLAB_OUT/<name>."""
    if cli_out:
        return str(cli_out)
    if cfg.output_dir:
        return cfg.output_dir
    root = os.environ.get(ENV_OUTPUT_ROOT, DEFAULT_OUTPUT_ROOT)
    return os.path.join(root, default_name)
