"""Flat key-value experiment configs.

The format is deliberately diff-friendly: one ``section.key = value`` per
line, ``#`` comments, no nesting. Unknown keys are hard errors. The raw file
text is carried through every report so runs can be reproduced from their
artifacts alone.
"""

from dataclasses import dataclass, field, replace

from .data import SyntheticDatasetSpec
from .errors import ConfigParseError
from .losses import LossConfig, Variant
from .model import ModelSpec
from .optim import TrainingSchedule
from .seeds import derive_seed

SCHEMA_VERSION = "1"

# variant-specific conventional defaults for the fixed positive margin
DEFAULT_MARGIN = {Variant.COSFACE: 0.35}
FALLBACK_MARGIN = 0.5


@dataclass(frozen=True)
class EvalConfig:
    samples_per_class: int = 4
    n_positive_pairs: int = 500
    n_negative_pairs: int = 500
    n_distractors: int = 200
    far_targets: tuple = (0.1, 0.01)
    kfold: int = 10

    def __post_init__(self):
        if self.samples_per_class < 2:
            raise ValueError("eval.samples_per_class must be >= 2")
        if self.kfold < 2:
            raise ValueError("eval.kfold must be >= 2")
        if any(not 0 < f <= 1 for f in self.far_targets):
            raise ValueError("far targets must lie in (0, 1]")


def _parse_int(text):
    return int(text, 0)


def _parse_float(text):
    return float(text)


def _parse_str(text):
    return text


def _parse_int_list(text):
    return tuple(int(v.strip(), 0) for v in text.split(",") if v.strip())


def _parse_float_list(text):
    return tuple(float(v.strip()) for v in text.split(",") if v.strip())


def _parse_variant(text):
    try:
        return Variant(text.strip().lower())
    except ValueError:
        names = ", ".join(v.value for v in Variant)
        raise ValueError(f"unknown variant {text!r}; choose one of: {names}")


#: key -> (parser, default). ``None`` defaults are resolved after parsing.
SCHEMA = {
    "seed": (_parse_int, 0),
    "output_dir": (_parse_str, "runs/experiment"),
    "dataset.n_classes": (_parse_int, 200),
    "dataset.samples_per_class": (_parse_int, 20),
    "dataset.input_dim": (_parse_int, 32),
    "dataset.concentration": (_parse_float, 16.0),
    "dataset.crowding": (_parse_float, 0.0),
    "dataset.min_center_cosine": (_parse_float, 0.8),
    "dataset.seed": (_parse_int, None),
    "model.layer_widths": (_parse_int_list, None),
    "model.activation": (_parse_str, "relu"),
    "model.init_scale": (_parse_float, 1.0),
    "model.seed": (_parse_int, None),
    "loss.variant": (_parse_variant, Variant.NPCFACE),
    "loss.s": (_parse_float, 64.0),
    "loss.m": (_parse_float, None),
    "loss.t": (_parse_float, 1.1),
    "loss.alpha": (_parse_float, 0.25),
    "loss.m0": (_parse_float, 0.4),
    "loss.m1": (_parse_float, 0.2),
    "loss.mv_positive": (_parse_str, "arc"),
    "schedule.total_epochs": (_parse_int, 30),
    "schedule.lr_initial": (_parse_float, 0.1),
    "schedule.milestones": (_parse_int_list, (16, 24, 28)),
    "schedule.decay_factor": (_parse_float, 10.0),
    "schedule.batch_size": (_parse_int, 128),
    "optimizer.momentum": (_parse_float, 0.9),
    "optimizer.weight_decay": (_parse_float, 0.0005),
    "eval.samples_per_class": (_parse_int, 4),
    "eval.n_positive_pairs": (_parse_int, 500),
    "eval.n_negative_pairs": (_parse_int, 500),
    "eval.n_distractors": (_parse_int, 200),
    "eval.far_targets": (_parse_float_list, (0.1, 0.01)),
    "eval.kfold": (_parse_int, 10),
}


@dataclass
class ExperimentConfig:
    """Everything one run needs, plus the raw text it was parsed from."""

    dataset: SyntheticDatasetSpec
    model: ModelSpec
    loss: LossConfig
    schedule: TrainingSchedule
    eval: EvalConfig
    seed: int = 0
    output_dir: str = "runs/experiment"
    momentum: float = 0.9
    weight_decay: float = 0.0005
    raw_text: str = ""
    explicit_keys: frozenset = field(default_factory=frozenset)

    @property
    def n_classes(self) -> int:
        return self.dataset.n_classes

    @property
    def classifier_seed(self) -> int:
        return derive_seed(self.seed, "classifier")

    @property
    def shuffle_seed(self) -> int:
        return derive_seed(self.seed, "shuffle")

    @property
    def pairs_seed(self) -> int:
        return derive_seed(self.seed, "pairs")

    @property
    def folds_seed(self) -> int:
        return derive_seed(self.seed, "folds")

    @property
    def eval_seed(self) -> int:
        return derive_seed(self.seed, "eval")

    def flat_values(self) -> dict:
        """Effective values for every schema key, in schema order."""
        ds, md, ls, sc, ev = self.dataset, self.model, self.loss, self.schedule, self.eval
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset.n_classes": ds.n_classes,
            "dataset.samples_per_class": ds.samples_per_class,
            "dataset.input_dim": ds.input_dim,
            "dataset.concentration": ds.concentration,
            "dataset.crowding": ds.crowding,
            "dataset.min_center_cosine": ds.min_center_cosine,
            "dataset.seed": ds.seed,
            "model.layer_widths": ",".join(str(w) for w in md.layer_widths),
            "model.activation": md.activation,
            "model.init_scale": md.init_scale,
            "model.seed": md.seed,
            "loss.variant": ls.variant.value,
            "loss.s": ls.s,
            "loss.m": ls.m,
            "loss.t": ls.t,
            "loss.alpha": ls.alpha,
            "loss.m0": ls.m0,
            "loss.m1": ls.m1,
            "loss.mv_positive": ls.mv_positive,
            "schedule.total_epochs": sc.total_epochs,
            "schedule.lr_initial": sc.lr_initial,
            "schedule.milestones": ",".join(str(m) for m in sc.milestones),
            "schedule.decay_factor": sc.decay_factor,
            "schedule.batch_size": sc.batch_size,
            "optimizer.momentum": self.momentum,
            "optimizer.weight_decay": self.weight_decay,
            "eval.samples_per_class": ev.samples_per_class,
            "eval.n_positive_pairs": ev.n_positive_pairs,
            "eval.n_negative_pairs": ev.n_negative_pairs,
            "eval.n_distractors": ev.n_distractors,
            "eval.far_targets": ",".join(repr(f) for f in ev.far_targets),
            "eval.kfold": ev.kfold,
        }

    def with_loss(self, loss: LossConfig) -> "ExperimentConfig":
        return replace(self, loss=loss)


def default_margin(variant: Variant) -> float:
    return DEFAULT_MARGIN.get(variant, FALLBACK_MARGIN)


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse flat config text; raises ConfigParseError with line context."""
    values = {}
    explicit = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(
                f"line {lineno}: expected 'key = value', got {raw!r}", line=lineno
            )
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SCHEMA:
            raise ConfigParseError(f"line {lineno}: unknown key {key!r}", line=lineno, field=key)
        if key in values:
            raise ConfigParseError(f"line {lineno}: duplicate key {key!r}", line=lineno, field=key)
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigParseError(f"line {lineno}: key {key!r}: {exc}", line=lineno, field=key)
        explicit.add(key)

    return build_config(values, explicit, raw_text=text)


def build_config(values: dict, explicit=frozenset(), raw_text: str = "") -> ExperimentConfig:
    """Assemble an ExperimentConfig from parsed values, applying defaults."""
    def get(key):
        if key in values:
            return values[key]
        return SCHEMA[key][1]

    seed = get("seed")
    variant = get("loss.variant")
    margin = get("loss.m")
    if margin is None:
        margin = default_margin(variant)

    input_dim = get("dataset.input_dim")
    widths = get("model.layer_widths")
    if widths is None:
        widths = (input_dim, 32, 16)

    milestones = get("schedule.milestones")
    total_epochs = get("schedule.total_epochs")
    if "schedule.milestones" not in explicit:
        milestones = tuple(m for m in milestones if m < total_epochs)

    try:
        dataset = SyntheticDatasetSpec(
            n_classes=get("dataset.n_classes"),
            samples_per_class=get("dataset.samples_per_class"),
            input_dim=input_dim,
            concentration=get("dataset.concentration"),
            crowding=get("dataset.crowding"),
            min_center_cosine=get("dataset.min_center_cosine"),
            seed=values.get("dataset.seed", derive_seed(seed, "dataset")),
        )
        model = ModelSpec(
            layer_widths=widths,
            activation=get("model.activation"),
            init_scale=get("model.init_scale"),
            seed=values.get("model.seed", derive_seed(seed, "model")),
        )
        loss = LossConfig(
            variant=variant,
            s=get("loss.s"),
            m=margin,
            t=get("loss.t"),
            alpha=get("loss.alpha"),
            m0=get("loss.m0"),
            m1=get("loss.m1"),
            mv_positive=get("loss.mv_positive"),
        )
        schedule = TrainingSchedule(
            total_epochs=total_epochs,
            lr_initial=get("schedule.lr_initial"),
            milestones=milestones,
            decay_factor=get("schedule.decay_factor"),
            batch_size=get("schedule.batch_size"),
        )
        eval_cfg = EvalConfig(
            samples_per_class=get("eval.samples_per_class"),
            n_positive_pairs=get("eval.n_positive_pairs"),
            n_negative_pairs=get("eval.n_negative_pairs"),
            n_distractors=get("eval.n_distractors"),
            far_targets=get("eval.far_targets"),
            kfold=get("eval.kfold"),
        )
    except ValueError as exc:
        raise ConfigParseError(str(exc))

    if model.input_dim != dataset.input_dim:
        raise ConfigParseError(
            f"model.layer_widths starts at {model.input_dim} but dataset.input_dim "
            f"is {dataset.input_dim}", field="model.layer_widths",
        )

    return ExperimentConfig(
        dataset=dataset, model=model, loss=loss, schedule=schedule, eval=eval_cfg,
        seed=seed, output_dir=get("output_dir"),
        momentum=get("optimizer.momentum"), weight_decay=get("optimizer.weight_decay"),
        raw_text=raw_text, explicit_keys=frozenset(explicit),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}")
    return parse_config_text(text)


def variant_token_to_loss(token: str, base: ExperimentConfig) -> LossConfig:
    """Build a LossConfig from a compare/sweep token.

    Grammar: ``variant[:key=value[;key=value...]]`` where keys are LossConfig
    scalar fields, e.g. ``npcface:t=1;alpha=0;m1=0``.
    """
    name, _, override_text = token.partition(":")
    try:
        variant = _parse_variant(name)
    except ValueError as exc:
        raise ConfigParseError(str(exc), field="variant")
    overrides = {}
    if override_text:
        for item in override_text.split(";"):
            if not item.strip():
                continue
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq or key not in ("s", "m", "t", "alpha", "m0", "m1", "mv_positive"):
                raise ConfigParseError(f"bad variant override {item!r} in {token!r}", field=key)
            overrides[key] = value.strip() if key == "mv_positive" else float(value)

    margin = overrides.pop("m", None)
    if margin is None:
        margin = base.loss.m if "loss.m" in base.explicit_keys else default_margin(variant)
    try:
        return replace(base.loss, variant=variant, m=margin, **overrides)
    except ValueError as exc:
        raise ConfigParseError(f"variant token {token!r}: {exc}", field="variant")
