"""Training configuration and its flat ``key = value`` text format."""
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ContractViolation


def _opt(default, doc):
    return field(default=default, metadata={"doc": doc})


@dataclass
class TrainConfig:
    seed: int = _opt(0, "seed for weight init, batch order and penalty interpolates")
    height: int = _opt(64, "image height, divisible by 32")
    width: int = _opt(64, "image width, divisible by 32")
    batch_size: int = _opt(8, "triplets per paired and per unpaired batch")
    iterations: int = _opt(2000, "training iterations (one paired + one unpaired step each)")
    lr: float = _opt(1e-3, "Adam learning rate for all networks")
    beta1: float = _opt(0.5, "Adam beta1")
    beta2: float = _opt(0.999, "Adam beta2")
    lambda_w: float = _opt(1.0, "weight of the warp L1 loss")
    lambda_p: float = _opt(1.0, "weight of the perceptual loss")
    lambda_l1: float = _opt(1.0, "weight of the pixel L1 loss")
    lambda_adv: float = _opt(1.0, "weight of the generator adversarial loss")
    gp_weight: float = _opt(10.0, "gradient-penalty coefficient in the discriminator loss")
    adv_variant: str = _opt("rsgan", "relativistic variant: rsgan (pairwise) or ragan (average)")
    data_source: str = _opt("synthetic", "synthetic or manifest")
    manifest: str = _opt("", "manifest CSV path when data_source = manifest")
    dataset_seed: int = _opt(0, "synthetic dataset seed")
    dataset_size: int = _opt(16, "number of synthetic triplets")
    warp_magnitude: float = _opt(0.3, "max control-point displacement of synthetic warps, in [0, 0.3]")
    extractor_seed: int = _opt(0, "seed of the frozen perceptual extractor")
    extractor_path: str = _opt("", "optional saved extractor file; overrides extractor_seed")
    cloth_pad_mode: str = _opt("border", "padding for pixel-level cloth warps: border or zeros")
    feature_pad_mode: str = _opt("border", "padding for skip-feature warps: border or zeros")
    out_dir: str = _opt("runs/default", "directory for checkpoints and logs")
    checkpoint_interval: int = _opt(500, "iterations between checkpoints; 0 saves only at the end")
    log_interval: int = _opt(50, "iterations between log lines; 0 disables")
    threads: int = _opt(1, "torch intra-op threads (fixed for determinism)")
    no_adv: bool = _opt(False, "ablation: drop the adversarial loss and discriminator")
    paired_adv: bool = _opt(False, "ablation: adversarial loss on the paired output instead of unpaired")
    no_e2e_warp: bool = _opt(False, "ablation: image losses do not reach theta; only the warp loss does")
    box_mask: bool = _opt(False, "ablation: agnostic mask is the bounding box of the parsing mask")

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.height % 32 or self.width % 32 or self.height <= 0 or self.width <= 0:
            raise ContractViolation(f"resolution {self.height}x{self.width} must be divisible by 32")
        if self.batch_size < 1 or self.iterations < 0:
            raise ContractViolation("batch_size must be >= 1 and iterations >= 0")
        if self.adv_variant not in ("rsgan", "ragan"):
            raise ContractViolation(f"adv_variant must be rsgan or ragan, got {self.adv_variant!r}")
        if self.data_source not in ("synthetic", "manifest"):
            raise ContractViolation(f"data_source must be synthetic or manifest, got {self.data_source!r}")
        if self.data_source == "manifest" and not self.manifest:
            raise ContractViolation("data_source = manifest requires a manifest path")
        for name in ("cloth_pad_mode", "feature_pad_mode"):
            if getattr(self, name) not in ("border", "zeros"):
                raise ContractViolation(f"{name} must be border or zeros")
        for name in ("lambda_w", "lambda_p", "lambda_l1", "lambda_adv", "gp_weight", "lr"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be nonnegative")
        if not 0 <= self.warp_magnitude <= 0.3:
            raise ContractViolation("warp_magnitude must lie in [0, 0.3]")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ContractViolation(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key], raw)
        return cls(**kwargs)

    @classmethod
    def parse(cls, text):
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractViolation(f"config line {lineno}: expected key = value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        return cls.from_dict(values)

    @classmethod
    def load(cls, path):
        return cls.parse(Path(path).read_text())

    def dumps(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"# {f.metadata['doc']}")
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(f, raw):
    if not isinstance(raw, str):
        return raw
    typ = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str, "bool": bool}[f.type]
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return typ(raw)
    except ValueError:
        raise ContractViolation(f"config key {f.name!r}: cannot parse {raw!r} as {typ.__name__}") from None
