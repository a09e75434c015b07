"""
Pipeline configuration: published defaults, flat dotted-key config files,
and `--set section.key=value` overrides.
"""

from dataclasses import dataclass, field, fields


@dataclass
class TrackingSection:
    grid_interval: int = 10
    window_length: int = 5
    pyramid_levels: int = 3
    lk_window: int = 9
    max_iterations: int = 30
    convergence_eps: float = 0.01
    fb_threshold: float = 1.5


@dataclass
class SscSection:
    k: int = 2
    lambda_rel: float = 20.0
    admm_iterations: int = 200
    motion_weight: float = 3.0


@dataclass
class SlicSection:
    n: int = 100
    depth: int = 5
    m: float = 22.0
    w_m: float = 1.0
    w_z: float = 50.0
    w_L: float = 1.0
    iterations: int = 5
    min_size_fraction: float = 1.0 / 16.0


@dataclass
class GrabcutSection:
    k: int = 5
    gamma: float = 50.0
    max_iters: int = 5


@dataclass
class BilateralSection:
    mode: str = "auto"            # auto | on | off
    sigma_spatial: float = 5.0
    sigma_range: float = 0.1
    hd_threshold: int = 720       # auto mode filters when min(w, h) >= this


@dataclass
class FlowSection:
    alpha: float = 15.0
    iterations: int = 100
    levels: int = 3


@dataclass
class PipelineConfig:
    tracking: TrackingSection = field(default_factory=TrackingSection)
    ssc: SscSection = field(default_factory=SscSection)
    slic: SlicSection = field(default_factory=SlicSection)
    grabcut: GrabcutSection = field(default_factory=GrabcutSection)
    bilateral: BilateralSection = field(default_factory=BilateralSection)
    flow: FlowSection = field(default_factory=FlowSection)
    clip_size: int = 30
    frame_rate: float = 30.0
    threads: int = 1

    def set(self, dotted_key, value):
        """Apply one 'section.key' (or top-level 'key') string override."""
        parts = dotted_key.strip().split(".")
        target = self
        for part in parts[:-1]:
            if not hasattr(target, part):
                raise KeyError("unknown config section %r" % part)
            target = getattr(target, part)
        name = parts[-1]
        if not hasattr(target, name):
            raise KeyError("unknown config key %r" % dotted_key)
        current = getattr(target, name)
        setattr(target, name, type(current)(value) if not isinstance(current, str)
                else str(value))

    def items(self):
        """Flattened (dotted_key, value) pairs."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "__dataclass_fields__"):
                for sub in fields(value):
                    out.append(("%s.%s" % (f.name, sub.name), getattr(value, sub.name)))
            else:
                out.append((f.name, value))
        return out


def load_config(path):
    """Read a flat key = value config file (# comments allowed)."""
    config = PipelineConfig()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key = value" % (path, lineno))
            key, value = line.split("=", 1)
            config.set(key.strip(), value.strip())
    return config


def dump_config(config):
    """Render a config back to the flat file format."""
    return "\n".join("%s = %s" % kv for kv in config.items()) + "\n"
