"""Run configuration: a flat ``key = value`` text format with dotted sections.

Example::

    case = isentropic_vortex
    p = 3
    dt = 0.004
    t_end = 1.0
    mesh.n = 16
    antialias.mode = entropy_filter
    outputs.dir = out/vortex

Blank lines and ``#`` comments are ignored. Every key must be known; a
misspelt key is an error that names the line.
"""

from dataclasses import dataclass, field, fields
import logging
import os

from .antialias import (ENTROPY_FILTER, MODAL_FILTER, MODES, NONE, OVER_INTEGRATION,
                        AntialiasConfig)
from .basis import GAUSS_LEGENDRE, GAUSS_LOBATTO
from .mesh import FARFIELD, WALL

log = logging.getLogger(__name__)

CASES = ("density_wave", "isentropic_vortex", "kelvin_helmholtz", "taylor_green_2d",
         "from_mesh_file")
NODE_CHOICES = ("auto", GAUSS_LEGENDRE, GAUSS_LOBATTO)
BC_KINDS = (WALL, "wall", FARFIELD)
OUTPUT_ENV = "FRDEALIAS_OUTPUT_DIR"
REQUIRED = ("case", "p", "dt", "t_end")


class ConfigError(ValueError):
    """Invalid configuration, carrying the offending key and line when known."""

    def __init__(self, message, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(key)
        super().__init__(": ".join(where + [message]))
        self.key = key
        self.line = line


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    case: str = None
    p: int = None
    dim: int = 2
    dt: float = None
    t_end: float = None
    seed: int = 0
    threads: int = 0
    nodes: str = "auto"
    nodes_allow_noncollocated: bool = False

    mesh_n: int = 8
    mesh_skew: float = 0.0
    mesh_path: str = ""

    gas_gamma: float = 1.4
    gas_prandtl: float = 0.71
    gas_mu: float = 0.0

    ic_perturbation: float = 0.01
    ic_steepness: float = 15.0

    antialias_mode: str = NONE
    antialias_q: int = 0
    antialias_kappa: float = 32.0
    antialias_eta_c: float = 0.0
    antialias_s: int = 8
    antialias_every: int = 20
    antialias_constraint_tolerance: float = 1e-12
    antialias_bisection_tolerance: float = 1e-4
    antialias_zeta_max: float = 50.0

    freestream_rho: float = 1.0
    freestream_u: float = 1.0
    freestream_v: float = 0.0
    freestream_p: float = 1.0
    ref_length: float = 1.0
    wall_tag: str = ""

    outputs_dir: str = ""
    outputs_cadence: int = 10
    outputs_fields: bool = True
    outputs_vtk: bool = False
    outputs_plots: bool = True
    outputs_filter_log: bool = False
    outputs_average_start: float = -1.0

    psd_window: int = 4096
    psd_shift: int = 10

    bc: dict = field(default_factory=dict)
    notes: list = field(default_factory=list, compare=False)

    # ------------------------------------------------------------ derived
    @property
    def node_family(self):
        """Solution node family after applying the entropy filter rule."""
        if self.nodes == "auto":
            return GAUSS_LOBATTO if self.antialias_mode == ENTROPY_FILTER else GAUSS_LEGENDRE
        return self.nodes

    @property
    def oi_degree(self):
        """Quadrature degree for over-integration; default is the smallest odd >= 3p."""
        if self.antialias_q:
            return self.antialias_q
        q = 3 * self.p
        return q if q % 2 else q + 1

    def antialias(self):
        m = self.antialias_mode
        if m == NONE:
            return AntialiasConfig.none()
        if m == OVER_INTEGRATION:
            return AntialiasConfig.over_integration(self.oi_degree)
        if m == MODAL_FILTER:
            return AntialiasConfig.modal_filter(self.antialias_kappa, self.antialias_eta_c,
                                                self.antialias_s, self.antialias_every)
        return AntialiasConfig.entropy_filter(self.antialias_constraint_tolerance,
                                              self.antialias_bisection_tolerance,
                                              self.antialias_zeta_max)

    def output_dir(self):
        if self.outputs_dir:
            return self.outputs_dir
        return os.environ.get(OUTPUT_ENV) or os.path.join(os.getcwd(), "frdealias-output")

    def to_text(self):
        """Resolved configuration in the input format; parses back to an equal config."""
        lines = ["# resolved configuration"]
        lines += [f"# {n}" for n in self.notes]
        for f in fields(self):
            if f.name in ("bc", "notes"):
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{_KEY_OF[f.name]} = {value}")
        for tag, kind in sorted(self.bc.items()):
            lines.append(f"bc.{tag} = {kind}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig) if f.name not in ("bc", "notes")}
_KEY_OF = {name: name.replace("_", ".", 1) if name.split("_", 1)[0] in
           ("nodes", "mesh", "gas", "ic", "antialias", "freestream", "outputs", "psd")
           else name for name in _FIELDS}
_NAME_OF = {key: name for name, key in _KEY_OF.items()}
_TYPES = {"int": int, "float": float, "str": str, "bool": _bool}


def _coerce(name, text):
    kind = _FIELDS[name].type
    kind = kind if isinstance(kind, str) else kind.__name__
    conv = _TYPES[kind]
    if conv is int:
        v = float(text)
        if v != int(v):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    return conv(text.strip())


def _validate(cfg):
    def bad(key, msg):
        raise ConfigError(msg, key=key, line=cfg._lines.get(key))

    for key in REQUIRED:
        if getattr(cfg, _NAME_OF[key]) is None:
            bad(key, "required key is missing")
    if cfg.case not in CASES:
        bad("case", f"unknown case {cfg.case!r}; choose from {', '.join(CASES)}")
    if cfg.p < 0:
        bad("p", "must be >= 0")
    if cfg.dim not in (1, 2):
        bad("dim", "must be 1 or 2")
    if cfg.case != "density_wave" and cfg.case != "from_mesh_file" and cfg.dim != 2:
        bad("dim", f"case {cfg.case} is two-dimensional")
    if not cfg.dt > 0:
        bad("dt", "must be positive")
    if cfg.t_end < 0:
        bad("t_end", "must be non-negative")
    if cfg.mesh_n < 1:
        bad("mesh.n", "must be >= 1")
    if cfg.case == "from_mesh_file" and not cfg.mesh_path:
        bad("mesh.path", "required for case from_mesh_file")
    if not cfg.gas_gamma > 1:
        bad("gas.gamma", "must exceed 1")
    if not cfg.gas_prandtl > 0:
        bad("gas.prandtl", "must be positive")
    if cfg.gas_mu < 0:
        bad("gas.mu", "must be non-negative")
    if cfg.nodes not in NODE_CHOICES:
        bad("nodes", f"choose from {', '.join(NODE_CHOICES)}")
    if cfg.antialias_mode not in MODES:
        bad("antialias.mode", f"choose from {', '.join(MODES)}")
    if cfg.antialias_mode == OVER_INTEGRATION and cfg.oi_degree // 2 + 1 < cfg.p + 1:
        bad("antialias.q", f"degree {cfg.oi_degree} rule has fewer points than p + 1")
    if cfg.antialias_s < 2 or cfg.antialias_s % 2:
        bad("antialias.s", "must be even and >= 2")
    if not cfg.antialias_kappa > 0:
        bad("antialias.kappa", "must be positive")
    if cfg.antialias_every < 1:
        bad("antialias.every", "must be >= 1")
    if not cfg.antialias_zeta_max > 0:
        bad("antialias.zeta_max", "must be positive")
    if not cfg.antialias_bisection_tolerance > 0:
        bad("antialias.bisection_tolerance", "must be positive")
    if cfg.outputs_cadence < 1:
        bad("outputs.cadence", "must be >= 1")
    if cfg.psd_window < 2 or not 1 <= cfg.psd_shift <= cfg.psd_window:
        bad("psd.shift", "need window >= 2 and 1 <= shift <= window")
    if cfg.threads < 0:
        bad("threads", "must be >= 0")
    for tag, kind in cfg.bc.items():
        if kind not in BC_KINDS:
            bad(f"bc.{tag}", f"boundary kind must be one of {', '.join(BC_KINDS)}")

    if cfg.antialias_mode == ENTROPY_FILTER and cfg.nodes == GAUSS_LEGENDRE:
        if cfg.nodes_allow_noncollocated:
            msg = ("entropy_filter with gauss-legendre nodes: face points are not checked "
                   "by the filter (kept by nodes.allow_noncollocated)")
        else:
            msg = "entropy_filter requires gauss-lobatto nodes; nodes overridden to gauss-lobatto"
            cfg.nodes = GAUSS_LOBATTO
        log.warning(msg)
        cfg.notes.append(msg)


def known_keys():
    return sorted(_NAME_OF) + ["bc.<tag>"]


def parse_text(text, overrides=(), source="<config>"):
    """Parse configuration text plus ``key=value`` overrides into a RunConfig.

    Raises
    ------
    ConfigError
        For malformed lines, unknown keys, bad values and failed checks. The
        message carries the key and, for file input, the line number.
    """
    cfg = RunConfig()
    cfg._lines = {}
    items = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' in {source}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        items.append((key, value, lineno))
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        key, value = (s.strip() for s in ov.split("=", 1))
        items.append((key, value, None))

    for key, value, lineno in items:
        if key.startswith("bc.") and len(key) > 3:
            cfg.bc[key[3:]] = value
            cfg._lines[key] = lineno
            continue
        name = _NAME_OF.get(key)
        if name is None:
            raise ConfigError("unknown key", key=key, line=lineno)
        try:
            setattr(cfg, name, _coerce(name, value))
        except ValueError as exc:
            raise ConfigError(str(exc), key=key, line=lineno) from None
        cfg._lines[key] = lineno
    _validate(cfg)
    return cfg


def parse_config(path, overrides=()):
    """Read and validate a configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc.strerror}", key=str(path)) from None
    return parse_text(text, overrides, source=str(path))


def write_resolved(cfg, path):
    with open(path, "w") as fh:
        fh.write(cfg.to_text())
