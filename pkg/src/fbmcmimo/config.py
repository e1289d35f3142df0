"""Experiment configuration: YAML schema, defaults and field-level validation."""

from dataclasses import asdict, dataclass, fields, replace

import yaml

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "SWEEP_PARAMS"]

SCENARIOS = ("colocated", "cellfree")
WAVEFORMS = ("fbmc", "ofdm", "both")
DESIGNS = ("pdp-exact", "pdp-approx", "equivalent")
CSI_MODES = ("perfect", "estimated")
COMBINERS = ("mrc", "zf", "mmse")
FSE_KINDS = ("zf", "mmse")
NOISE_MODELS = ("snr", "physical", "none")
METRICS = ("sinr", "ber", "nmse", "samples")
SWEEP_PARAMS = ("N", "snr_db", "n_aps", "nu")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One Monte Carlo experiment.

    ``sweep_param`` selects which field ``sweep_values`` overrides per point.
    ``fse_lengths`` may contain 0 for the combining-only receiver;
    ``corrections`` lists the correction settings evaluated side by side.
    """

    name: str = "experiment"
    scenario: str = "colocated"
    waveform: str = "both"
    sweep_param: str = "N"
    sweep_values: tuple = (128,)
    N: int = 128
    users: int = 4
    subcarriers: int = 64
    overlap: int = 4
    channel_length: int = 16
    sample_rate: float = 15.36e6
    delay_spread_ns: tuple = (90.0, 110.0)
    fse_lengths: tuple = (0, 5)
    fse_designs: tuple = ("pdp-exact",)
    fse_kind: str = "zf"
    csi: str = "perfect"
    corrections: tuple = (False,)
    combiner: str = "zf"
    noise: str = "snr"
    snr_db: float = 10.0
    data_slots: int = 16
    qam_order: int = 4
    cp_length: int = 16
    metrics: tuple = ("sinr",)
    n_aps: int = 9
    antennas_per_ap: int = 4
    area_side_km: float = 2.0
    nu: float = 0.5
    p_max_w: float = 0.2
    noise_figure_db: float = 9.0
    bandwidth_hz: float = 20e6
    temperature_k: float = 290.0
    trials: int = 100
    seed: int = 1

    def point(self, value):
        """Copy with the sweep parameter set to ``value``."""
        cast = type(getattr(self, self.sweep_param))
        return replace(self, **{self.sweep_param: cast(value)})

    @property
    def run_fbmc(self):
        return self.waveform in ("fbmc", "both")

    @property
    def run_ofdm(self):
        return self.waveform in ("ofdm", "both")

    def to_dict(self):
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


_TUPLE_FIELDS = {f.name for f in fields(ExperimentConfig) if f.type is tuple}


def _validate(cfg):
    errors = []

    def check(name, ok, message):
        # ``ok`` may be a callable so that ill-typed values fail the check
        # instead of raising
        if callable(ok):
            try:
                ok = ok()
            except (TypeError, ValueError):
                ok = False
        if not ok:
            errors.append((name, message))

    def choice(name, options):
        check(name, getattr(cfg, name) in options, f"must be one of {list(options)}")

    choice("scenario", SCENARIOS)
    choice("waveform", WAVEFORMS)
    choice("sweep_param", SWEEP_PARAMS)
    choice("fse_kind", FSE_KINDS)
    choice("csi", CSI_MODES)
    choice("combiner", COMBINERS)
    choice("noise", NOISE_MODELS)
    check("sweep_values", len(cfg.sweep_values) > 0, "sweep list must be nonempty")
    for name in ("N", "users", "subcarriers", "channel_length", "data_slots", "trials",
                 "n_aps", "antennas_per_ap"):
        check(name, isinstance(getattr(cfg, name), int) and getattr(cfg, name) > 0,
              "must be a positive integer")
    if cfg.sweep_param in ("N", "n_aps"):
        check("sweep_values", lambda: all(int(v) == v and v > 0 for v in cfg.sweep_values),
              "counts must be positive integers")
    check("overlap", cfg.overlap in (2, 3, 4), "must be 2, 3 or 4")
    check("subcarriers", cfg.subcarriers % 2 == 0, "must be even")
    check("data_slots", cfg.data_slots % 2 == 0, "must be even (real/imaginary pairs)")
    check("fse_lengths", len(cfg.fse_lengths) > 0, "list must be nonempty")
    check("fse_lengths", lambda: all(int(L) == L and L >= 0 and (L == 0 or L % 2 == 1)
                             for L in cfg.fse_lengths), "lengths must be 0 or odd")
    check("fse_designs", len(cfg.fse_designs) > 0 and all(d in DESIGNS for d in cfg.fse_designs),
          f"entries must be from {list(DESIGNS)}")
    check("corrections", len(cfg.corrections) > 0 and all(isinstance(c, bool) for c in cfg.corrections),
          "entries must be booleans")
    check("metrics", all(m in METRICS for m in cfg.metrics), f"entries must be from {list(METRICS)}")
    check("delay_spread_ns", lambda: len(cfg.delay_spread_ns) == 2
          and 0 < cfg.delay_spread_ns[0] <= cfg.delay_spread_ns[1], "must be [low, high] with 0 < low <= high")
    check("sample_rate", lambda: cfg.sample_rate > 0, "must be positive")
    check("qam_order", cfg.qam_order in (4, 16, 64, 256), "must be 4, 16, 64 or 256")
    check("cp_length", lambda: cfg.cp_length >= cfg.channel_length - 1,
          "must cover the channel memory (channel_length - 1)")
    check("channel_length", lambda: cfg.users * cfg.channel_length <= cfg.subcarriers,
          "users * channel_length must not exceed subcarriers")
    check("nu", lambda: 0 <= cfg.nu <= 1, "must lie in [0, 1]")
    check("area_side_km", lambda: cfg.area_side_km > 0, "must be positive")
    check("p_max_w", lambda: cfg.p_max_w > 0, "must be positive")
    check("seed", isinstance(cfg.seed, int) and cfg.seed >= 0, "must be a non-negative integer")
    if cfg.scenario == "cellfree":
        check("noise", cfg.noise in ("physical", "none"), "cell-free runs use 'physical' or 'none'")
        check("sweep_param", cfg.sweep_param != "N", "cell-free runs sweep n_aps, not N")
    else:
        check("noise", cfg.noise in ("snr", "none"), "co-located runs use 'snr' or 'none'")
        check("sweep_param", cfg.sweep_param not in ("n_aps", "nu"), "only meaningful for cell-free runs")
    return errors


def parse_config(data):
    """
    Build and validate a config from a mapping.

    The sweep is given as ``sweep: {param: <name>, values: [...]}``.
    """
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "config must be a mapping")])
    data = dict(data)
    errors = []
    sweep = data.pop("sweep", None)
    if sweep is not None:
        if not isinstance(sweep, dict) or "param" not in sweep or "values" not in sweep:
            errors.append(("sweep", "must be a mapping with 'param' and 'values'"))
        else:
            data["sweep_param"] = sweep["param"]
            data["sweep_values"] = sweep["values"]
    known = {f.name: f for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            errors.append((key, "unknown field"))
            continue
        if key in _TUPLE_FIELDS:
            if not isinstance(value, (list, tuple)):
                value = [value]
            value = tuple(value)
        elif isinstance(known[key].default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif isinstance(known[key].default, int) and not isinstance(known[key].default, bool):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
        kwargs[key] = value
    if errors:
        raise ConfigError(errors)
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError([("<root>", str(exc))]) from exc
    errors = _validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path, **overrides):
    """Read a YAML config file; keyword overrides (e.g. ``seed``) win."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if isinstance(data, dict):
        data.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(data)
