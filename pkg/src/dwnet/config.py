"""Run configuration: profile presets, config files and flag overrides.

Precedence is defaults < profile < config file < command-line flags.
Config files are UTF-8 ``key=value`` lines using the long flag names
(``steps=200``, ``lam=10``).
"""

from dataclasses import dataclass, fields

from .iuv_io.container import read_manifest

PROFILES = {
    "desk": dict(dims=64, base_ch=8, res_blocks=9),
    "paper": dict(dims=256, base_ch=64, res_blocks=9),
}


@dataclass
class RunConfig:
    profile: str = "desk"
    seed: int = 7
    dims: int = 64
    base_ch: int = 8
    res_blocks: int = 9
    lam: float = 10.0
    lr: float = 2e-4
    steps: int = 200
    adv_weight: float = 1.0
    scenes: int = 8
    frames: int = 32          # driving frames per synthesized scene
    parts: int = 3
    uv_noise: float = 0.0
    markovian: bool = True
    use_refiner: bool = True
    use_warp: bool = True

    @property
    def grid(self) -> int:
        return self.dims // 4


_BOOL_FIELDS = {"markovian", "use_refiner", "use_warp"}


class ConfigError(Exception):
    pass


def _coerce(name: str, value, target_type):
    if target_type is bool:
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes", "on"):
            return True
        if str(value).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot read boolean {name}={value!r}")
    try:
        return target_type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def build_config(flag_values: dict, config_file: str | None = None
                 ) -> RunConfig:
    """Merge profile defaults, an optional file, and explicit flags."""
    types = {f.name: f.type for f in fields(RunConfig)}
    type_map = {"int": int, "float": float, "str": str, "bool": bool}
    merged = {}

    profile = flag_values.get("profile")
    file_entries = {}
    if config_file:
        file_entries = read_manifest(config_file)
        if profile is None and "profile" in file_entries:
            profile = file_entries["profile"]
    profile = profile or "desk"
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; "
                          f"choose from {sorted(PROFILES)}")
    merged["profile"] = profile
    merged.update(PROFILES[profile])

    for source in (file_entries, flag_values):
        for key, value in source.items():
            if value is None or key == "profile":
                continue
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            target = types[key]
            if isinstance(target, str):
                target = type_map.get(target, str)
            merged[key] = _coerce(key, value, target)
    return RunConfig(**merged)
