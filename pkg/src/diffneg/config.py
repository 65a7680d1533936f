"""Flat key=value configuration with documented defaults.

Precedence, lowest to highest: built-in defaults, config file entries,
command-line flags.  Every key can appear both in a file and as a flag.
"""

from __future__ import annotations

from .training import TrainConfig

# Keys that name files/directories rather than training hyperparameters.
PATH_KEYS = ("graph", "split", "out")

DEFAULTS: dict[str, str] = {
    "seed": "0",
    "epochs": "200",
    "batch_size": "256",
    "lr_encoder": "0.01",
    "lr_diffusion": "0.001",
    "inner_steps": "5",
    "neighbor_cap": "20",
    "weights": "",
    "extract_steps": "",
    "t_max": "50",
    "schedule": "linear",
    "beta_start": "0.0001",
    "beta_end": "0.02",
    "hidden_dim": "32",
    "embed_dim": "32",
    "film_layers": "2",
    "dropout": "0.1",
    "sampler": "uniform",
    "dns_candidates": "10",
    "pns_exponent": "0.75",
    "ablation": "",
    "patience": "20",
    "optimizer": "adam",
    "timing": "wall",
}

ABLATION_FLAGS = ("unconditional", "unweighted", "no-generated", "no-heuristic")


class ConfigError(ValueError):
    pass


def parse_config_file(path) -> dict[str, str]:
    """key=value per line; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key = key.strip()
            if key not in DEFAULTS and key not in PATH_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = value.strip()
    return out


def merge_config(file_values: dict[str, str] | None,
                 overrides: dict[str, str] | None) -> dict[str, str]:
    merged = dict(DEFAULTS)
    for layer in (file_values, overrides):
        if layer:
            for key, value in layer.items():
                if key not in DEFAULTS and key not in PATH_KEYS:
                    raise ConfigError(f"unknown config key {key!r}")
                merged[key] = value
    return merged


def _parse_ablation(spec: str) -> dict:
    """Comma list of flags; single-step takes a step as single-step:<t>."""
    out = {"unconditional": False, "unweighted": False, "single_step": None,
           "no_generated": False, "no_heuristic": False}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        if item in ABLATION_FLAGS:
            out[item.replace("-", "_")] = True
        elif item.startswith("single-step:"):
            try:
                out["single_step"] = int(item.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad single-step ablation {item!r}") from None
        else:
            raise ConfigError(f"unknown ablation flag {item!r}")
    return out


def _int_list(spec: str) -> tuple[int, ...] | None:
    items = [s for s in (p.strip() for p in spec.split(",")) if s]
    return tuple(int(s) for s in items) if items else None


def _float_list(spec: str) -> tuple[float, ...] | None:
    items = [s for s in (p.strip() for p in spec.split(",")) if s]
    return tuple(float(s) for s in items) if items else None


def build_train_config(values: dict[str, str]) -> TrainConfig:
    """Coerce a merged string mapping into a validated TrainConfig."""
    try:
        ablation = _parse_ablation(values.get("ablation", ""))
        return TrainConfig(
            epochs=int(values["epochs"]),
            batch_size=int(values["batch_size"]),
            lr_encoder=float(values["lr_encoder"]),
            lr_diffusion=float(values["lr_diffusion"]),
            inner_steps=int(values["inner_steps"]),
            neighbor_cap=int(values["neighbor_cap"]),
            weights=_float_list(values.get("weights", "")),
            extract_steps=_int_list(values.get("extract_steps", "")),
            t_max=int(values["t_max"]),
            schedule_policy=values["schedule"],
            beta_start=float(values["beta_start"]),
            beta_end=float(values["beta_end"]),
            hidden_dim=int(values["hidden_dim"]),
            embed_dim=int(values["embed_dim"]),
            film_layers=int(values["film_layers"]),
            dropout=float(values["dropout"]),
            sampler=values["sampler"],
            dns_candidates=int(values["dns_candidates"]),
            pns_exponent=float(values["pns_exponent"]),
            patience=int(values["patience"]),
            optimizer=values["optimizer"],
            seed=int(values["seed"]),
            timing=values["timing"],
            **ablation,
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {exc}") from exc


def config_snapshot(values: dict[str, str]) -> dict[str, str]:
    """The resolved key=value view stored in checkpoints and log headers."""
    return {k: values[k] for k in sorted(values) if k not in PATH_KEYS}
