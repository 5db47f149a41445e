"""Run configuration: INI-style sections, strict keys, env presets.

Every command resolves its configuration fully (defaults, per-environment
presets, file overrides, CLI overrides) and writes the resolved document
next to its outputs, so a run can always be reproduced from its artifacts.
Unknown sections or keys are rejected.
"""

import configparser
import hashlib
import io

_MODEL_KEYS = {
    "vae": ["latent_dim", "hidden_dim", "beta", "lambda_noncausal",
            "classifier_weight", "classifier_hidden", "temperature",
            "prior_units", "recon_weight", "psi_lr_scale",
            "per_sample_assignment", "psi_delay_frac", "learning_rate",
            "batch_size", "epochs", "warmup_steps", "seed"],
    "ivae-star": ["latent_dim", "hidden_dim", "beta", "prior_hidden",
                  "learning_rate", "batch_size", "epochs", "warmup_steps",
                  "seed"],
    "ae": ["latent_dim", "hidden_dim", "latent_noise_std", "learning_rate",
           "batch_size", "epochs", "warmup_steps", "seed"],
    "nf": ["n_blocks", "beta", "lambda_noncausal", "classifier_weight",
           "classifier_hidden", "temperature", "prior_units", "psi_lr_scale",
           "per_sample_assignment", "learning_rate", "batch_size", "epochs",
           "warmup_steps", "seed"],
}

_EVAL_KEYS = ["n_triplets", "probe_epochs", "probe_batch_size", "seed"]
_GRAPH_KEYS = ["rounds", "sparsity", "gamma_lr", "mask_samples",
               "learning_rate", "batch_size", "heldout_fraction", "seed"]

# desk-scale defaults per environment (model kind -> overrides)
ENV_PRESETS = {
    "ball-in-boxes": {
        "vae": {"latent_dim": 8, "epochs": 40, "recon_weight": 20.0,
                "psi_lr_scale": 4.0, "lambda_noncausal": 0.1},
        "ivae-star": {"latent_dim": 8, "epochs": 40},
        "ae": {"latent_dim": 8, "epochs": 30},
        "nf": {"epochs": 40, "lambda_noncausal": 0.1, "psi_lr_scale": 4.0},
    },
    "pong-state": {
        "vae": {"latent_dim": 16, "epochs": 30, "recon_weight": 20.0,
                "psi_lr_scale": 4.0, "lambda_noncausal": 0.1},
        "ivae-star": {"latent_dim": 16, "epochs": 25},
        "ae": {"latent_dim": 16, "epochs": 30},
        "nf": {"epochs": 30, "lambda_noncausal": 0.1, "psi_lr_scale": 4.0},
    },
    "causal3d-state": {
        "vae": {"latent_dim": 28, "epochs": 30, "recon_weight": 20.0,
                "psi_lr_scale": 4.0, "lambda_noncausal": 0.05},
        "ivae-star": {"latent_dim": 28, "epochs": 25},
        "ae": {"latent_dim": 28, "epochs": 30},
        "nf": {"epochs": 30, "lambda_noncausal": 0.05, "psi_lr_scale": 4.0},
    },
    "causal3d-teapot": {
        "vae": {"latent_dim": 24, "epochs": 30, "recon_weight": 20.0,
                "psi_lr_scale": 4.0, "lambda_noncausal": 0.05},
        "ivae-star": {"latent_dim": 24, "epochs": 25},
        "ae": {"latent_dim": 24, "epochs": 30},
        "nf": {"epochs": 30, "lambda_noncausal": 0.05, "psi_lr_scale": 4.0},
    },
}

_DEFAULT_EVAL = {"n_triplets": 10000, "probe_epochs": 40,
                 "probe_batch_size": 512, "seed": 0}
_DEFAULT_GRAPH = {"rounds": 100, "sparsity": 0.05, "gamma_lr": 1.0,
                  "mask_samples": 2, "learning_rate": 1e-3, "batch_size": 512,
                  "heldout_fraction": 0.25, "seed": 0}


class ConfigError(ValueError):
    pass


def _coerce(value):
    text = str(value).strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def model_config(kind, env_name=None, config_file=None, overrides=None):
    """Resolved estimator kwargs for a model kind.

    Precedence: estimator defaults < env preset < config file [model]
    section < explicit overrides.
    """
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"unknown model kind {kind!r}")
    allowed = set(_MODEL_KEYS[kind])
    resolved = {}
    preset = ENV_PRESETS.get(env_name or "", {}).get(kind, {})
    resolved.update(preset)
    if config_file is not None:
        parser = configparser.ConfigParser()
        read = parser.read(config_file)
        if not read:
            raise ConfigError(f"config file not found: {config_file}")
        for section in parser.sections():
            if section not in ("model", "eval", "graph", "run"):
                raise ConfigError(f"unknown config section [{section}]")
        if parser.has_section("model"):
            for key, value in parser.items("model"):
                if key == "kind":
                    if value != kind:
                        raise ConfigError(
                            f"config kind {value!r} does not match {kind!r}")
                    continue
                if key not in allowed:
                    raise ConfigError(f"unknown [model] key {key!r} for "
                                      f"kind {kind!r}")
                resolved[key] = _coerce(value)
    for key, value in (overrides or {}).items():
        if key not in allowed:
            raise ConfigError(f"unknown model option {key!r}")
        resolved[key] = value
    return resolved


def section_config(section, defaults, allowed, config_file=None,
                   overrides=None):
    resolved = dict(defaults)
    if config_file is not None:
        parser = configparser.ConfigParser()
        if not parser.read(config_file):
            raise ConfigError(f"config file not found: {config_file}")
        if parser.has_section(section):
            for key, value in parser.items(section):
                if key not in allowed:
                    raise ConfigError(f"unknown [{section}] key {key!r}")
                resolved[key] = _coerce(value)
    for key, value in (overrides or {}).items():
        if key not in allowed:
            raise ConfigError(f"unknown {section} option {key!r}")
        resolved[key] = value
    return resolved


def eval_config(config_file=None, overrides=None):
    return section_config("eval", _DEFAULT_EVAL, set(_EVAL_KEYS),
                          config_file, overrides)


def graph_config(config_file=None, overrides=None):
    return section_config("graph", _DEFAULT_GRAPH, set(_GRAPH_KEYS),
                          config_file, overrides)


def render_config(sections):
    """Serialize a resolved configuration as a canonical INI document."""
    parser = configparser.ConfigParser()
    for name in sorted(sections):
        parser[name] = {k: str(v) for k, v in sorted(sections[name].items())}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def config_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_resolved(path, sections):
    text = render_config(sections)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return config_hash(text)
