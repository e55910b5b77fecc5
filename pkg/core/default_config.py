"""Default configuration values for the edit-friendly DDPM inversion harness"""

EXPERIMENT_KINDS = (
    "sample", "invert", "reconstruct", "toy2d-stats", "noise-stats", "shift",
    "flip", "color-edit", "cond-swap", "sweep", "diversity",
)

# Schedule configuration
DEFAULT_SCHEDULE_CONFIG = {
    "steps": 1000,
    "beta_start": 1e-4,
    "beta_end": 0.02,
    "eta": 1.0,
    "respacing": None,
    "zero_final_noise": False
}

# Toy model: N((10, 10), I) in 2-D
TOY2D_MODEL = {
    "type": "isotropic_gaussian",
    "mean": [10.0, 10.0],
    "variance": 1.0
}

GMM2D_MODEL = {
    "type": "gmm",
    "weights": [0.5, 0.3, 0.2],
    "components": [
        {"type": "isotropic_gaussian", "mean": [-4.0, 0.0], "variance": 0.5},
        {"type": "isotropic_gaussian", "mean": [4.0, 2.0], "variance": 1.0},
        {"type": "isotropic_gaussian", "mean": [0.0, -5.0], "variance": 0.25}
    ]
}

FIELD_MODEL = {
    "type": "stationary_field",
    "shape": [32, 32],
    "variance": 1.0,
    "length_scales": [3.0, 3.0],
    "angle_degrees": 0.0,
    "nugget": 0.05,
    "mean": 0.0
}

# Two-label model for condition swaps: "source" and "target" blobs on an 8x8 grid
SWAP_MODEL = {
    "type": "conditional",
    "members": {
        "source": {"type": "isotropic_gaussian", "shape": [8, 8], "mean": -2.0, "variance": 1.0},
        "target": {"type": "isotropic_gaussian", "shape": [8, 8], "mean": 2.0, "variance": 1.0}
    },
    "unconditional": {
        "type": "gmm",
        "weights": [0.5, 0.5],
        "components": [
            {"type": "isotropic_gaussian", "shape": [8, 8], "mean": -2.0, "variance": 1.0},
            {"type": "isotropic_gaussian", "shape": [8, 8], "mean": 2.0, "variance": 1.0}
        ]
    }
}

# Multimodal target so guided regenerations depend on the noise maps
DIVERSITY_MODEL = {
    "type": "conditional",
    "members": {
        "source": {"type": "isotropic_gaussian", "shape": [8, 8], "mean": -2.0, "variance": 1.0},
        "target": {
            "type": "gmm",
            "weights": [0.5, 0.5],
            "components": [
                {"type": "isotropic_gaussian", "shape": [8, 8], "mean": 1.0, "variance": 0.5},
                {"type": "isotropic_gaussian", "shape": [8, 8], "mean": 4.0, "variance": 0.5}
            ]
        }
    },
    "unconditional": {
        "type": "gmm",
        "weights": [0.5, 0.25, 0.25],
        "components": [
            {"type": "isotropic_gaussian", "shape": [8, 8], "mean": -2.0, "variance": 1.0},
            {"type": "isotropic_gaussian", "shape": [8, 8], "mean": 1.0, "variance": 0.5},
            {"type": "isotropic_gaussian", "shape": [8, 8], "mean": 4.0, "variance": 0.5}
        ]
    }
}

DEFAULT_EDITS_CONFIG = {
    "shift": {
        "distances": [1, 2, 4, 8],
        "axis": -1,
        "source_offset": None
    },
    "flip": {
        "axis": -1
    },
    "color": {
        "t1": 20,
        "t2": 70,
        "strengths": [0.0, 0.01, 0.05, 0.1],
        "mask": {"rows": [4, 12], "cols": [4, 12]},
        "target": 3.0
    },
    "cond_swap": {
        "source": "source",
        "target": "target",
        "strength": None,
        "t_skips": [0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
    },
    "sweep": {
        "source": "source",
        "target": "target",
        "strengths": [1.0, 2.0, 4.0],
        "t_skip_step": 5
    },
    "diversity": {
        "source": "source",
        "target": "target",
        "strength": 3.0,
        "t_skip": 0,
        "inversions": 8
    }
}

DEFAULT_EXPERIMENT_CONFIG = {
    "kind": "sample",
    "seed": 0,
    "samples": 16,
    "workers": None,
    "output_directory": "results",
    "plots": True,
    "progress": False,
    "latent": None,
    "method": "edit-friendly",
    "angle_bins": 18
}

DEFAULT_LOGGING_CONFIG = {
    "level": "INFO",
    "directory": None
}

# Combined default configuration
DEFAULT_CONFIG = {
    "experiment": DEFAULT_EXPERIMENT_CONFIG,
    "schedule": DEFAULT_SCHEDULE_CONFIG,
    "model": TOY2D_MODEL,
    "edits": DEFAULT_EDITS_CONFIG,
    "logging": DEFAULT_LOGGING_CONFIG
}

# Per-kind overrides applied on top of DEFAULT_CONFIG; "model" is replaced whole
KIND_PRESETS = {
    "sample": {},
    "invert": {"experiment": {"samples": 1}, "schedule": {"respacing": 100}},
    "reconstruct": {"experiment": {"samples": 10}, "schedule": {"respacing": 100}, "model": GMM2D_MODEL},
    "toy2d-stats": {"experiment": {"samples": 500}, "schedule": {"respacing": 40}, "model": TOY2D_MODEL},
    "noise-stats": {
        "experiment": {"samples": 100},
        "schedule": {"respacing": 100},
        "model": {**FIELD_MODEL, "shape": [16, 16]}
    },
    "shift": {"experiment": {"samples": 8}, "schedule": {"respacing": 100}, "model": FIELD_MODEL},
    "flip": {
        "experiment": {"samples": 10},
        "schedule": {"respacing": 100},
        "model": {**FIELD_MODEL, "length_scales": [4.0, 1.5], "angle_degrees": 45.0}
    },
    "color-edit": {
        "experiment": {"samples": 1},
        "schedule": {"respacing": 100},
        "model": {**FIELD_MODEL, "shape": [16, 16]}
    },
    "cond-swap": {"experiment": {"samples": 8}, "schedule": {"respacing": 100}, "model": SWAP_MODEL},
    "sweep": {"experiment": {"samples": 1}, "schedule": {"steps": 1000, "respacing": 50}, "model": SWAP_MODEL},
    "diversity": {"experiment": {"samples": 1}, "schedule": {"respacing": 100}, "model": DIVERSITY_MODEL}
}

# Constants used throughout the application
CONSTANTS = {
    "LOGGER_NAME": "core",
    "LOG_FILE_NAME": "ddpm_inversion.log",
    "MANIFEST_NAME": "manifest.json",
    "LATENT_FILE_NAME": "latent.efnz",
    "REPLACED_SECTIONS": ("model",),
    "LOG_LEVELS": ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
}
