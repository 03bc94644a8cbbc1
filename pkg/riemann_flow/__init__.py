"""Riemannian flow matching for graph domain adaptation."""

__version__ = "0.1.0"

__all__ = [
    "autodiff",
    "cli",
    "config",
    "datasets",
    "diagnostics",
    "dynamics",
    "encoder",
    "errors",
    "flow",
    "kernels",
    "losses",
    "manifold",
    "nn",
    "polar",
    "schemas",
    "train",
    "trig",
]
