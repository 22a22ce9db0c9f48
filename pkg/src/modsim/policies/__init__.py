"""Admission / scheduling policies and a name registry."""

from .base import Policy, default_beta, maxweight
from .contextual import (Colbacid, GroupPartition, RidgeState, b_delta, contextual_conf,
                         make_partition)
from .known import (AIOnly, Bacid, BacidParams, ConfigurationError, Dynamic, HumanOnly, Static,
                    Threshold)
from .learning import BacidUCB, ConfBounds, OLBacid, TypeStats, conf_bounds

REGISTRY = {
    "ai_only": AIOnly,
    "human_only": HumanOnly,
    "static": Static,
    "dynamic": Dynamic,
    "bacid": Bacid,
    "bacid_ucb": BacidUCB,
    "olbacid": OLBacid,
    "colbacid": Colbacid,
    "threshold": Threshold,
}


def make_policy(name: str, **params) -> Policy:
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise ConfigurationError(f"unknown policy {name!r}") from None
    try:
        return cls(**params)
    except TypeError as e:
        raise ConfigurationError(f"bad parameters for {name}: {e}") from None


__all__ = [
    "Policy", "maxweight", "default_beta", "make_policy", "REGISTRY", "ConfigurationError",
    "AIOnly", "HumanOnly", "Static", "Dynamic", "Bacid", "BacidParams", "Threshold",
    "BacidUCB", "OLBacid", "TypeStats", "ConfBounds", "conf_bounds",
    "Colbacid", "RidgeState", "GroupPartition", "b_delta", "contextual_conf", "make_partition",
]
