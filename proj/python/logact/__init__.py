"""LogAct runtime bindings: typed shared-log agents.

The compiled core speaks canonical JSON strings; this wrapper turns them
into plain dicts.
"""

import json as _json

from logact._core import Bus as _Bus
from logact._core import Kernel, LogActError
from logact._core import (
    builtin_scenario as _builtin_scenario,
    crash_sweep as _crash_sweep,
    delta_of as _delta_of,
    evaluate_policy as _evaluate_policy,
    extract_intent as _extract_intent,
    parse_policy_kind as _parse_policy_kind,
    random_scenario as _random_scenario,
    role_identity as _role_identity,
    run_scenario as _run_scenario,
)

PAYLOAD_TYPES = (
    "InfIn", "InfOut", "Intent", "Vote", "Commit", "Abort", "Result", "Mail", "Policy",
)


def role_identity(role, client_id):
    return _json.loads(_role_identity(role, client_id))


class BusHandle:
    """One identity bound to one bus."""

    def __init__(self, bus, identity):
        self._bus = bus
        self._identity = _json.dumps(identity)

    def append(self, payload):
        return self._bus.append(self._identity, _json.dumps(payload))

    def read(self, start, end):
        return [_json.loads(e) for e in self._bus.read(self._identity, start, end)]

    def tail(self):
        return self._bus.tail()

    def poll(self, start, types, timeout_ms=0):
        return [
            _json.loads(e)
            for e in self._bus.poll(self._identity, start, list(types), timeout_ms)
        ]

    def close(self):
        self._bus.close()


def memory_bus(identity):
    return BusHandle(_Bus.memory(), identity)


def durable_bus(path, identity, sync="always", read_only=False):
    return BusHandle(_Bus.durable(str(path), sync, read_only), identity)


def evaluate_policy(policy, votes):
    vote_payloads = [
        v if "type" in v else {"type": "Vote", "body": v} for v in votes
    ]
    return _evaluate_policy(_json.dumps(policy), _json.dumps(vote_payloads))


def parse_policy_kind(document):
    return _parse_policy_kind(_json.dumps(document))


def extract_intent(text):
    return _json.loads(_extract_intent(text))


def delta_of(prev, next_):
    return _json.loads(_delta_of(_json.dumps(prev), _json.dumps(next_)))


def run_scenario(scenario, seed=1, keep=False):
    if not isinstance(scenario, str):
        scenario = _json.dumps(scenario)
    return _json.loads(_run_scenario(scenario, seed, keep))


def builtin_scenario(name):
    return _json.loads(_builtin_scenario(name))


def random_scenario(seed):
    return _json.loads(_random_scenario(seed))


def crash_sweep(scenario, component, seed=1):
    if not isinstance(scenario, str):
        scenario = _json.dumps(scenario)
    return _json.loads(_crash_sweep(scenario, component, seed))


__all__ = [
    "BusHandle",
    "Kernel",
    "LogActError",
    "PAYLOAD_TYPES",
    "builtin_scenario",
    "crash_sweep",
    "delta_of",
    "durable_bus",
    "evaluate_policy",
    "extract_intent",
    "memory_bus",
    "parse_policy_kind",
    "random_scenario",
    "role_identity",
    "run_scenario",
]
