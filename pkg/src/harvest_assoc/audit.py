"""Independent replay of a simulator event log.

The auditor never calls into the simulator.  It reads the ``alloc`` records
and cell broadcasts and re-derives every tracked reward from the logged
required energy, cap and residual.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable


@dataclass
class AuditReport:
    checked: int = 0
    served: int = 0
    denied_head: int = 0
    denied_behind: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def parse_payload(payload: str) -> dict:
    if not payload:
        return {}
    return dict(part.split("=", 1) for part in payload.split(";"))


def _rows(events) -> Iterable[tuple[float, str, str, str]]:
    for ev in events:
        if isinstance(ev, (tuple, list)):
            t, entity, kind, payload = ev
        else:
            t, entity, kind, payload = ev.time, ev.entity, ev.kind, ev.payload
        yield float(t), entity, kind, payload


def read_event_log(text: str) -> dict[str, list[tuple[float, str, str, str]]]:
    """Rows of an ``events.csv`` grouped by replication, in file order.

    A log without a ``replication`` column is returned under key ``"0"``.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header == ["time", "entity", "kind", "payload"]:
        return {"0": [(float(t), e, k, p) for t, e, k, p in reader]}
    if header != ["replication", "time", "entity", "kind", "payload"]:
        raise ValueError(f"unexpected event log header {header!r}")
    groups: dict[str, list] = {}
    for rep, t, e, k, p in reader:
        groups.setdefault(rep, []).append((float(t), e, k, p))
    return groups


def audit_events(events) -> AuditReport:
    """Check every tracked allocation against the two success conditions.

    A served request must have ``q <= q_max`` and ``residual_before >= q``.
    A request denied at the head must have failed both full and capped
    service.  A request denied without a required-energy value stood behind
    such a head, so the same active period must already hold a denial or an
    exhausted background head.
    """
    rep = AuditReport()
    blocked: dict[str, bool] = {}
    last_residual: dict[str, float] = {}
    for t, entity, kind, payload in _rows(events):
        if entity.startswith("sbs"):
            if kind in ("active", "inactive"):
                blocked[entity] = False
                last_residual.pop(entity, None)
            elif kind == "exhausted":
                blocked[entity] = True
            continue
        if kind != "alloc":
            continue
        p = parse_payload(payload)
        cell = f"sbs{p['sbs']}"
        q, q_max, res = float(p["q"]), float(p["q_max"]), float(p["residual_before"])
        reward, outcome = float(p["reward"]), p["outcome"]
        rep.checked += 1
        where = f"t={t!r} {entity} trial={p['trial']} {cell}"
        if cell in last_residual and res > last_residual[cell] + 1e-9 * max(1.0, res):
            rep.violations.append(f"{where}: residual grew within an active period")
        last_residual[cell] = res
        if math.isnan(q):
            rep.denied_behind += 1
            if outcome != "denied" or reward != 0.0:
                rep.violations.append(f"{where}: no required energy yet outcome {outcome} reward {reward:g}")
            if not blocked.get(cell, False):
                rep.violations.append(f"{where}: denied behind a head that was never refused")
            continue
        success = q <= q_max and res >= q
        if reward != (1.0 if success else 0.0):
            rep.violations.append(f"{where}: reward {reward:g} but success conditions give {success}")
        if outcome == "served":
            rep.served += 1
            if not success:
                rep.violations.append(f"{where}: served without meeting the success conditions")
        elif outcome == "served_degraded":
            if not (q > q_max and res >= q_max):
                rep.violations.append(f"{where}: capped service outside its conditions")
        elif outcome == "denied":
            rep.denied_head += 1
            blocked[cell] = True
            if success or (q > q_max and res >= q_max):
                rep.violations.append(f"{where}: denied although service was affordable")
        else:
            rep.violations.append(f"{where}: unknown outcome {outcome!r}")
    return rep
