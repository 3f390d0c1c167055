"""Structural identification of VM components from the CFG alone.

The dispatcher is the first block (layout order) with the maximum out-degree.
Its region is its strongly connected component plus its direct successors.
Inside the region, blocks that leave it (or end the function) are VM-END,
other dispatcher successors are handlers and the rest are interior VM
blocks. Dispatcher predecessors outside the region are VM-START.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cfg import Cfg, predecessors, scc_of
from .errors import NoDispatcher, ValidationError
from .roles import CORE_ROLES, Role

RoleMap = dict[int, Role]


@dataclass(frozen=True)
class LabelerParams:
    min_fanout: int = 3

    def __post_init__(self) -> None:
        if self.min_fanout < 2:
            raise ValueError(f"min_fanout must be >= 2, got {self.min_fanout}")


DEFAULT_PARAMS = LabelerParams()


def identify_dispatcher(cfg: Cfg, params: LabelerParams = DEFAULT_PARAMS) -> int:
    candidate, max_succs = None, 0
    for bb in cfg.blocks:
        n = len(bb.succs)
        if n > max_succs:
            max_succs, candidate = n, bb.id
    if candidate is None or max_succs < params.min_fanout:
        raise NoDispatcher(f"{cfg.name}: max out-degree {max_succs} below {params.min_fanout}")
    return candidate


def vm_region(cfg: Cfg, dispatcher: int) -> frozenset[int]:
    return scc_of(cfg, dispatcher) | set(cfg.successors(dispatcher))


def label_structures(cfg: Cfg, params: LabelerParams = DEFAULT_PARAMS) -> RoleMap:
    roles = {b.id: Role.NON_VM for b in cfg.blocks}
    try:
        disp = identify_dispatcher(cfg, params)
    except NoDispatcher:
        return roles
    region = vm_region(cfg, disp)
    direct = set(cfg.successors(disp))
    for bid in region:
        if bid == disp:
            roles[bid] = Role.DISPATCH_START
            continue
        succs = cfg.successors(bid)
        if not succs or any(s not in region for s in succs):
            roles[bid] = Role.VM_END
        elif bid in direct:
            roles[bid] = Role.HANDLER
        else:
            roles[bid] = Role.VM
    for bid in predecessors(cfg, disp):
        if bid not in region:
            roles[bid] = Role.VM_START
    return roles


def check_role_map(cfg: Cfg, roles: RoleMap) -> None:
    """Raise ValidationError unless ``roles`` is total and respects the dispatcher invariants."""
    missing = [b.id for b in cfg.blocks if b.id not in roles]
    if missing:
        raise ValidationError(f"role map misses blocks {missing}")
    dispatchers = [b for b, r in roles.items() if r is Role.DISPATCH_START]
    if len(dispatchers) > 1:
        raise ValidationError(f"several dispatchers: {dispatchers}")
    handlers = {b for b, r in roles.items() if r is Role.HANDLER}
    allowed = set(cfg.successors(dispatchers[0])) if dispatchers else set()
    if not handlers <= allowed:
        raise ValidationError(f"handlers {sorted(handlers - allowed)} are not dispatcher successors")


@dataclass(frozen=True)
class DetectionRow:
    detected: dict[Role, bool] = field(default_factory=dict)

    def __getitem__(self, role: Role) -> bool:
        return self.detected[role]

    def mark(self, role: Role) -> str:
        return "✓" if self.detected[role] else "✗"

    def summary(self) -> str:
        return "  ".join(f"{role.value}={self.mark(role)}" for role in CORE_ROLES)


def score_against_truth(pred: RoleMap, artifact) -> DetectionRow:
    """Per core role: predicted set non-empty, all predicted blocks purely that role, all pure ones found."""
    detected = {}
    for role in CORE_ROLES:
        predicted = {b for b, r in pred.items() if r is role}
        pure_truth = {b for b in artifact.truth if artifact.block_role(b) is role}
        detected[role] = bool(predicted) and predicted == pure_truth
    return DetectionRow(detected)
