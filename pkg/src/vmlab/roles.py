"""Label spaces shared by every stage: dispatch kinds (main label) and block roles (sub label)."""

from __future__ import annotations

from enum import Enum


class DispatchKind(str, Enum):
    SWITCH = "SWITCH"
    DIRECT = "DIRECT"
    INDIRECT = "INDIRECT"

    def __str__(self) -> str:
        return self.value


class Role(str, Enum):
    DISPATCH_START = "DISPATCH-START"
    HANDLER = "HANDLER"
    VM = "VM"
    VM_START = "VM-START"
    VM_END = "VM-END"
    NON_VM = "NON-VM"

    def __str__(self) -> str:
        return self.value


KINDS: tuple[DispatchKind, ...] = tuple(DispatchKind)
ROLES: tuple[Role, ...] = tuple(Role)

# the four roles scored in the identification matrix, in row order
CORE_ROLES: tuple[Role, ...] = (Role.VM_START, Role.DISPATCH_START, Role.HANDLER, Role.VM_END)


def parse_kind(text: str) -> DispatchKind:
    try:
        return DispatchKind(text.strip().upper())
    except ValueError:
        raise ValueError(f"unknown dispatch kind {text!r}") from None


def parse_role(text: str) -> Role:
    try:
        return Role(text.strip().upper().replace("_", "-"))
    except ValueError:
        raise ValueError(f"unknown role {text!r}") from None
