"""RCOA allocation on the m-subnet and the algorithmic RCOA <-> MCOA mapping.

Unicast layout (high to low): FP(3) TLA(13) Rsvd(8) NLA(24) SLA(16) | interface ID(64).
Multicast layout: 0xFF(8) flags(4)=0 scope(4)=6 | reserved(48)=0 | group ID(64) = interface ID.
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field

Address128 = ipaddress.IPv6Address

LOW64 = (1 << 64) - 1
MICRO_MOBILITY_SCOPE = 0x6
MCOA_TAG = 0xFF06  # 0xFF, flags 0000, scope 0110
SITE_LOCAL_TAG = 0xFF05
# site-local control groups live under FF05::C:0:0:<head>, disjoint from FF06::/16
CGA_BASE = (SITE_LOCAL_TAG << 112) | (0xC << 64)
ROUTER_BASE_DEFAULT = "2001:db8:0:1::/64"


class AddressError(Exception):
    pass


class DuplicateAddress(AddressError):
    pass


class NotMicroMobilityScope(AddressError):
    pass


def addr(value: int | str | Address128) -> Address128:
    return ipaddress.IPv6Address(value) if not isinstance(value, ipaddress.IPv6Address) else value


@dataclass(frozen=True)
class MSubnetPrefix:
    """The 64 high-order bits shared by every RCOA in the domain."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits <= LOW64:
            raise ValueError("prefix must fit in 64 bits")

    @classmethod
    def from_fields(cls, tla: int, nla: int, sla: int, rsvd: int = 0, fp: int = 0b001) -> MSubnetPrefix:
        for name, value, width in (("fp", fp, 3), ("tla", tla, 13), ("rsvd", rsvd, 8),
                                   ("nla", nla, 24), ("sla", sla, 16)):
            if not 0 <= value < (1 << width):
                raise ValueError(f"{name}={value:#x} does not fit in {width} bits")
        return cls((fp << 61) | (tla << 48) | (rsvd << 40) | (nla << 16) | sla)

    @classmethod
    def parse(cls, text: str, sla: int | None = None) -> MSubnetPrefix:
        """Accepts a /64 (or shorter, then `sla` fills bits 48..63) in CIDR text."""
        net = ipaddress.IPv6Network(text, strict=True)
        bits = int(net.network_address) >> 64
        if net.prefixlen > 64:
            raise ValueError(f"{text}: m-subnet prefix cannot be longer than /64")
        if sla is not None:
            if net.prefixlen > 48:
                raise ValueError(f"{text}: SLA override needs a /48 or shorter")
            if not 0 <= sla <= 0xFFFF:
                raise ValueError(f"sla={sla:#x} does not fit in 16 bits")
            bits |= sla
        return cls(bits)

    @property
    def sla(self) -> int:
        return self.bits & 0xFFFF

    def contains(self, address: Address128) -> bool:
        return int(address) >> 64 == self.bits

    def join(self, iface: int) -> Address128:
        return ipaddress.IPv6Address((self.bits << 64) | (iface & LOW64))

    def __str__(self):
        return f"{ipaddress.IPv6Address(self.bits << 64)}/64"


DEFAULT_PREFIX = MSubnetPrefix.parse("2001:db8::/48", sla=0xFFFF)


@dataclass
class AddressRegistry:
    allocated: dict[int, int] = field(default_factory=dict)  # interface id -> owning node

    def __contains__(self, iface: int) -> bool:
        return iface in self.allocated

    def __len__(self):
        return len(self.allocated)

    def release(self, iface: int):
        self.allocated.pop(iface, None)


def allocate_rcoa(registry: AddressRegistry, mn: int, iface: int, prefix: MSubnetPrefix) -> Address128:
    """Duplicate detection happens here, once, at domain entry."""
    if not 0 <= iface <= LOW64:
        raise ValueError(f"interface id {iface:#x} does not fit in 64 bits")
    if iface in registry.allocated:
        raise DuplicateAddress(f"interface id {iface:#018x} already held by node {registry.allocated[iface]}")
    registry.allocated[iface] = mn
    return prefix.join(iface)


def map_rcoa_to_mcoa(rcoa: Address128) -> Address128:
    return ipaddress.IPv6Address((MCOA_TAG << 112) | (int(rcoa) & LOW64))


def is_mcoa(address: Address128) -> bool:
    return int(address) >> 112 == MCOA_TAG


def scope_of(address: Address128) -> int:
    return (int(address) >> 112) & 0xF


def map_mcoa_to_rcoa(mcoa: Address128, prefix: MSubnetPrefix) -> Address128:
    if not is_mcoa(mcoa):
        raise NotMicroMobilityScope(f"{mcoa} is not a micro-mobility scoped group (top bits {int(mcoa) >> 112:#06x})")
    # reserved bits 64..111 are ignored
    return prefix.join(int(mcoa) & LOW64)


def cga_for(head: int) -> Address128:
    """Site-local control group of the CAR-set headed by AR `head`."""
    return ipaddress.IPv6Address(CGA_BASE | head)


def router_address(node: int, base: str = ROUTER_BASE_DEFAULT) -> Address128:
    net = ipaddress.IPv6Network(base)
    return net.network_address + node
