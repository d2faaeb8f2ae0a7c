"""Discrete-event simulation of intra-domain multicast-based micro-mobility.

Includes the algorithmic address mapping, CAR-set proactive handover,
a shared-tree multicast substrate, CIP and HAWAII baseline models and
the handover metrics harness.
"""

__version__ = "0.1.0"
