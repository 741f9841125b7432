"""
hetnetsim package initializer.

A discrete-event simulator for VoIP quality over WiFi and WiMAX subnets
joined by an IP cloud, reporting jitter, end-to-end delay and MOS.
"""

__all__ = [
    "config",
    "scheduler",
    "rng",
    "packets",
    "wifi_mac",
    "wimax_mac",
    "topology",
    "voip",
    "metrics",
    "simulation",
    "report",
]

__version__ = "0.1.0"
