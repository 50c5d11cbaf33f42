"""Discrete-event MANET simulator: DSDV, DSR and AODV over Random Walk / Random Waypoint."""

__version__ = "0.1.0"
