"""MQTT-SN robot-swarm overlay protocol and deterministic simulator."""

__version__ = "0.1.0"
