"""traceatlas: traceroute campaign planning, trace parsing and
sanitization, IP geolocation, and country-level exit-point analysis."""

__version__ = "0.1.0"
