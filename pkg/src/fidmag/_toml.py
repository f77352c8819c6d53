"""TOML reader compatible with Python 3.10 (tomli) and 3.11+ (tomllib)."""

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

load = tomllib.load
loads = tomllib.loads
