from .server import ModelHost, ShimConfig, create_app, load_host

__all__ = ["ModelHost", "ShimConfig", "create_app", "load_host"]

__version__ = "0.1.0"
