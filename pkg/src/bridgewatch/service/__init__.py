from .app import ApiConfig, create_app, serve

__all__ = ["ApiConfig", "create_app", "serve"]
