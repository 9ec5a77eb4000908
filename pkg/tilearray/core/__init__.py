__all__ = ["ioc", "module"]
