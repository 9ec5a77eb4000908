__all__ = ["policy", "analytic"]
